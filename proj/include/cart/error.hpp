#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cart {

enum class ErrorCode {
  InvalidInput,
  EmptyReference,
  RevisionMismatch,
  SpanOverflow,
  RevisionTooOld,
  MalformedOp,
  InvalidConfig,
  NotEnoughUsers,
  AlreadyRunning,
  AlreadyFinished,
  NotRunning,
  UnknownUser,
  WrongGroupSize,
  NonContiguousParagraph,
  TargetUnreachable,
  UnknownSession,
  SessionFull,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::RevisionMismatch: return "RevisionMismatch";
    case ErrorCode::SpanOverflow: return "SpanOverflow";
    case ErrorCode::RevisionTooOld: return "RevisionTooOld";
    case ErrorCode::MalformedOp: return "MalformedOp";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NotEnoughUsers: return "NotEnoughUsers";
    case ErrorCode::AlreadyRunning: return "AlreadyRunning";
    case ErrorCode::AlreadyFinished: return "AlreadyFinished";
    case ErrorCode::NotRunning: return "NotRunning";
    case ErrorCode::UnknownUser: return "UnknownUser";
    case ErrorCode::WrongGroupSize: return "WrongGroupSize";
    case ErrorCode::NonContiguousParagraph: return "NonContiguousParagraph";
    case ErrorCode::TargetUnreachable: return "TargetUnreachable";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::SessionFull: return "SessionFull";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code so
/// the session layer can map it onto a wire-level error message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cart
