#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include <json.hpp>

#include "cart/ot.hpp"

namespace cart {

/// One applied op in server order. `op.base_revision` is `revision - 1`.
struct LogEntry {
  Revision revision = 0;
  AuthorId author = kSystemAuthor;
  EditOp op;
  std::int64_t server_time_ms = 0;
};

inline nlohmann::json to_json(const LogEntry& e) {
  return nlohmann::json{{"revision", e.revision},
                        {"author", e.author},
                        {"components", components_to_json(e.op)},
                        {"server_time_ms", e.server_time_ms}};
}

inline LogEntry log_entry_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("revision") || !j.contains("author") || !j.contains("components") ||
      !j["revision"].is_number_unsigned() || !j["author"].is_number_unsigned()) {
    throw Error(ErrorCode::MalformedOp, "bad op log record " + j.dump());
  }
  LogEntry e;
  e.revision = j["revision"].get<Revision>();
  if (e.revision == 0) throw Error(ErrorCode::MalformedOp, "op log revisions start at 1");
  e.author = j["author"].get<AuthorId>();
  e.op = op_from_json(j["components"], e.revision - 1);
  if (j.contains("server_time_ms")) e.server_time_ms = j["server_time_ms"].get<std::int64_t>();
  return e;
}

inline std::string to_ndjson(const std::vector<LogEntry>& log) {
  std::string out;
  for (const auto& e : log) {
    out += to_json(e).dump();
    out.push_back('\n');
  }
  return out;
}

inline std::vector<LogEntry> parse_ndjson_log(std::string_view text) {
  std::vector<LogEntry> log;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty() || line == "\r") continue;
    try {
      log.push_back(log_entry_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedOp, std::string("op log line is not JSON: ") + e.what());
    }
  }
  return log;
}

/// Rebuilds the document by applying every logged op from an empty doc.
inline AttributedDoc replay_log(const std::vector<LogEntry>& log) {
  AttributedDoc doc;
  for (const auto& e : log) {
    if (e.revision != doc.revision + 1) throw Error(ErrorCode::RevisionMismatch, "op log is not contiguous");
    doc = apply(doc, e.op);
  }
  return doc;
}

/// Concatenation of everything the system inserted, in log order: the
/// transcript as it would read without any human edit.
inline std::string system_stream(const std::vector<LogEntry>& log) {
  std::u32string out;
  for (const auto& e : log) {
    for (const auto& c : e.op.components()) {
      if (auto* ins = std::get_if<Insert>(&c); ins && ins->author == kSystemAuthor) out += ins->text;
    }
  }
  return utf8::encode(out);
}

/// Authoritative document plus its op log. Ops from clients are transformed
/// against everything applied since their base revision.
class DocumentServer {
 public:
  static constexpr std::size_t kDefaultHistory = 10'000;

  explicit DocumentServer(std::size_t history_limit = kDefaultHistory) : history_limit_(history_limit) {}

  const AttributedDoc& doc() const { return doc_; }
  const std::vector<LogEntry>& log() const { return log_; }
  std::size_t conflicts() const { return conflicts_; }
  std::size_t concurrent_pairs() const { return concurrent_pairs_; }

  /// Applies an op authored on the server at the current revision.
  const LogEntry& apply_local(const EditOp& op, AuthorId author, std::int64_t now_ms) {
    return commit(op, author, now_ms);
  }

  /// Transforms a client op up to the current revision and applies it.
  const LogEntry& receive(const EditOp& op, AuthorId author, std::int64_t now_ms) {
    if (op.base_revision > doc_.revision) throw Error(ErrorCode::MalformedOp, "op is based on a future revision");
    if (doc_.revision - op.base_revision > history_limit_ || op.base_revision < first_retained()) {
      throw Error(ErrorCode::RevisionTooOld, "op base " + std::to_string(op.base_revision) + " is beyond history");
    }
    EditOp current = op;
    for (Revision r = op.base_revision + 1; r <= doc_.revision; ++r) {
      const auto& past = log_[r - 1];
      if (current.base_length() != past.op.base_length()) {
        throw Error(ErrorCode::MalformedOp, "op does not match the document at its base revision");
      }
      if (past.author != kSystemAuthor && past.author != author) {
        ++concurrent_pairs_;
        const auto mine = current.touched_range();
        const auto theirs = past.op.touched_range();
        if (mine && theirs && mine->first <= theirs->second && theirs->first <= mine->second) ++conflicts_;
      }
      current = transform(current, past.op).first;
    }
    return commit(current, author, now_ms);
  }

 private:
  Revision first_retained() const {
    return doc_.revision > history_limit_ ? doc_.revision - history_limit_ : 0;
  }

  const LogEntry& commit(const EditOp& op, AuthorId author, std::int64_t now_ms) {
    if (op.base_length() != doc_.size()) {
      throw Error(ErrorCode::MalformedOp, "op spans " + std::to_string(op.base_length()) + " chars, doc has " +
                                              std::to_string(doc_.size()));
    }
    EditOp applied = op;
    applied.base_revision = doc_.revision;
    doc_ = apply(doc_, applied);
    log_.push_back(LogEntry{doc_.revision, author, std::move(applied), now_ms});
    return log_.back();
  }

  std::size_t history_limit_;
  AttributedDoc doc_;
  std::vector<LogEntry> log_;
  std::size_t conflicts_ = 0;
  std::size_t concurrent_pairs_ = 0;
};

}  // namespace cart
