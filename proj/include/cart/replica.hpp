#pragma once

#include <optional>
#include <utility>

#include "cart/ot.hpp"

namespace cart {

/// Client side of the central-server protocol: local edits apply at once,
/// at most one op is in flight, and later local edits are composed into a
/// buffer until the server acknowledges the outstanding op.
class ClientReplica {
 public:
  ClientReplica() = default;
  ClientReplica(AttributedDoc snapshot, AuthorId self) : doc_(std::move(snapshot)), self_(self), server_revision_(doc_.revision) {}

  const AttributedDoc& doc() const { return doc_; }
  AuthorId self() const { return self_; }
  Revision server_revision() const { return server_revision_; }
  bool has_outstanding() const { return outstanding_.has_value(); }
  bool has_buffer() const { return buffer_.has_value(); }
  const std::optional<EditOp>& outstanding() const { return outstanding_; }

  /// Applies a local edit built against the current local document. Returns
  /// the op to send when nothing else is in flight.
  std::optional<EditOp> local_edit(EditOp op) {
    doc_ = apply(doc_, op, RevisionCheck::Ignore);
    op.base_revision = server_revision_;
    if (!outstanding_) {
      outstanding_ = op;
      return op;
    }
    if (buffer_) {
      buffer_ = detail::compose_components(*buffer_, op);
    } else {
      buffer_ = std::move(op);
    }
    return std::nullopt;
  }

  /// Server confirmed the outstanding op as `revision`. Returns the buffered
  /// op to send next, if any.
  std::optional<EditOp> on_ack(Revision revision) {
    if (!outstanding_) throw Error(ErrorCode::MalformedOp, "ack without an outstanding op");
    server_revision_ = revision;
    outstanding_.reset();
    if (buffer_) {
      outstanding_ = std::move(buffer_);
      buffer_.reset();
      outstanding_->base_revision = server_revision_;
      return outstanding_;
    }
    return std::nullopt;
  }

  /// A foreign op the server applied as `revision`, expressed against the
  /// previous server revision. Returns the op as applied locally.
  EditOp on_remote(const EditOp& server_op, Revision revision) {
    EditOp incoming = server_op;
    if (outstanding_) {
      auto [out2, in2] = detail::transform_components(*outstanding_, incoming);
      outstanding_ = std::move(out2);
      incoming = std::move(in2);
    }
    if (buffer_) {
      auto [buf2, in3] = detail::transform_components(*buffer_, incoming);
      buffer_ = std::move(buf2);
      incoming = std::move(in3);
    }
    doc_ = apply(doc_, incoming, RevisionCheck::Ignore);
    server_revision_ = revision;
    if (outstanding_) outstanding_->base_revision = server_revision_;
    return incoming;
  }

  /// Replaces local state with a server snapshot (after RevisionTooOld).
  void resync(AttributedDoc snapshot) {
    doc_ = std::move(snapshot);
    server_revision_ = doc_.revision;
    outstanding_.reset();
    buffer_.reset();
  }

 private:
  AttributedDoc doc_;
  AuthorId self_ = 0;
  Revision server_revision_ = 0;
  std::optional<EditOp> outstanding_;
  std::optional<EditOp> buffer_;
};

}  // namespace cart
