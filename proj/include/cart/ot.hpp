#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cart/error.hpp"
#include "cart/transcript.hpp"
#include "cart/utf8.hpp"

namespace cart {

using AuthorId = std::uint32_t;
using Revision = std::uint64_t;

/// The ASR injector. Never assigned to a human editor.
inline constexpr AuthorId kSystemAuthor = 0;

/// Paragraph separator written by the injector.
inline constexpr char32_t kParagraphSeparator = U'\n';

struct Retain {
  std::size_t n;
  friend bool operator==(const Retain&, const Retain&) = default;
};
struct Insert {
  std::u32string text;
  AuthorId author;
  friend bool operator==(const Insert&, const Insert&) = default;
};
struct Delete {
  std::size_t n;
  friend bool operator==(const Delete&, const Delete&) = default;
};

using Component = std::variant<Retain, Insert, Delete>;

/// A retain/insert/delete sequence against one base revision. The builder
/// methods keep the canonical form: no empty components, adjacent components
/// of the same kind (and author) merged, and an insert never directly after
/// a delete.
class EditOp {
 public:
  EditOp() = default;
  explicit EditOp(Revision base) : base_revision(base) {}

  Revision base_revision = 0;

  EditOp& retain(std::size_t n) {
    if (n == 0) return *this;
    if (!components_.empty()) {
      if (auto* r = std::get_if<Retain>(&components_.back())) {
        r->n += n;
        return *this;
      }
    }
    components_.push_back(Retain{n});
    return *this;
  }

  EditOp& insert(std::u32string_view text, AuthorId author) {
    if (text.empty()) return *this;
    // keep inserts ahead of a trailing delete
    std::size_t at = components_.size();
    if (at > 0 && std::holds_alternative<Delete>(components_[at - 1])) --at;
    if (at > 0) {
      if (auto* ins = std::get_if<Insert>(&components_[at - 1]); ins && ins->author == author) {
        ins->text += text;
        return *this;
      }
    }
    components_.insert(components_.begin() + static_cast<std::ptrdiff_t>(at), Insert{std::u32string(text), author});
    return *this;
  }

  EditOp& insert(std::string_view utf8_text, AuthorId author) { return insert(std::u32string_view(utf8::decode(utf8_text)), author); }

  EditOp& del(std::size_t n) {
    if (n == 0) return *this;
    if (!components_.empty()) {
      if (auto* d = std::get_if<Delete>(&components_.back())) {
        d->n += n;
        return *this;
      }
    }
    components_.push_back(Delete{n});
    return *this;
  }

  EditOp& append(const Component& c) {
    std::visit([this](const auto& v) {
      using T = std::decay_t<decltype(v)>;
      if constexpr (std::is_same_v<T, Retain>) retain(v.n);
      else if constexpr (std::is_same_v<T, Insert>) insert(std::u32string_view(v.text), v.author);
      else del(v.n);
    }, c);
    return *this;
  }

  const std::vector<Component>& components() const { return components_; }

  /// Document length the op applies to.
  std::size_t base_length() const {
    std::size_t n = 0;
    for (const auto& c : components_) {
      if (auto* r = std::get_if<Retain>(&c)) n += r->n;
      else if (auto* d = std::get_if<Delete>(&c)) n += d->n;
    }
    return n;
  }

  /// Document length after applying the op.
  std::size_t target_length() const {
    std::size_t n = 0;
    for (const auto& c : components_) {
      if (auto* r = std::get_if<Retain>(&c)) n += r->n;
      else if (auto* i = std::get_if<Insert>(&c)) n += i->text.size();
    }
    return n;
  }

  bool is_noop() const {
    return std::all_of(components_.begin(), components_.end(), [](const Component& c) { return std::holds_alternative<Retain>(c); });
  }

  /// Author of the first insert, or nullopt for pure retains/deletes.
  std::optional<AuthorId> insert_author() const {
    for (const auto& c : components_) {
      if (auto* i = std::get_if<Insert>(&c)) return i->author;
    }
    return std::nullopt;
  }

  /// Range [begin, end) of base positions the op touches; nullopt for no-ops.
  std::optional<std::pair<std::size_t, std::size_t>> touched_range() const {
    std::size_t pos = 0;
    std::optional<std::size_t> first;
    std::size_t last = 0;
    for (const auto& c : components_) {
      if (auto* r = std::get_if<Retain>(&c)) {
        pos += r->n;
      } else if (auto* d = std::get_if<Delete>(&c)) {
        if (!first) first = pos;
        pos += d->n;
        last = pos;
      } else {
        if (!first) first = pos;
        last = std::max(last, pos);
      }
    }
    if (!first) return std::nullopt;
    return std::make_pair(*first, last);
  }

  friend bool operator==(const EditOp&, const EditOp&) = default;

 private:
  std::vector<Component> components_;
};

/// Server-authoritative document with per-character attribution.
struct AttributedDoc {
  std::u32string text;
  std::vector<AuthorId> authors;  // parallel to text
  Revision revision = 0;
  std::size_t injection_cursor = 0;

  std::size_t size() const { return text.size(); }
  std::string utf8() const { return utf8::encode(text); }
  friend bool operator==(const AttributedDoc&, const AttributedDoc&) = default;
};

enum class RevisionCheck { Strict, Ignore };

/// Applies `op`. Inserts before the injection cursor shift it; a system insert
/// exactly at the cursor moves it past the inserted text, while a user insert
/// there leaves it in place so the next ASR word lands right after the
/// previous one.
inline AttributedDoc apply(const AttributedDoc& doc, const EditOp& op, RevisionCheck check = RevisionCheck::Strict) {
  if (check == RevisionCheck::Strict && op.base_revision != doc.revision) {
    throw Error(ErrorCode::RevisionMismatch,
                "op base " + std::to_string(op.base_revision) + " vs doc " + std::to_string(doc.revision));
  }
  if (op.base_length() != doc.size()) {
    throw Error(ErrorCode::SpanOverflow,
                "op spans " + std::to_string(op.base_length()) + " chars, doc has " + std::to_string(doc.size()));
  }
  AttributedDoc out;
  out.text.reserve(op.target_length());
  out.authors.reserve(op.target_length());
  out.revision = doc.revision + 1;
  std::size_t pos = 0;
  std::size_t cursor = doc.injection_cursor;
  std::size_t shift_plus = 0;
  std::size_t shift_minus = 0;
  for (const auto& c : op.components()) {
    if (auto* r = std::get_if<Retain>(&c)) {
      out.text.append(doc.text, pos, r->n);
      out.authors.insert(out.authors.end(), doc.authors.begin() + static_cast<std::ptrdiff_t>(pos),
                         doc.authors.begin() + static_cast<std::ptrdiff_t>(pos + r->n));
      pos += r->n;
    } else if (auto* ins = std::get_if<Insert>(&c)) {
      out.text += ins->text;
      out.authors.insert(out.authors.end(), ins->text.size(), ins->author);
      if (pos < cursor || (pos == cursor && ins->author == kSystemAuthor)) shift_plus += ins->text.size();
    } else {
      const auto n = std::get<Delete>(c).n;
      if (pos < cursor) shift_minus += std::min(n, cursor - pos);
      pos += n;
    }
  }
  out.injection_cursor = cursor + shift_plus - shift_minus;
  return out;
}

namespace detail {

// Cursor over an op's components that hands out pieces of at most `n`.
class ComponentReader {
 public:
  explicit ComponentReader(const EditOp& op) : comps_(op.components()) {}

  bool done() const { return index_ >= comps_.size(); }
  const Component& peek() const { return comps_[index_]; }

  std::size_t remaining() const {
    const auto& c = comps_[index_];
    if (auto* r = std::get_if<Retain>(&c)) return r->n - offset_;
    if (auto* d = std::get_if<Delete>(&c)) return d->n - offset_;
    return std::get<Insert>(c).text.size() - offset_;
  }

  bool is_retain() const { return !done() && std::holds_alternative<Retain>(peek()); }
  bool is_insert() const { return !done() && std::holds_alternative<Insert>(peek()); }
  bool is_delete() const { return !done() && std::holds_alternative<Delete>(peek()); }

  Component take(std::size_t n) {
    const auto& c = comps_[index_];
    Component piece = c;
    if (auto* r = std::get_if<Retain>(&c)) {
      piece = Retain{std::min(n, r->n - offset_)};
    } else if (auto* d = std::get_if<Delete>(&c)) {
      piece = Delete{std::min(n, d->n - offset_)};
    } else {
      const auto& ins = std::get<Insert>(c);
      piece = Insert{ins.text.substr(offset_, n), ins.author};
    }
    const std::size_t taken = std::min(n, remaining());
    offset_ += taken;
    if (offset_ == total()) {
      ++index_;
      offset_ = 0;
    }
    return piece;
  }

  Component take_all() { return take(remaining()); }

 private:
  std::size_t total() const {
    const auto& c = comps_[index_];
    if (auto* r = std::get_if<Retain>(&c)) return r->n;
    if (auto* d = std::get_if<Delete>(&c)) return d->n;
    return std::get<Insert>(c).text.size();
  }

  const std::vector<Component>& comps_;
  std::size_t index_ = 0;
  std::size_t offset_ = 0;
};

inline std::pair<EditOp, EditOp> transform_components(const EditOp& a, const EditOp& b) {
  if (a.base_length() != b.base_length()) {
    throw Error(ErrorCode::MalformedOp, "concurrent ops disagree on document length");
  }
  EditOp a2, b2;
  ComponentReader ra(a), rb(b);
  while (!ra.done() || !rb.done()) {
    // Concurrent inserts at one position: lower author id goes first; on a
    // tie the left operand goes first.
    if (ra.is_insert() && (!rb.is_insert() || std::get<Insert>(ra.peek()).author <= std::get<Insert>(rb.peek()).author)) {
      const auto piece = ra.take_all();
      const auto len = std::get<Insert>(piece).text.size();
      a2.append(piece);
      b2.retain(len);
      continue;
    }
    if (rb.is_insert()) {
      const auto piece = rb.take_all();
      const auto len = std::get<Insert>(piece).text.size();
      a2.retain(len);
      b2.append(piece);
      continue;
    }
    if (ra.done() || rb.done()) throw Error(ErrorCode::MalformedOp, "transform ran past the end of an op");
    const std::size_t n = std::min(ra.remaining(), rb.remaining());
    if (ra.is_retain() && rb.is_retain()) {
      ra.take(n);
      rb.take(n);
      a2.retain(n);
      b2.retain(n);
    } else if (ra.is_delete() && rb.is_delete()) {
      ra.take(n);
      rb.take(n);
    } else if (ra.is_delete()) {
      ra.take(n);
      rb.take(n);
      a2.del(n);
    } else {
      ra.take(n);
      rb.take(n);
      b2.del(n);
    }
  }
  return {std::move(a2), std::move(b2)};
}

inline EditOp compose_components(const EditOp& first, const EditOp& second) {
  if (first.target_length() != second.base_length()) {
    throw Error(ErrorCode::MalformedOp, "second op does not apply to the result of the first");
  }
  EditOp out;
  ComponentReader r1(first), r2(second);
  while (!r1.done() || !r2.done()) {
    if (r1.is_delete()) {
      out.append(r1.take_all());
      continue;
    }
    if (r2.is_insert()) {
      out.append(r2.take_all());
      continue;
    }
    if (r1.done() || r2.done()) throw Error(ErrorCode::MalformedOp, "compose ran past the end of an op");
    const std::size_t n = std::min(r1.remaining(), r2.remaining());
    if (r1.is_retain() && r2.is_retain()) {
      r1.take(n);
      r2.take(n);
      out.retain(n);
    } else if (r1.is_retain() && r2.is_delete()) {
      r1.take(n);
      r2.take(n);
      out.del(n);
    } else if (r1.is_insert() && r2.is_delete()) {
      r1.take(n);
      r2.take(n);
    } else {  // insert then retain
      out.append(r1.take(n));
      r2.take(n);
    }
  }
  return out;
}

}  // namespace detail

/// Returns (a', b') such that apply(apply(d, a), b') == apply(apply(d, b), a').
inline std::pair<EditOp, EditOp> transform(const EditOp& a, const EditOp& b) {
  if (a.base_revision != b.base_revision) {
    throw Error(ErrorCode::RevisionMismatch, "transform needs ops against the same revision");
  }
  auto [a2, b2] = detail::transform_components(a, b);
  a2.base_revision = a.base_revision + 1;
  b2.base_revision = b.base_revision + 1;
  return {std::move(a2), std::move(b2)};
}

/// One op equivalent to applying `first` then `second`.
inline EditOp compose(const EditOp& first, const EditOp& second) {
  if (second.base_revision != first.base_revision + 1) {
    throw Error(ErrorCode::RevisionMismatch, "compose needs consecutive revisions");
  }
  auto out = detail::compose_components(first, second);
  out.base_revision = first.base_revision;
  return out;
}

/// Maps a document position through `op`. With `stick_right`, an insert at
/// exactly `pos` pushes the position along (use for range starts); otherwise
/// it stays put (use for range ends and carets typed at the end).
inline std::size_t transform_index(const EditOp& op, std::size_t pos, bool stick_right) {
  std::size_t base = 0;
  std::size_t out = pos;
  for (const auto& c : op.components()) {
    if (base > pos) break;
    if (auto* r = std::get_if<Retain>(&c)) {
      base += r->n;
    } else if (auto* ins = std::get_if<Insert>(&c)) {
      if (base < pos || (base == pos && stick_right)) out += ins->text.size();
    } else {
      const auto n = std::get<Delete>(c).n;
      if (base < pos) out -= std::min(n, pos - base);
      base += n;
    }
  }
  return out;
}

/// Op that appends an ASR word at the injection cursor, attributed to the
/// system. The word is preceded by a single space, by a paragraph separator
/// when it opens a new paragraph, or by nothing at the start of the document
/// or right after a separator.
inline EditOp inject_word(const AttributedDoc& doc, const TimedWord& word, bool starts_paragraph = false) {
  if (word.text.empty()) throw Error(ErrorCode::InvalidInput, "cannot inject an empty word");
  const std::size_t at = std::min(doc.injection_cursor, doc.size());
  std::u32string text;
  if (at > 0 && doc.text[at - 1] != kParagraphSeparator) text.push_back(starts_paragraph ? kParagraphSeparator : U' ');
  text += utf8::decode(word.text);
  EditOp op(doc.revision);
  op.retain(at).insert(std::u32string_view(text), kSystemAuthor).retain(doc.size() - at);
  return op;
}

// --- wire form ------------------------------------------------------------------------

/// Components as JSON: a positive integer retains, a negative integer deletes,
/// and {"i": text, "a": author} inserts.
inline nlohmann::json components_to_json(const EditOp& op) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : op.components()) {
    if (auto* r = std::get_if<Retain>(&c)) {
      arr.push_back(r->n);
    } else if (auto* d = std::get_if<Delete>(&c)) {
      arr.push_back(-static_cast<std::int64_t>(d->n));
    } else {
      const auto& ins = std::get<Insert>(c);
      arr.push_back({{"i", utf8::encode(ins.text)}, {"a", ins.author}});
    }
  }
  return arr;
}

inline EditOp op_from_json(const nlohmann::json& components, Revision base) {
  if (!components.is_array()) throw Error(ErrorCode::MalformedOp, "components must be an array");
  EditOp op(base);
  for (const auto& c : components) {
    if (c.is_number_integer()) {
      const auto v = c.get<std::int64_t>();
      if (v == 0) throw Error(ErrorCode::MalformedOp, "empty component");
      if (v > 0) op.retain(static_cast<std::size_t>(v));
      else op.del(static_cast<std::size_t>(-v));
    } else if (c.is_object() && c.size() == 2 && c.contains("i") && c.contains("a") && c["i"].is_string() &&
               c["a"].is_number_unsigned()) {
      const auto text = c["i"].get<std::string>();
      if (text.empty()) throw Error(ErrorCode::MalformedOp, "empty insert");
      op.insert(std::string_view(text), c["a"].get<AuthorId>());
    } else {
      throw Error(ErrorCode::MalformedOp, "unknown component " + c.dump());
    }
  }
  return op;
}

}  // namespace cart
