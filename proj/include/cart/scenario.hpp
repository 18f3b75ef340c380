#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cart/error.hpp"
#include "cart/formatter.hpp"
#include "cart/ot.hpp"

namespace cart {

/// A: everyone edits everything. B: staggered audio delays. C: paragraphs
/// rotate between the three editors. D: two rotating correctors plus a
/// proofreader with delayed audio.
enum class ScenarioKind { A, B, C, D };

inline constexpr std::size_t kGroupSize = 3;

inline constexpr std::string_view to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::A: return "A";
    case ScenarioKind::B: return "B";
    case ScenarioKind::C: return "C";
    case ScenarioKind::D: return "D";
  }
  return "?";
}

inline ScenarioKind scenario_from_string(std::string_view s) {
  if (s == "A" || s == "a") return ScenarioKind::A;
  if (s == "B" || s == "b") return ScenarioKind::B;
  if (s == "C" || s == "c") return ScenarioKind::C;
  if (s == "D" || s == "d") return ScenarioKind::D;
  throw Error(ErrorCode::InvalidConfig, "unknown scenario '" + std::string(s) + "'");
}

/// Whether the scenario hands out paragraphs in rotation.
inline constexpr bool is_chunked(ScenarioKind k) { return k == ScenarioKind::C || k == ScenarioKind::D; }

enum class Role { Corrector, Proofreader };

inline constexpr std::string_view to_string(Role r) { return r == Role::Corrector ? "corrector" : "proofreader"; }

struct RoleAssignment {
  AuthorId user = 0;
  double audio_delay_s = 0;
  Role role = Role::Corrector;
  std::optional<std::size_t> rotation_slot;  // empty: owns everything

  friend bool operator==(const RoleAssignment&, const RoleAssignment&) = default;
};

/// Roles for a group of three, in join order.
inline std::vector<RoleAssignment> assign_roles(ScenarioKind kind, std::span<const AuthorId> users) {
  if (users.size() != kGroupSize) {
    throw Error(ErrorCode::WrongGroupSize, "groups have exactly 3 editors, got " + std::to_string(users.size()));
  }
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (users[i] == kSystemAuthor) throw Error(ErrorCode::WrongGroupSize, "the system author cannot edit");
    for (std::size_t j = 0; j < i; ++j) {
      if (users[i] == users[j]) throw Error(ErrorCode::WrongGroupSize, "duplicate editor " + std::to_string(users[i]));
    }
  }
  std::vector<RoleAssignment> out;
  for (std::size_t i = 0; i < kGroupSize; ++i) {
    RoleAssignment r{users[i], 0.0, Role::Corrector, std::nullopt};
    switch (kind) {
      case ScenarioKind::A: break;
      case ScenarioKind::B: r.audio_delay_s = 10.0 * static_cast<double>(i); break;
      case ScenarioKind::C: r.rotation_slot = i; break;
      case ScenarioKind::D:
        if (i < 2) {
          r.rotation_slot = i;
        } else {
          r.role = Role::Proofreader;
          r.audio_delay_s = 10.0;
        }
        break;
    }
    out.push_back(r);
  }
  return out;
}

struct ChunkRange {
  std::size_t first = 0;  // paragraph indices, inclusive
  std::size_t last = 0;
  AuthorId owner = 0;
  friend bool operator==(const ChunkRange&, const ChunkRange&) = default;
};

/// Paragraph ownership for the chunked scenarios. `members` is the rotation
/// order; an empty rotation means nobody owns anything in particular.
struct ChunkMap {
  std::vector<AuthorId> members;
  std::vector<ChunkRange> ranges;

  static ChunkMap for_roles(std::span<const RoleAssignment> roles) {
    std::vector<std::pair<std::size_t, AuthorId>> slots;
    for (const auto& r : roles) {
      if (r.rotation_slot) slots.emplace_back(*r.rotation_slot, r.user);
    }
    std::sort(slots.begin(), slots.end());
    ChunkMap m;
    for (const auto& [slot, user] : slots) m.members.push_back(user);
    return m;
  }

  std::size_t paragraph_count() const { return ranges.empty() ? 0 : ranges.back().last + 1; }
  friend bool operator==(const ChunkMap&, const ChunkMap&) = default;
};

/// Hands paragraph `index` to the next member of the rotation.
inline ChunkMap advance_rotation(ChunkMap map, std::size_t index) {
  if (index != map.paragraph_count()) {
    throw Error(ErrorCode::NonContiguousParagraph,
                "expected paragraph " + std::to_string(map.paragraph_count()) + ", got " + std::to_string(index));
  }
  if (map.members.empty()) return map;
  map.ranges.push_back({index, index, map.members[index % map.members.size()]});
  return map;
}

/// Owner of the paragraph holding `position`, or empty when everyone owns it.
template <class ParagraphOf>
std::optional<AuthorId> chunk_owner(const ChunkMap& map, std::size_t position, ParagraphOf&& paragraph_index_of) {
  if (map.members.empty()) return std::nullopt;
  const std::size_t p = paragraph_index_of(position);
  auto it = std::lower_bound(map.ranges.begin(), map.ranges.end(), p,
                             [](const ChunkRange& r, std::size_t v) { return r.last < v; });
  if (it != map.ranges.end() && it->first <= p) return it->owner;
  return map.members[p % map.members.size()];
}

/// Paragraph index of a document position: the number of system-written
/// paragraph separators before it. User-typed line breaks do not count.
inline std::size_t paragraph_index_at(const AttributedDoc& doc, std::size_t position) {
  const std::size_t end = std::min(position, doc.size());
  std::size_t n = 0;
  for (std::size_t i = 0; i < end; ++i) {
    if (doc.text[i] == kParagraphSeparator && doc.authors[i] == kSystemAuthor) ++n;
  }
  return n;
}

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::A;
  std::size_t users = kGroupSize;
  LengthWindow chunk_char_window = kChunkedParagraph;

  /// Paragraph window used when injecting: chunked scenarios use the
  /// configured chunk window, the others the standard one.
  LengthWindow paragraph_window() const { return is_chunked(kind) ? chunk_char_window : kStandardParagraph; }
};

inline void validate(const ScenarioConfig& c) {
  if (c.users != kGroupSize) throw Error(ErrorCode::InvalidConfig, "users must be 3");
  if (c.chunk_char_window.min == 0 || c.chunk_char_window.min > c.chunk_char_window.max) {
    throw Error(ErrorCode::InvalidConfig, "chunk_char_window must satisfy 0 < min <= max");
  }
}

inline nlohmann::json to_json(const ScenarioConfig& c) {
  return {{"kind", std::string(to_string(c.kind))},
          {"users", c.users},
          {"chunk_char_window", {c.chunk_char_window.min, c.chunk_char_window.max}}};
}

inline ScenarioConfig scenario_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "scenario must be an object");
  ScenarioConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "kind") {
        c.kind = scenario_from_string(value.get<std::string>());
      } else if (key == "users") {
        c.users = value.get<std::size_t>();
      } else if (key == "chunk_char_window") {
        if (!value.is_array() || value.size() != 2) throw Error(ErrorCode::InvalidConfig, "chunk_char_window is [min, max]");
        c.chunk_char_window = {value[0].get<std::size_t>(), value[1].get<std::size_t>()};
      } else {
        throw Error(ErrorCode::InvalidConfig, "unknown scenario field '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("scenario: ") + e.what());
  }
  validate(c);
  return c;
}

inline nlohmann::json to_json(const RoleAssignment& r) {
  nlohmann::json j{{"user", r.user}, {"audio_delay_s", r.audio_delay_s}, {"role", std::string(to_string(r.role))}};
  j["ownership"] = r.rotation_slot ? nlohmann::json{{"rotation_slot", *r.rotation_slot}} : nlohmann::json("all");
  return j;
}

}  // namespace cart
