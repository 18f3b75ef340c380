#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cart/error.hpp"
#include "cart/unicode.hpp"
#include "cart/utf8.hpp"

namespace cart {

/// One ASR token with its audio span in seconds.
struct TimedWord {
  std::string text;
  double start_s = 0;
  double end_s = 0;

  friend bool operator==(const TimedWord&, const TimedWord&) = default;
};

using Transcript = std::vector<TimedWord>;

inline void validate_transcript(const Transcript& words) {
  double last_start = 0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    const auto at = " (word " + std::to_string(i) + ")";
    if (w.text.empty()) throw Error(ErrorCode::InvalidInput, "empty word" + at);
    for (char32_t c : utf8::decode(w.text)) {
      if (unicode::is_space(c)) throw Error(ErrorCode::InvalidInput, "word contains whitespace" + at);
    }
    if (!(w.start_s >= 0)) throw Error(ErrorCode::InvalidInput, "negative start" + at);
    if (!(w.start_s <= w.end_s)) throw Error(ErrorCode::InvalidInput, "start after end" + at);
    if (w.start_s < last_start) throw Error(ErrorCode::InvalidInput, "start times decrease" + at);
    last_start = w.start_s;
  }
}

/// Parses `{"words":[{"w":"Hallo","s":0.32,"e":0.61}, ...]}`. Unknown keys,
/// missing fields and non-numeric times are rejected.
inline Transcript transcript_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.size() != 1 || !j.contains("words") || !j["words"].is_array()) {
    throw Error(ErrorCode::InvalidInput, R"(transcript must be {"words": [...]})");
  }
  Transcript out;
  out.reserve(j["words"].size());
  for (const auto& item : j["words"]) {
    if (!item.is_object() || item.size() != 3 || !item.contains("w") || !item.contains("s") || !item.contains("e") ||
        !item["w"].is_string() || !item["s"].is_number() || !item["e"].is_number()) {
      throw Error(ErrorCode::InvalidInput, "transcript word must be {w: string, s: number, e: number}");
    }
    out.push_back({item["w"].get<std::string>(), item["s"].get<double>(), item["e"].get<double>()});
  }
  validate_transcript(out);
  return out;
}

inline Transcript parse_transcript(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidInput, std::string("transcript is not JSON: ") + e.what());
  }
  return transcript_from_json(j);
}

inline nlohmann::json to_json(const Transcript& words) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& w : words) arr.push_back({{"w", w.text}, {"s", w.start_s}, {"e", w.end_s}});
  return nlohmann::json{{"words", std::move(arr)}};
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidInput, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Transcript load_transcript(const std::string& path) { return parse_transcript(read_file(path)); }

/// Untimed words from plain text, for tools that accept either format.
inline Transcript words_from_text(std::string_view text) {
  Transcript out;
  std::istringstream in{std::string(text)};
  for (std::string w; in >> w;) out.push_back({std::move(w), 0, 0});
  return out;
}

inline std::string join_words(const Transcript& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w.text;
  }
  return out;
}

}  // namespace cart
