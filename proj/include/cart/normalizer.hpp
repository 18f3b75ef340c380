#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cart/dictionary_data.hpp"
#include "cart/error.hpp"
#include "cart/unicode.hpp"
#include "cart/utf8.hpp"

namespace cart {

/// Text after German standardisation: lowercase, no punctuation, no umlauts or
/// sharp s, no digits (for supported numbers), single spaces between words.
struct NormalizedText {
  std::string content;

  std::vector<std::string> words() const {
    std::vector<std::string> out;
    std::istringstream in(content);
    for (std::string w; in >> w;) out.push_back(std::move(w));
    return out;
  }

  bool empty() const { return content.empty(); }
  friend bool operator==(const NormalizedText&, const NormalizedText&) = default;
};

struct NormalizeWarning {
  enum class Kind { NumberOutOfRange, DecimalNumber };
  Kind kind;
  std::string token;
};

/// A `short<TAB>long` replacement table. Lines starting with `#` are comments;
/// a `# version: N` comment sets the version string.
struct Dictionary {
  std::string version;
  std::vector<std::pair<std::string, std::string>> entries;

  static Dictionary parse(std::string_view tsv) {
    Dictionary dict;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= tsv.size()) {
      auto end = tsv.find('\n', pos);
      if (end == std::string_view::npos) end = tsv.size();
      auto line = tsv.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.empty()) {
        if (end == tsv.size()) break;
        continue;
      }
      if (line.front() == '#') {
        constexpr std::string_view tag = "# version:";
        if (line.substr(0, tag.size()) == tag) {
          auto v = line.substr(tag.size());
          while (!v.empty() && v.front() == ' ') v.remove_prefix(1);
          dict.version = std::string(v);
        }
        continue;
      }
      const auto tab = line.find('\t');
      if (tab == std::string_view::npos || tab == 0 || tab + 1 == line.size()) {
        throw Error(ErrorCode::InvalidInput, "dictionary line " + std::to_string(line_no) + " is not short<TAB>long");
      }
      dict.entries.emplace_back(std::string(line.substr(0, tab)), std::string(line.substr(tab + 1)));
      if (end == tsv.size()) break;
    }
    return dict;
  }

  static Dictionary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::InvalidInput, "cannot open dictionary " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  static Dictionary builtin_abbreviations() { return parse(data::kAbbreviations); }
  static Dictionary builtin_contractions() { return parse(data::kContractions); }
};

/// ä -> ae, ö -> oe, ü -> ue, ß -> ss (and upper-case forms); everything else
/// is copied unchanged.
inline std::u32string fold_diacritics(std::u32string_view text) {
  std::u32string out;
  out.reserve(text.size() + 8);
  for (char32_t c : text) {
    switch (c) {
      case U'ä': out += U"ae"; break;
      case U'ö': out += U"oe"; break;
      case U'ü': out += U"ue"; break;
      case U'Ä': out += U"Ae"; break;
      case U'Ö': out += U"Oe"; break;
      case U'Ü': out += U"Ue"; break;
      case U'ß': out += U"ss"; break;
      case 0x1E9E: out += U"SS"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string fold_diacritics(std::string_view text) {
  return utf8::encode(fold_diacritics(std::u32string_view(utf8::decode(text))));
}

namespace detail {

inline void append_below_100(std::string& out, unsigned n, bool in_compound) {
  static constexpr std::array<std::string_view, 20> kSmall = {
      "null",   "eins",     "zwei",     "drei",     "vier",     "fünf",     "sechs",
      "sieben", "acht",     "neun",     "zehn",     "elf",      "zwölf",    "dreizehn",
      "vierzehn", "fünfzehn", "sechzehn", "siebzehn", "achtzehn", "neunzehn"};
  static constexpr std::array<std::string_view, 10> kTens = {
      "", "", "zwanzig", "dreißig", "vierzig", "fünfzig", "sechzig", "siebzig", "achtzig", "neunzig"};
  if (n == 1 && in_compound) {
    out += "ein";
  } else if (n < 20) {
    out += kSmall[n];
  } else {
    const unsigned unit = n % 10;
    if (unit == 1) {
      out += "einund";
    } else if (unit != 0) {
      out += kSmall[unit];
      out += "und";
    }
    out += kTens[n / 10];
  }
}

// `in_compound` means the group is followed by a multiplier ("tausend"), so a
// trailing one is spelled "ein".
inline void append_below_1000(std::string& out, unsigned n, bool in_compound) {
  const unsigned hundreds = n / 100;
  const unsigned rest = n % 100;
  if (hundreds != 0) {
    append_below_100(out, hundreds, true);
    out += "hundert";
  }
  if (rest != 0) append_below_100(out, rest, in_compound);
}

}  // namespace detail

inline constexpr std::uint64_t kMaxVerbalizedNumber = 999'999;

/// German cardinal for 0..999,999 as a single token ("einundzwanzig",
/// "zweihunderteintausend"). Returns nullopt above the supported range.
inline std::optional<std::string> number_to_german(std::uint64_t n) {
  if (n > kMaxVerbalizedNumber) return std::nullopt;
  if (n == 0) return std::string("null");
  std::string out;
  const auto thousands = static_cast<unsigned>(n / 1000);
  const auto rest = static_cast<unsigned>(n % 1000);
  if (thousands != 0) {
    detail::append_below_1000(out, thousands, true);
    out += "tausend";
  }
  if (rest != 0) detail::append_below_1000(out, rest, false);
  return out;
}

struct NormalizeResult {
  NormalizedText text;
  std::vector<NormalizeWarning> warnings;
};

/// German text standardisation in eight ordered passes: whitespace, umlauts,
/// currency and symbols, abbreviations, contractions, numbers, lowercase and
/// punctuation, and final space cleanup. Every substituted word is folded so
/// the output never re-introduces umlauts.
class Normalizer {
 public:
  Normalizer() : Normalizer(Dictionary::builtin_abbreviations(), Dictionary::builtin_contractions()) {}

  Normalizer(const Dictionary& abbreviations, const Dictionary& contractions)
      : abbreviation_version_(abbreviations.version),
        contraction_version_(contractions.version),
        abbreviations_(prepare(abbreviations)),
        contractions_(prepare(contractions)) {}

  /// Shared instance backed by the built-in dictionaries.
  static const Normalizer& standard() {
    static const Normalizer instance;
    return instance;
  }

  const std::string& abbreviation_version() const { return abbreviation_version_; }
  const std::string& contraction_version() const { return contraction_version_; }
  std::size_t abbreviation_count() const { return abbreviations_.size(); }
  std::size_t contraction_count() const { return contractions_.size(); }

  NormalizeResult run(std::string_view raw) const {
    NormalizeResult result;
    std::u32string s = utf8::decode(raw);
    s = collapse_whitespace(s);                        // 1
    s = fold_diacritics(s);                            // 2
    s = expand_symbols(s);                             // 3
    s = replace_entries(s, abbreviations_);            // 4
    s = replace_entries(s, contractions_);             // 5
    s = verbalize_numbers(s, result.warnings);         // 6
    s = lowercase_strip_punct(s);                      // 7
    s = trim_spaces(s);                                // 8
    result.text.content = utf8::encode(s);
    return result;
  }

  NormalizedText operator()(std::string_view raw) const { return run(raw).text; }

 private:
  struct Entry {
    std::u32string key;  // folded, lowercase, apostrophes unified
    std::u32string value;
  };

  static char32_t match_form(char32_t c) { return unicode::is_apostrophe(c) ? U'\'' : unicode::to_lower(c); }

  static std::vector<Entry> prepare(const Dictionary& dict) {
    std::vector<Entry> out;
    out.reserve(dict.entries.size());
    for (const auto& [shortform, longform] : dict.entries) {
      Entry e;
      e.key = fold_diacritics(std::u32string_view(utf8::decode(shortform)));
      for (auto& c : e.key) c = match_form(c);
      e.value = fold_diacritics(std::u32string_view(utf8::decode(longform)));
      out.push_back(std::move(e));
    }
    // Longest key first so "'nen" wins over "'n".
    std::stable_sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) { return a.key.size() > b.key.size(); });
    return out;
  }

  static std::u32string collapse_whitespace(std::u32string_view s) {
    std::u32string out;
    out.reserve(s.size());
    for (char32_t c : s) {
      if (unicode::is_space(c)) {
        if (!out.empty() && out.back() == U' ') continue;
        out.push_back(U' ');
      } else {
        out.push_back(c);
      }
    }
    return out;
  }

  static std::u32string expand_symbols(std::u32string_view s) {
    std::u32string out;
    out.reserve(s.size());
    for (char32_t c : s) {
      std::u32string_view word;
      switch (c) {
        case U'€': word = U"Euro"; break;
        case U'$': word = U"Dollar"; break;
        case U'£': word = U"Pfund"; break;
        case U'¥': word = U"Yen"; break;
        case U'%': word = U"Prozent"; break;
        case U'‰': word = U"Promille"; break;
        case U'&': word = U"und"; break;
        case U'§': word = U"Paragraf"; break;
        case U'°': word = U"Grad"; break;
        case U'+': word = U"plus"; break;
        case U'=': word = U"gleich"; break;
        default: out.push_back(c); continue;
      }
      out.push_back(U' ');
      out += word;
      out.push_back(U' ');
    }
    return out;
  }

  static std::u32string replace_entries(std::u32string_view s, const std::vector<Entry>& entries) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
      const bool left_ok = i == 0 || !unicode::is_word_char(s[i - 1]);
      const Entry* hit = nullptr;
      if (left_ok) {
        for (const auto& e : entries) {
          if (e.key.size() > s.size() - i) continue;
          bool same = true;
          for (std::size_t k = 0; k < e.key.size() && same; ++k) same = match_form(s[i + k]) == e.key[k];
          if (!same) continue;
          const std::size_t end = i + e.key.size();
          // Keys ending in a letter must end at a word boundary; dotted keys
          // and apostrophe keys carry their own boundary.
          if (unicode::is_word_char(e.key.back()) && end < s.size() && unicode::is_word_char(s[end])) continue;
          hit = &e;
          break;
        }
      }
      if (hit != nullptr) {
        out += hit->value;
        i += hit->key.size();
        if (i < s.size() && unicode::is_word_char(s[i])) out.push_back(U' ');
      } else {
        out.push_back(s[i]);
        ++i;
      }
    }
    return out;
  }

  static std::u32string verbalize_numbers(std::u32string_view s, std::vector<NormalizeWarning>& warnings) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
      if (!unicode::is_digit(s[i])) {
        out.push_back(s[i++]);
        continue;
      }
      std::size_t j = i;
      while (j < s.size() && unicode::is_digit(s[j])) ++j;
      std::u32string digits(s.substr(i, j - i));
      // German thousands grouping: 1.000 or 12.500.000
      if (j - i <= 3) {
        std::size_t k = j;
        std::u32string grouped = digits;
        while (k + 3 < s.size() && s[k] == U'.' && unicode::is_digit(s[k + 1]) && unicode::is_digit(s[k + 2]) &&
               unicode::is_digit(s[k + 3]) && (k + 4 == s.size() || !unicode::is_digit(s[k + 4]))) {
          grouped.append(s.substr(k + 1, 3));
          k += 4;
        }
        if (k != j) {
          digits = std::move(grouped);
          j = k;
        }
      }
      const bool decimal = j + 1 < s.size() && s[j] == U',' && unicode::is_digit(s[j + 1]);
      if (decimal) warnings.push_back({NormalizeWarning::Kind::DecimalNumber, utf8::encode(digits)});

      std::size_t first = 0;
      while (first + 1 < digits.size() && digits[first] == U'0') ++first;
      std::optional<std::string> word;
      if (digits.size() - first <= 6) {
        std::uint64_t value = 0;
        for (std::size_t k = first; k < digits.size(); ++k) value = value * 10 + (digits[k] - U'0');
        word = number_to_german(value);
      }
      if (word) {
        out += fold_diacritics(std::u32string_view(utf8::decode(*word)));
      } else {
        warnings.push_back({NormalizeWarning::Kind::NumberOutOfRange, utf8::encode(digits)});
        out += digits;
      }
      i = j;
    }
    return out;
  }

  static std::u32string lowercase_strip_punct(std::u32string_view s) {
    std::u32string out;
    out.reserve(s.size());
    for (char32_t c : s) {
      if (unicode::is_apostrophe(c)) continue;
      if (unicode::is_punct(c)) {
        out.push_back(U' ');
        continue;
      }
      out.push_back(unicode::to_lower(c));
    }
    return out;
  }

  static std::u32string trim_spaces(std::u32string_view s) {
    std::u32string out;
    out.reserve(s.size());
    for (char32_t c : s) {
      if (c == U' ' && (out.empty() || out.back() == U' ')) continue;
      out.push_back(c);
    }
    while (!out.empty() && out.back() == U' ') out.pop_back();
    return out;
  }

  std::string abbreviation_version_;
  std::string contraction_version_;
  std::vector<Entry> abbreviations_;
  std::vector<Entry> contractions_;
};

inline NormalizedText normalize(std::string_view raw) { return Normalizer::standard()(raw); }

}  // namespace cart
