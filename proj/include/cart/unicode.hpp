#pragma once

#include <string>
#include <string_view>

#include "cart/utf8.hpp"

// Character classes used by normalisation, metrics and formatting. The tables
// cover Latin, Greek and Cyrillic plus the common punctuation blocks; that is
// the range ASR vendors emit for German.
namespace cart::unicode {

inline constexpr bool is_space(char32_t c) {
  switch (c) {
    case U' ': case U'\t': case U'\n': case U'\v': case U'\f': case U'\r':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

inline constexpr bool is_digit(char32_t c) { return c >= U'0' && c <= U'9'; }

inline constexpr bool is_apostrophe(char32_t c) {
  return c == U'\'' || c == 0x2019 || c == 0x2018 || c == U'`' || c == 0xB4 || c == 0x02BC;
}

/// General category P* for the supported blocks, plus the ASCII symbols that
/// never form part of a spoken word ($ + < = > ^ ` | ~).
inline constexpr bool is_punct(char32_t c) {
  if (c < 0x80) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
           (c >= 0x7B && c <= 0x7E);
  }
  switch (c) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB4: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
    case 0x02BC: case 0x037E: case 0x0387: case 0x0589: case 0x05BE: case 0x060C:
    case 0x061B: case 0x061F: case 0x06D4: case 0x0E4F: case 0x0E5A: case 0x0E5B:
    case 0x3001: case 0x3002: case 0x3003: case 0xFF3F: case 0xFF5B: case 0xFF5D:
      return true;
    default:
      break;
  }
  return (c >= 0x055A && c <= 0x055F) || (c >= 0x066A && c <= 0x066D) || (c >= 0x0964 && c <= 0x0965) ||
         (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x2043) || (c >= 0x2045 && c <= 0x2051) ||
         (c >= 0x2053 && c <= 0x205E) || (c >= 0x2E00 && c <= 0x2E4F) || (c >= 0x3008 && c <= 0x3011) ||
         (c >= 0x3014 && c <= 0x301F) || (c >= 0xFF01 && c <= 0xFF03) || (c >= 0xFF05 && c <= 0xFF0A) ||
         (c >= 0xFF0C && c <= 0xFF0F) || (c >= 0xFF1A && c <= 0xFF1B) || (c >= 0xFF1F && c <= 0xFF20) ||
         (c >= 0xFF3B && c <= 0xFF3D) || (c >= 0xFF5F && c <= 0xFF65);
}

/// Letters, digits and underscore; everything else is a potential break point.
inline constexpr bool is_word_char(char32_t c) {
  if (c < 0x80) {
    return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || is_digit(c) || c == U'_';
  }
  if (is_space(c) || is_punct(c)) return false;
  if (c < 0xC0) return false;  // Latin-1 signs such as © ® ° ±
  return c != 0xD7 && c != 0xF7;
}

inline constexpr char32_t to_lower(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 0x20;
  if (c < 0xC0) return c;
  if (c <= 0xDE) return (c == 0xD7) ? c : c + 0x20;
  if (c >= 0x0100 && c <= 0x017F) {
    if (c == 0x0130) return U'i';
    if (c == 0x0178) return 0xFF;
    if ((c >= 0x0139 && c <= 0x0148) || (c >= 0x0179 && c <= 0x017E)) return (c % 2 == 1) ? c + 1 : c;
    if (c == 0x0138 || c == 0x0149 || c == 0x017F) return c;
    return (c % 2 == 0) ? c + 1 : c;
  }
  if (c >= 0x0391 && c <= 0x03A9 && c != 0x03A2) return c + 0x20;
  if (c >= 0x0410 && c <= 0x042F) return c + 0x20;
  if (c >= 0x0400 && c <= 0x040F) return c + 0x50;
  if (c == 0x1E9E) return 0xDF;
  return c;
}

inline std::u32string to_lower(std::u32string_view s) {
  std::u32string out(s);
  for (auto& c : out) c = to_lower(c);
  return out;
}

inline std::string to_lower(std::string_view s) { return utf8::encode(to_lower(std::u32string_view(utf8::decode(s)))); }

}  // namespace cart::unicode
