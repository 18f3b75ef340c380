#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cart/transcript.hpp"
#include "cart/unicode.hpp"
#include "cart/utf8.hpp"

namespace cart {

enum class ParagraphMode { Standard, Chunked };

struct LengthWindow {
  std::size_t min;
  std::size_t max;
};

inline constexpr LengthWindow kStandardParagraph{800, 1000};
inline constexpr LengthWindow kChunkedParagraph{100, 200};
inline constexpr LengthWindow kCaptionBlock{60, 80};
inline constexpr double kSilenceBreakSeconds = 5.0;
inline constexpr std::size_t kLineBreakMin = 30;
inline constexpr std::size_t kLineBreakMax = 60;

inline constexpr LengthWindow window_for(ParagraphMode mode) {
  return mode == ParagraphMode::Chunked ? kChunkedParagraph : kStandardParagraph;
}

/// Why a segment ended where it did.
enum class BreakReason {
  SentenceEnd,  // a sentence ender inside the length window
  WindowEnd,    // the next word would overflow the window
  LongNext,     // as WindowEnd, but the segment is short because the next word is long
  Silence,      // the next word follows a pause longer than the silence threshold
  Oversized,    // a single word longer than the window
  Final,        // end of input
};

inline constexpr bool is_sentence_ender(char32_t c) { return c == U'.' || c == U'!' || c == U'?' || c == U';'; }

/// True when the word ends a sentence, allowing closing quotes or brackets
/// after the ender ("Ende." / "Ende.“" / "(Ende.)").
inline bool ends_sentence(std::u32string_view word) {
  while (!word.empty()) {
    const char32_t c = word.back();
    if (is_sentence_ender(c)) return true;
    const bool closer = c == U'"' || c == U'\'' || c == U')' || c == U']' || c == 0x201C || c == 0x201D ||
                        c == 0x2019 || c == 0xBB || c == 0xAB;
    if (!closer) return false;
    word.remove_suffix(1);
  }
  return false;
}

struct Segment {
  std::size_t first = 0;  // word index range [first, last)
  std::size_t last = 0;
  std::size_t char_len = 0;
  BreakReason reason = BreakReason::Final;

  /// Segments that are allowed to fall outside the length window.
  bool window_exempt() const {
    return reason == BreakReason::Final || reason == BreakReason::Silence || reason == BreakReason::Oversized ||
           reason == BreakReason::LongNext;
  }
};

namespace detail {

struct SegmentInput {
  std::vector<std::size_t> lengths;
  std::vector<bool> sentence_end;
  std::vector<bool> break_before;  // hard break before word k
};

// Greedy segmentation of single-space-joined words. With `balance_tail`, a
// window-end break picks the rightmost in-window boundary that does not leave
// an undersized remainder before the next hard break.
inline std::vector<Segment> segment(const SegmentInput& in, LengthWindow window, bool balance_tail) {
  const std::size_t n = in.lengths.size();
  std::vector<Segment> out;
  std::size_t start = 0;
  while (start < n) {
    std::size_t len = 0;
    std::size_t k = start;
    std::optional<Segment> done;
    std::vector<std::pair<std::size_t, std::size_t>> candidates;  // (end index, length)
    for (; k < n; ++k) {
      if (k > start && in.break_before[k]) {
        done = Segment{start, k, len, BreakReason::Silence};
        break;
      }
      const std::size_t grown = (k == start) ? in.lengths[k] : len + 1 + in.lengths[k];
      if (k > start && grown > window.max) break;
      len = grown;
      if (len > window.max) {
        done = Segment{start, k + 1, len, BreakReason::Oversized};
        break;
      }
      if (len >= window.min) {
        if (in.sentence_end[k]) {
          done = Segment{start, k + 1, len, BreakReason::SentenceEnd};
          break;
        }
        candidates.emplace_back(k + 1, len);
      }
    }
    if (!done && k == n) done = Segment{start, n, len, BreakReason::Final};
    if (!done) {
      Segment s{start, k, len, len < window.min ? BreakReason::LongNext : BreakReason::WindowEnd};
      if (balance_tail && !candidates.empty()) {
        std::size_t stop = k;
        while (stop < n && !(stop > k && in.break_before[stop])) ++stop;
        auto remainder = [&](std::size_t from) {
          std::size_t r = 0;
          for (std::size_t q = from; q < stop; ++q) r += (q == from ? 0 : 1) + in.lengths[q];
          return r;
        };
        for (auto it = candidates.rbegin(); it != candidates.rend(); ++it) {
          const auto rem = remainder(it->first);
          if (rem == 0 || rem >= window.min) {
            s.last = it->first;
            s.char_len = it->second;
            break;
          }
        }
      }
      done = s;
    }
    out.push_back(*done);
    start = done->last;
  }
  return out;
}

inline std::string join_range(const std::vector<std::string>& words, std::size_t first, std::size_t last) {
  std::string text;
  for (std::size_t i = first; i < last; ++i) {
    if (i != first) text.push_back(' ');
    text += words[i];
  }
  return text;
}

}  // namespace detail

struct Paragraph {
  std::string text;
  std::size_t char_len = 0;
  std::size_t first_word = 0;  // [first_word, last_word) into the transcript
  std::size_t last_word = 0;
  BreakReason reason = BreakReason::Final;

  bool window_exempt() const { return Segment{first_word, last_word, char_len, reason}.window_exempt(); }
  friend bool operator==(const Paragraph&, const Paragraph&) = default;
};

/// Splits a timed transcript into paragraphs: a pause longer than five
/// seconds always starts a new paragraph; otherwise a paragraph ends at the
/// first sentence ender inside the length window, or before the word that
/// would overflow it.
inline std::vector<Paragraph> format_transcript(const Transcript& words, LengthWindow window) {
  detail::SegmentInput in;
  std::vector<std::string> texts;
  texts.reserve(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto u = utf8::decode(words[i].text);
    in.lengths.push_back(u.size());
    in.sentence_end.push_back(ends_sentence(u));
    in.break_before.push_back(i > 0 && words[i].start_s - words[i - 1].end_s > kSilenceBreakSeconds);
    texts.push_back(words[i].text);
  }
  std::vector<Paragraph> out;
  for (const auto& s : detail::segment(in, window, false)) {
    out.push_back({detail::join_range(texts, s.first, s.last), s.char_len, s.first, s.last, s.reason});
  }
  return out;
}

inline std::vector<Paragraph> format_transcript(const Transcript& words, ParagraphMode mode) {
  return format_transcript(words, window_for(mode));
}

struct CaptionBlock {
  std::string text;                // the unsplit block
  std::vector<std::string> lines;  // one or two
  bool separator_removed = false;  // a space between the lines was dropped
  std::size_t total_len = 0;       // visible characters of `text`
  BreakReason reason = BreakReason::Final;
  bool window_exempt() const { return Segment{0, 0, total_len, reason}.window_exempt(); }
};

struct LineSplit {
  std::string line1;
  std::optional<std::string> line2;
  std::size_t break_index = 0;  // length of line1 in characters
  bool separator_removed = false;
};

/// Two-line layout for one caption block. Blocks of at most 60 characters
/// stay on one line. Longer blocks break so the first line has 30..60
/// characters, preferring (rightmost) punctuation followed by a space, then
/// any non-word character, then a hard split at 60.
inline LineSplit split_caption_lines(std::string_view block_text) {
  const auto text = utf8::decode(block_text);
  const std::size_t n = text.size();
  if (n <= kLineBreakMax) return {std::string(block_text), std::nullopt, n, false};

  auto make = [&](std::size_t line1_len, bool drop_separator) {
    LineSplit s;
    s.line1 = utf8::encode(std::u32string_view(text).substr(0, line1_len));
    s.line2 = utf8::encode(std::u32string_view(text).substr(line1_len + (drop_separator ? 1 : 0)));
    s.break_index = line1_len;
    s.separator_removed = drop_separator;
    return s;
  };
  auto is_break_punct = [](char32_t c) {
    return c == U'.' || c == U',' || c == U'!' || c == U'?' || c == U';' || c == U':';
  };

  // punctuation, break after it and drop the following space
  for (std::size_t len = kLineBreakMax; len >= kLineBreakMin; --len) {
    if (len < n && is_break_punct(text[len - 1]) && unicode::is_space(text[len]) && len + 1 < n) return make(len, true);
  }
  // any non-word character: a space is consumed, anything else stays on line 1
  for (std::size_t len = kLineBreakMax; len >= kLineBreakMin; --len) {
    if (len < n && unicode::is_space(text[len]) && len + 1 < n) return make(len, true);
    if (!unicode::is_word_char(text[len - 1]) && !unicode::is_space(text[len - 1]) && len < n) return make(len, false);
  }
  return make(kLineBreakMax, false);
}

/// Caption blocks of 60..80 characters; a sentence ender inside the window
/// ends the block early. Each block is laid out with split_caption_lines.
inline std::vector<CaptionBlock> format_captions(std::string_view text) {
  const auto words = words_from_text(text);
  detail::SegmentInput in;
  std::vector<std::string> texts;
  for (const auto& w : words) {
    const auto u = utf8::decode(w.text);
    in.lengths.push_back(u.size());
    in.sentence_end.push_back(ends_sentence(u));
    in.break_before.push_back(false);
    texts.push_back(w.text);
  }
  std::vector<CaptionBlock> out;
  for (const auto& s : detail::segment(in, kCaptionBlock, true)) {
    const auto block = detail::join_range(texts, s.first, s.last);
    auto split = split_caption_lines(block);
    CaptionBlock b;
    b.text = block;
    b.separator_removed = split.separator_removed;
    b.lines.push_back(std::move(split.line1));
    if (split.line2) b.lines.push_back(std::move(*split.line2));
    b.total_len = s.char_len;
    b.reason = s.reason;
    out.push_back(std::move(b));
  }
  return out;
}

/// Paragraphs separated by blank lines.
inline std::string render_paragraphs(const std::vector<Paragraph>& paragraphs) {
  std::string out;
  for (std::size_t i = 0; i < paragraphs.size(); ++i) {
    if (i) out += "\n\n";
    out += paragraphs[i].text;
  }
  if (!out.empty()) out.push_back('\n');
  return out;
}

/// SRT-like numbered blocks without timing lines.
inline std::string render_captions(const std::vector<CaptionBlock>& blocks) {
  std::string out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i) out.push_back('\n');
    out += std::to_string(i + 1);
    out.push_back('\n');
    for (const auto& line : blocks[i].lines) {
      out += line;
      out.push_back('\n');
    }
  }
  return out;
}

}  // namespace cart
