#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cart/error.hpp"
#include "cart/normalizer.hpp"
#include "cart/unicode.hpp"

namespace cart {

enum class AlignTag { Match, Substitution, Deletion, Insertion };

inline constexpr std::string_view to_string(AlignTag tag) {
  switch (tag) {
    case AlignTag::Match: return "match";
    case AlignTag::Substitution: return "substitution";
    case AlignTag::Deletion: return "deletion";
    case AlignTag::Insertion: return "insertion";
  }
  return "?";
}

/// One alignment column. A missing index is a gap on that side.
struct AlignedPair {
  std::optional<std::size_t> ref;
  std::optional<std::size_t> hyp;
  AlignTag tag;
};

struct Alignment {
  std::vector<AlignedPair> pairs;

  std::size_t count(AlignTag tag) const {
    std::size_t n = 0;
    for (const auto& p : pairs) n += p.tag == tag;
    return n;
  }
  std::size_t substitutions() const { return count(AlignTag::Substitution); }
  std::size_t deletions() const { return count(AlignTag::Deletion); }
  std::size_t insertions() const { return count(AlignTag::Insertion); }
  std::size_t matches() const { return count(AlignTag::Match); }
  std::size_t cost() const { return pairs.size() - matches(); }
};

/// Minimum-cost word alignment (unit costs). Among minimum-cost alignments
/// the one with the most diagonal steps wins, which pins the substitution
/// count and makes S/D/I independent of argument order. The backtrace then
/// prefers match, substitution, deletion, insertion.
template <class T, class Eq = std::equal_to<>>
Alignment word_align(std::span<const T> ref, std::span<const T> hyp, Eq eq = {}) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  const std::size_t w = m + 1;
  // score = cost * scale + gap steps; lower is better
  const std::uint64_t scale = n + m + 1;
  std::vector<std::uint64_t> score((n + 1) * w);
  for (std::size_t j = 0; j <= m; ++j) score[j] = j * (scale + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    score[i * w] = i * (scale + 1);
    for (std::size_t j = 1; j <= m; ++j) {
      const std::uint64_t diag = score[(i - 1) * w + j - 1] + (eq(ref[i - 1], hyp[j - 1]) ? 0 : scale);
      const std::uint64_t del = score[(i - 1) * w + j] + scale + 1;
      const std::uint64_t ins = score[i * w + j - 1] + scale + 1;
      score[i * w + j] = std::min({diag, del, ins});
    }
  }

  Alignment out;
  out.pairs.reserve(n + m);
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    const std::uint64_t here = score[i * w + j];
    if (i > 0 && j > 0) {
      const bool same = eq(ref[i - 1], hyp[j - 1]);
      if (here == score[(i - 1) * w + j - 1] + (same ? 0 : scale)) {
        out.pairs.push_back({i - 1, j - 1, same ? AlignTag::Match : AlignTag::Substitution});
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && here == score[(i - 1) * w + j] + scale + 1) {
      out.pairs.push_back({i - 1, std::nullopt, AlignTag::Deletion});
      --i;
      continue;
    }
    out.pairs.push_back({std::nullopt, j - 1, AlignTag::Insertion});
    --j;
  }
  std::reverse(out.pairs.begin(), out.pairs.end());
  return out;
}

inline Alignment word_align(std::span<const std::string> ref, std::span<const std::string> hyp) {
  return word_align<std::string>(ref, hyp);
}

struct WerReport {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t ref_len = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  double wer() const { return ref_len == 0 ? 0.0 : static_cast<double>(errors()) / static_cast<double>(ref_len); }
  friend bool operator==(const WerReport&, const WerReport&) = default;
};

inline WerReport wer_from_tokens(std::span<const std::string> ref, std::span<const std::string> hyp) {
  if (ref.empty() && !hyp.empty()) throw Error(ErrorCode::EmptyReference, "reference has no words");
  const auto a = word_align(ref, hyp);
  return WerReport{a.substitutions(), a.deletions(), a.insertions(), ref.size()};
}

/// WER on normalised word streams.
inline WerReport wer(std::string_view ref, std::string_view hyp, const Normalizer& norm = Normalizer::standard()) {
  const auto r = norm(ref).words();
  const auto h = norm(hyp).words();
  return wer_from_tokens(r, h);
}

// --- punctuation and capitalisation -------------------------------------------------

/// A whitespace token split into its word core and the punctuation that
/// follows it up to the next word.
struct ProjectedWord {
  std::u32string core;         // punctuation-stripped, original case
  std::u32string key;          // lowercase core, used for alignment
  std::u32string punctuation;  // trailing punctuation plus any leading punctuation of the next token
};

struct Projection {
  std::u32string prefix;  // punctuation before the first word
  std::vector<ProjectedWord> words;
};

inline Projection project_punctuation(std::string_view raw) {
  Projection out;
  const auto text = utf8::decode(raw);
  std::size_t i = 0;
  auto attach = [&](std::u32string_view punct) {
    if (out.words.empty()) {
      out.prefix += punct;
    } else {
      out.words.back().punctuation += punct;
    }
  };
  while (i < text.size()) {
    while (i < text.size() && unicode::is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !unicode::is_space(text[j])) ++j;
    if (j == i) break;
    std::u32string_view tok(text.data() + i, j - i);
    std::size_t lead = 0;
    while (lead < tok.size() && unicode::is_punct(tok[lead])) ++lead;
    if (lead == tok.size()) {
      attach(tok);
    } else {
      std::size_t trail = tok.size();
      while (trail > lead && unicode::is_punct(tok[trail - 1])) --trail;
      attach(tok.substr(0, lead));
      ProjectedWord w;
      for (char32_t c : tok.substr(lead, trail - lead)) {
        if (unicode::is_punct(c)) continue;
        w.core.push_back(c);
        w.key.push_back(unicode::to_lower(c));
      }
      w.punctuation = std::u32string(tok.substr(trail));
      out.words.push_back(std::move(w));
    }
    i = j;
  }
  return out;
}

struct TextQuality {
  std::size_t punctuation_errors = 0;
  std::size_t capitalization_errors = 0;
};

/// Punctuation and capitalisation errors over one case-insensitive,
/// punctuation-stripped word alignment.
inline TextQuality text_quality(std::string_view ref, std::string_view hyp) {
  const auto r = project_punctuation(ref);
  const auto h = project_punctuation(hyp);
  std::vector<std::u32string> rk, hk;
  rk.reserve(r.words.size());
  hk.reserve(h.words.size());
  for (const auto& w : r.words) rk.push_back(w.key);
  for (const auto& w : h.words) hk.push_back(w.key);
  const auto a = word_align<std::u32string>(rk, hk);

  TextQuality q;
  q.punctuation_errors += r.prefix != h.prefix;
  static const std::u32string kNone;
  for (const auto& p : a.pairs) {
    const auto& rp = p.ref ? r.words[*p.ref].punctuation : kNone;
    const auto& hp = p.hyp ? h.words[*p.hyp].punctuation : kNone;
    q.punctuation_errors += rp != hp;
    if (p.tag == AlignTag::Match && r.words[*p.ref].core != h.words[*p.hyp].core) ++q.capitalization_errors;
  }
  return q;
}

inline std::size_t punctuation_errors(std::string_view ref, std::string_view hyp) {
  return text_quality(ref, hyp).punctuation_errors;
}

inline std::size_t capitalization_errors(std::string_view ref, std::string_view hyp) {
  return text_quality(ref, hyp).capitalization_errors;
}

// --- baseline vs edited ---------------------------------------------------------------

/// 1 - edited/baseline. A zero baseline yields 0 when nothing got worse and
/// -infinity otherwise.
inline double relative_reduction(double baseline, double edited) {
  if (baseline > 0) return 1.0 - edited / baseline;
  return edited > 0 ? -std::numeric_limits<double>::infinity() : 0.0;
}

struct MetricsDelta {
  WerReport baseline;
  WerReport edited;
  double relative_wer_reduction = 0;
  std::size_t punct_errors_baseline = 0;
  std::size_t punct_errors_edited = 0;
  double punct_error_delta = 0;  // relative reduction of punctuation errors
  std::size_t cap_errors_baseline = 0;
  std::size_t cap_errors_edited = 0;
  double cap_error_delta = 0;  // relative reduction of capitalisation errors
  std::map<std::uint32_t, std::size_t> per_user_edit_counts;

  friend bool operator==(const MetricsDelta&, const MetricsDelta&) = default;
};

inline MetricsDelta reduction_report(std::string_view ref, std::string_view baseline_hyp, std::string_view edited_hyp,
                                     std::map<std::uint32_t, std::size_t> edit_counts = {},
                                     const Normalizer& norm = Normalizer::standard()) {
  MetricsDelta d;
  d.baseline = wer(ref, baseline_hyp, norm);
  d.edited = wer(ref, edited_hyp, norm);
  d.relative_wer_reduction = relative_reduction(static_cast<double>(d.baseline.errors()), static_cast<double>(d.edited.errors()));
  const auto qb = text_quality(ref, baseline_hyp);
  const auto qe = text_quality(ref, edited_hyp);
  d.punct_errors_baseline = qb.punctuation_errors;
  d.punct_errors_edited = qe.punctuation_errors;
  d.punct_error_delta = relative_reduction(static_cast<double>(qb.punctuation_errors), static_cast<double>(qe.punctuation_errors));
  d.cap_errors_baseline = qb.capitalization_errors;
  d.cap_errors_edited = qe.capitalization_errors;
  d.cap_error_delta = relative_reduction(static_cast<double>(qb.capitalization_errors), static_cast<double>(qe.capitalization_errors));
  d.per_user_edit_counts = std::move(edit_counts);
  return d;
}

/// Group-level summary over several sessions: the mean of per-session
/// reductions and the reduction of pooled error counts.
struct ReductionAggregate {
  std::size_t sessions = 0;
  double mean_wer_reduction = 0;
  double pooled_wer_reduction = 0;
  double mean_punct_reduction = 0;
  double pooled_punct_reduction = 0;
  double mean_cap_reduction = 0;
  double pooled_cap_reduction = 0;
};

inline ReductionAggregate aggregate(std::span<const MetricsDelta> deltas) {
  ReductionAggregate a;
  a.sessions = deltas.size();
  if (deltas.empty()) return a;
  double wb = 0, we = 0, pb = 0, pe = 0, cb = 0, ce = 0;
  for (const auto& d : deltas) {
    a.mean_wer_reduction += d.relative_wer_reduction;
    a.mean_punct_reduction += d.punct_error_delta;
    a.mean_cap_reduction += d.cap_error_delta;
    wb += static_cast<double>(d.baseline.errors());
    we += static_cast<double>(d.edited.errors());
    pb += static_cast<double>(d.punct_errors_baseline);
    pe += static_cast<double>(d.punct_errors_edited);
    cb += static_cast<double>(d.cap_errors_baseline);
    ce += static_cast<double>(d.cap_errors_edited);
  }
  const auto n = static_cast<double>(deltas.size());
  a.mean_wer_reduction /= n;
  a.mean_punct_reduction /= n;
  a.mean_cap_reduction /= n;
  a.pooled_wer_reduction = relative_reduction(wb, we);
  a.pooled_punct_reduction = relative_reduction(pb, pe);
  a.pooled_cap_reduction = relative_reduction(cb, ce);
  return a;
}

// --- JSON ---------------------------------------------------------------------------

inline constexpr std::string_view kWerSchema = "cart.wer/1";
inline constexpr std::string_view kMetricsSchema = "cart.metrics/1";

namespace detail {
inline nlohmann::json ratio_json(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}
}  // namespace detail

inline nlohmann::json to_json(const WerReport& r) {
  return nlohmann::json{{"substitutions", r.substitutions},
                        {"deletions", r.deletions},
                        {"insertions", r.insertions},
                        {"ref_len", r.ref_len},
                        {"errors", r.errors()},
                        {"wer", r.wer()}};
}

inline nlohmann::json to_json(const MetricsDelta& d) {
  nlohmann::json users = nlohmann::json::object();
  for (const auto& [user, count] : d.per_user_edit_counts) users[std::to_string(user)] = count;
  return nlohmann::json{{"schema", kMetricsSchema},
                        {"baseline", to_json(d.baseline)},
                        {"edited", to_json(d.edited)},
                        {"relative_wer_reduction", detail::ratio_json(d.relative_wer_reduction)},
                        {"punct_errors_baseline", d.punct_errors_baseline},
                        {"punct_errors_edited", d.punct_errors_edited},
                        {"punct_error_delta", detail::ratio_json(d.punct_error_delta)},
                        {"cap_errors_baseline", d.cap_errors_baseline},
                        {"cap_errors_edited", d.cap_errors_edited},
                        {"cap_error_delta", detail::ratio_json(d.cap_error_delta)},
                        {"per_user_edit_counts", users}};
}

inline nlohmann::json to_json(const ReductionAggregate& a) {
  return nlohmann::json{{"sessions", a.sessions},
                        {"mean_wer_reduction", detail::ratio_json(a.mean_wer_reduction)},
                        {"pooled_wer_reduction", detail::ratio_json(a.pooled_wer_reduction)},
                        {"mean_punct_reduction", detail::ratio_json(a.mean_punct_reduction)},
                        {"pooled_punct_reduction", detail::ratio_json(a.pooled_punct_reduction)},
                        {"mean_cap_reduction", detail::ratio_json(a.mean_cap_reduction)},
                        {"pooled_cap_reduction", detail::ratio_json(a.pooled_cap_reduction)}};
}

}  // namespace cart
