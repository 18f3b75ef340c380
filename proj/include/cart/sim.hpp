#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "cart/metrics.hpp"
#include "cart/replica.hpp"
#include "cart/session.hpp"
#include "cart/unicode.hpp"

namespace cart::sim {

/// Seeded generator with portable draws: the standard distributions are
/// implementation-defined, so bounded integers, uniforms and normals are
/// derived here from the raw 64-bit engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error(ErrorCode::InvalidInput, "empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return p >= 1.0 || (p > 0.0 && uniform() < p); }

  double normal(double mean, double sd) {
    if (sd <= 0) return mean;
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

// --- error seeding ----------------------------------------------------------------------

inline constexpr double kSeedTolerance = 0.005;
inline constexpr double kSubstitutionShare = 0.6;
inline constexpr double kDeletionShare = 0.2;

namespace detail {

struct Affixes {
  std::u32string lead, core, trail;
};

inline Affixes split_affixes(std::string_view word) {
  const auto u = utf8::decode(word);
  std::size_t b = 0, e = u.size();
  while (b < e && !unicode::is_word_char(u[b])) ++b;
  while (e > b && !unicode::is_word_char(u[e - 1])) --e;
  return {u.substr(0, b), u.substr(b, e - b), u.substr(e)};
}

}  // namespace detail

/// Corrupts `ref` so that its WER against the original is `target_wer`
/// (within 0.005). Errors are 60% substitutions, 20% deletions and 20%
/// insertions of single words, at least two words apart.
/// Substitutes and inserted words are drawn from the reference itself.
inline std::string seed_errors(std::string_view ref, double target_wer, std::uint64_t seed,
                               const Normalizer& norm = Normalizer::standard()) {
  if (!(target_wer >= 0.0 && target_wer <= 0.5)) throw Error(ErrorCode::InvalidInput, "target WER must be in [0, 0.5]");
  if (target_wer == 0.0) return std::string(ref);
  const auto words = words_from_text(ref);
  const std::size_t n = norm(ref).words().size();
  if (n == 0) throw Error(ErrorCode::TargetUnreachable, "reference has no words");
  const auto k = static_cast<std::size_t>(std::llround(target_wer * static_cast<double>(n)));
  if (std::abs(static_cast<double>(k) / static_cast<double>(n) - target_wer) > kSeedTolerance) {
    throw Error(ErrorCode::TargetUnreachable, "a " + std::to_string(n) + "-word reference cannot reach WER " + std::to_string(target_wer));
  }

  std::vector<std::string> keys;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < words.size(); ++i) {
    keys.push_back(norm(words[i].text).content);
    if (!keys.back().empty() && keys.back().find(' ') == std::string::npos) eligible.push_back(i);
  }

  Rng rng(seed);
  auto order = eligible;
  rng.shuffle(order);
  std::vector<bool> chosen(words.size(), false);
  std::vector<std::size_t> slots;
  for (auto i : order) {
    if (slots.size() == k) break;
    // two clean words between errors keep the alignment from pairing a
    // deletion with a nearby insertion as two substitutions
    bool crowded = false;
    for (std::size_t j = i >= 2 ? i - 2 : 0; j <= std::min(i + 2, words.size() - 1); ++j) crowded = crowded || chosen[j];
    if (crowded) continue;
    chosen[i] = true;
    slots.push_back(i);
  }
  if (slots.size() < k) throw Error(ErrorCode::TargetUnreachable, "not enough room for " + std::to_string(k) + " errors");
  std::sort(slots.begin(), slots.end());

  enum class Kind { Sub, Del, Ins };
  const auto n_sub = static_cast<std::size_t>(std::llround(kSubstitutionShare * static_cast<double>(k)));
  const auto n_del = std::min(k - n_sub, static_cast<std::size_t>(std::llround(kDeletionShare * static_cast<double>(k))));
  std::vector<Kind> kinds(n_sub, Kind::Sub);
  kinds.insert(kinds.end(), n_del, Kind::Del);
  kinds.insert(kinds.end(), k - n_sub - n_del, Kind::Ins);
  rng.shuffle(kinds);

  auto donor = [&](std::size_t avoid) {
    for (;;) {
      const auto j = eligible[rng.below(eligible.size())];
      if (keys[j] != keys[avoid] && (avoid + 1 >= keys.size() || keys[j] != keys[avoid + 1])) {
        return detail::split_affixes(words[j].text).core;
      }
    }
  };

  std::vector<std::string> out;
  std::size_t s = 0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (s < slots.size() && slots[s] == i) {
      switch (kinds[s]) {
        case Kind::Sub: {
          const auto a = detail::split_affixes(words[i].text);
          out.push_back(utf8::encode(a.lead + donor(i) + a.trail));
          break;
        }
        case Kind::Del: break;
        case Kind::Ins:
          out.push_back(words[i].text);
          out.push_back(utf8::encode(donor(i)));
          break;
      }
      ++s;
    } else {
      out.push_back(words[i].text);
    }
  }
  std::string text;
  for (const auto& w : out) {
    if (!text.empty()) text.push_back(' ');
    text += w;
  }
  const double measured = wer(ref, text, norm).wer();
  if (std::abs(measured - target_wer) > kSeedTolerance) {
    throw Error(ErrorCode::TargetUnreachable, "seeded WER " + std::to_string(measured) + " misses the target");
  }
  return text;
}

// --- timing ---------------------------------------------------------------------------

inline constexpr double kSpeakingRateWpm = 135.0;

/// Spreads the words of `text` evenly over `duration_s`; each word fills 80%
/// of its slot.
inline Transcript synthetic_timing(std::string_view text, double duration_s) {
  auto words = words_from_text(text);
  if (words.empty()) return words;
  const double step = duration_s / static_cast<double>(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    words[i].start_s = step * static_cast<double>(i);
    words[i].end_s = words[i].start_s + 0.8 * step;
  }
  return words;
}

/// Duration of a reading of `word_count` words at `wpm`.
inline double speech_duration_s(std::size_t word_count, double wpm = kSpeakingRateWpm) {
  return static_cast<double>(word_count) * 60.0 / wpm;
}

// --- model table ------------------------------------------------------------------------

struct ModelRow {
  std::string service;
  double overall = 0;
  std::array<double, 4> chunks{};
};

struct ModelTable {
  std::vector<ModelRow> rows;
};

/// Reads {"unit": "percent"|"ratio", "rows": [{"service": name, "wer": [overall, c1, c2, c3, c4]}]}.
/// Values are stored as ratios.
inline ModelTable model_table_from_json(const nlohmann::json& j) {
  ModelTable t;
  try {
    const auto unit = j.value("unit", std::string("ratio"));
    if (unit != "percent" && unit != "ratio") throw Error(ErrorCode::InvalidInput, "unknown unit " + unit);
    const double scale = unit == "percent" ? 100.0 : 1.0;
    for (const auto& r : j.at("rows")) {
      const auto& w = r.at("wer");
      if (!w.is_array() || w.size() != 5) throw Error(ErrorCode::InvalidInput, "each row has 5 WER values");
      ModelRow row{r.at("service").get<std::string>(), w[0].get<double>() / scale, {}};
      for (std::size_t c = 0; c < 4; ++c) row.chunks[c] = w[c + 1].get<double>() / scale;
      t.rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("model table: ") + e.what());
  }
  return t;
}

struct TranscriptSelection {
  std::size_t overall = 0;           // row index
  std::array<std::size_t, 4> chunks{};  // row index per chunk
};

/// Row closest to the overall target and, per chunk, the row whose chunk WER
/// is closest to that chunk's target. Ties prefer rows not selected yet
/// (overall first, then earlier chunks), then table order.
inline TranscriptSelection select_transcripts(const ModelTable& table, double overall_target, std::array<double, 4> chunk_targets) {
  if (table.rows.empty()) throw Error(ErrorCode::InvalidInput, "empty model table");
  std::vector<std::size_t> taken;
  auto pick = [&](auto value_of, double target) {
    std::size_t best = 0;
    auto better = [&](std::size_t a, std::size_t b) {
      const double da = std::abs(value_of(table.rows[a]) - target);
      const double db = std::abs(value_of(table.rows[b]) - target);
      if (da != db) return da < db;
      const bool ta = std::find(taken.begin(), taken.end(), a) != taken.end();
      const bool tb = std::find(taken.begin(), taken.end(), b) != taken.end();
      if (ta != tb) return !ta;
      return a < b;
    };
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
      if (better(i, best)) best = i;
    }
    taken.push_back(best);
    return best;
  };
  TranscriptSelection s;
  s.overall = pick([](const ModelRow& r) { return r.overall; }, overall_target);
  for (std::size_t c = 0; c < 4; ++c) s.chunks[c] = pick([c](const ModelRow& r) { return r.chunks[c]; }, chunk_targets[c]);
  return s;
}

// --- agents -------------------------------------------------------------------------------

struct AgentProfile {
  double detect_prob = 0.4;
  double reaction_mean_s = 2.0;
  double reaction_sd_s = 0.7;
  double typing_wpm = 40;
  double fix_accuracy = 0.9;
};

inline void validate(const AgentProfile& p) {
  auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!prob(p.detect_prob) || !prob(p.fix_accuracy)) throw Error(ErrorCode::InvalidConfig, "probabilities must be in [0, 1]");
  if (!(p.typing_wpm > 0)) throw Error(ErrorCode::InvalidConfig, "typing_wpm must be positive");
  if (p.reaction_mean_s < 0 || p.reaction_sd_s < 0) throw Error(ErrorCode::InvalidConfig, "reaction delay must be non-negative");
}

inline AgentProfile agent_profile_from_json(const nlohmann::json& j) {
  AgentProfile p;
  try {
    p.detect_prob = j.at("detect_prob").get<double>();
    p.fix_accuracy = j.at("fix_accuracy").get<double>();
    p.typing_wpm = j.at("typing_wpm").get<double>();
    const auto& r = j.at("reaction_delay");
    p.reaction_mean_s = r.at("mean").get<double>();
    p.reaction_sd_s = r.at("sd").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("agent profile: ") + e.what());
  }
  validate(p);
  return p;
}

inline nlohmann::json to_json(const AgentProfile& p) {
  return {{"detect_prob", p.detect_prob},
          {"reaction_delay", {{"mean", p.reaction_mean_s}, {"sd", p.reaction_sd_s}}},
          {"typing_wpm", p.typing_wpm},
          {"fix_accuracy", p.fix_accuracy}};
}

/// Per-visit detection probability for an agent who scans a share `f` of the
/// paragraphs. Three full-coverage visits, or one visit by a sole owner, all
/// combine to the same group detection probability `detect_prob`.
inline double visit_detection(double detect_prob, double share) {
  if (detect_prob >= 1.0) return 1.0;
  return 1.0 - std::pow(1.0 - detect_prob, 1.0 / (static_cast<double>(kGroupSize) * share));
}

// --- error sites --------------------------------------------------------------------------

/// A maximal run of misaligned words: hypothesis words [h0, h1) should read
/// as the reference words `replacement`. h0 == h1 marks missing words that
/// belong right after hypothesis word h0 - 1.
struct ErrorSite {
  std::size_t h0 = 0;
  std::size_t h1 = 0;
  std::string replacement;
  std::size_t visible_word = 0;  // hypothesis word whose injection reveals the site

  bool is_anchor() const { return h0 == h1; }
};

inline std::vector<ErrorSite> error_sites(std::string_view ref, const Transcript& hyp, const Normalizer& norm = Normalizer::standard()) {
  const auto ref_words = words_from_text(ref);
  std::vector<std::string> rk, hk;
  for (const auto& w : ref_words) rk.push_back(norm(w.text).content);
  for (const auto& w : hyp) hk.push_back(norm(w.text).content);
  const auto alignment = word_align(std::span<const std::string>(rk), std::span<const std::string>(hk));
  std::vector<ErrorSite> sites;
  std::size_t r = 0, h = 0;
  std::optional<ErrorSite> open;
  std::vector<std::string> repl;
  auto close = [&] {
    if (!open) return;
    open->h1 = h;
    for (std::size_t i = 0; i < repl.size(); ++i) open->replacement += (i ? " " : "") + repl[i];
    if (!open->is_anchor()) open->visible_word = open->h1 - 1;
    else open->visible_word = std::min(open->h0, hyp.size() - 1);
    sites.push_back(*open);
    open.reset();
    repl.clear();
  };
  for (const auto& p : alignment.pairs) {
    if (p.tag == AlignTag::Match) {
      close();
      ++r;
      ++h;
      continue;
    }
    if (!open) open = ErrorSite{h, h, {}, 0};
    if (p.ref) repl.push_back(ref_words[r++].text);
    if (p.hyp) ++h;
  }
  close();
  return sites;
}

// --- experiment -----------------------------------------------------------------------------

struct SimOptions {
  double speedup = 0;  // > 0 paces the run at `speedup` virtual seconds per wall second; 0 runs unpaced
  std::int64_t latency_min_ms = 100;
  std::int64_t latency_max_ms = 150;
  std::int64_t tail_ms = 30'000;  // editing time after the last word reaches the most delayed editor
  std::optional<std::filesystem::path> persist_dir;  // session artifacts go to persist_dir/<session id>
};

struct ExperimentResult {
  MetricsDelta delta;
  std::size_t sites = 0;
  std::size_t detections = 0;
  std::size_t fixes_sent = 0;
  std::size_t fixes_failed = 0;
  std::size_t abandoned = 0;
  std::size_t conflicts = 0;
  std::size_t concurrent_pairs = 0;
  std::string final_text;
  std::string oplog;
};

inline nlohmann::json to_json(const ExperimentResult& r) {
  return {{"metrics", to_json(r.delta)},
          {"sites", r.sites},
          {"detections", r.detections},
          {"fixes_sent", r.fixes_sent},
          {"fixes_failed", r.fixes_failed},
          {"abandoned", r.abandoned},
          {"conflicts", r.conflicts},
          {"concurrent_pairs", r.concurrent_pairs}};
}

namespace detail {

// Discrete-event loop on a virtual millisecond clock. Events at equal times
// run in scheduling order.
class EventLoop {
 public:
  void at(std::int64_t t, std::function<void()> fn) { queue_.push({t, seq_++, std::move(fn)}); }

  std::int64_t now() const { return now_; }

  void run(double speedup) {
    const auto wall0 = std::chrono::steady_clock::now();
    while (!queue_.empty()) {
      auto ev = queue_.top();
      queue_.pop();
      now_ = ev.t;
      if (speedup > 0) {
        std::this_thread::sleep_until(wall0 + std::chrono::microseconds(static_cast<std::int64_t>(1000.0 * static_cast<double>(now_) / speedup)));
      }
      ev.fn();
    }
  }

 private:
  struct Ev {
    std::int64_t t;
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Ev& o) const { return t != o.t ? t > o.t : seq > o.seq; }
  };
  std::priority_queue<Ev, std::vector<Ev>, std::greater<>> queue_;
  std::int64_t now_ = 0;
  std::uint64_t seq_ = 0;
};

// Where one site sits in one agent's replica.
struct SiteTrack {
  std::optional<std::size_t> start, end;
  std::u32string original;
  bool touched = false;  // another editor changed it
  bool mine = false;     // this agent already fixed it

  bool ready() const { return start && end; }
};

}  // namespace detail

/// Runs one correction session with three simulated editors. The session,
/// the replicas and the network between them run on one virtual clock, so
/// a (scenario, profiles, transcript, reference, seed) tuple always yields
/// the same result.
inline ExperimentResult run_experiment(ScenarioKind scenario, const std::array<AgentProfile, 3>& agents, const Transcript& transcript,
                                       const std::string& ref, std::uint64_t seed, const SimOptions& options = {}) {
  for (const auto& a : agents) validate(a);
  SessionConfig config;
  config.scenario.kind = scenario;
  config.transcript = transcript;
  config.reference_text = ref;
  config.persist_dir = options.persist_dir;
  Session session("sim-" + std::string(to_string(scenario)) + "-" + std::to_string(seed), config);
  Rng rng(seed);
  detail::EventLoop loop;
  ExperimentResult result;

  const auto sites = error_sites(ref, transcript);
  result.sites = sites.size();
  std::vector<std::vector<std::size_t>> starts_at(transcript.size()), ends_at(transcript.size()), anchors_after(transcript.size()),
      visible_at(transcript.size());
  for (std::size_t s = 0; s < sites.size(); ++s) {
    const auto& site = sites[s];
    if (site.is_anchor()) {
      if (site.h0 > 0) anchors_after[site.h0 - 1].push_back(s);
    } else {
      starts_at[site.h0].push_back(s);
      ends_at[site.h1 - 1].push_back(s);
    }
    visible_at[site.visible_word].push_back(s);
  }

  for (std::size_t i = 0; i < kGroupSize; ++i) session.join(0);
  const auto roles = session.roles();
  const auto rotating = static_cast<std::size_t>(
      std::count_if(roles.begin(), roles.end(), [](const RoleAssignment& r) { return r.rotation_slot.has_value(); }));

  struct Agent {
    AuthorId id = 0;
    AgentProfile profile;
    RoleAssignment role;
    double visit_p = 0;
    ClientReplica replica;
    std::vector<detail::SiteTrack> tracks;
    std::deque<std::size_t> queue;
    bool busy = false;
    std::int64_t up_ready = 0;
    std::int64_t down_ready = 0;
  };
  std::vector<Agent> team(kGroupSize);
  for (std::size_t i = 0; i < kGroupSize; ++i) {
    auto& a = team[i];
    a.id = roles[i].user;
    a.profile = agents[i];
    a.role = roles[i];
    const double share = roles[i].rotation_slot ? 1.0 / static_cast<double>(rotating) : 1.0;
    a.visit_p = visit_detection(a.profile.detect_prob, share);
    a.replica = ClientReplica(session.doc(), a.id);
    a.tracks.resize(sites.size());
    for (std::size_t s = 0; s < sites.size(); ++s) {
      if (sites[s].is_anchor() && sites[s].h0 == 0) a.tracks[s].start = a.tracks[s].end = 0;
    }
  }

  auto latency = [&] { return rng.between(options.latency_min_ms, options.latency_max_ms); };

  std::function<void(Agent&, const Message&)> deliver;
  std::function<void(Agent&)> next_fix;

  auto route = [&](const std::vector<Outgoing>& out) {
    for (const auto& o : out) {
      auto& a = team[o.to - 1];
      a.down_ready = std::max(a.down_ready, loop.now() + latency());
      loop.at(a.down_ready, [&a, msg = o.msg, &deliver] { deliver(a, msg); });
    }
  };

  auto send = [&](Agent& a, const EditOp& op) {
    a.up_ready = std::max(a.up_ready, loop.now() + latency());
    loop.at(a.up_ready, [&, op, id = a.id] {
      if (session.phase() != Phase::Running) return;
      try {
        route(session.handle_edit(id, op, loop.now()));
      } catch (const Error& e) {
        route({session.error_message(id, e, loop.now())});
      }
    });
    ++result.fixes_sent;
  };

  // Applies an op to the agent's tracked site positions.
  auto shift = [](Agent& a, const EditOp& op, std::optional<AuthorId> foreign) {
    const auto touched = foreign ? op.touched_range() : std::nullopt;
    for (auto& t : a.tracks) {
      if (!t.start && !t.end) continue;
      if (touched && t.ready() && touched->first <= *t.end && *t.start <= touched->second) t.touched = true;
      if (t.start) t.start = transform_index(op, *t.start, false);
      if (t.end) t.end = transform_index(op, *t.end, false);
    }
  };

  auto handled = [](const Agent& a, std::size_t s) {
    const auto& t = a.tracks[s];
    if (t.touched || t.mine || !t.ready()) return true;
    const auto& text = a.replica.doc().text;
    return text.compare(*t.start, *t.end - *t.start, t.original) != 0;
  };

  auto build_fix = [&](const Agent& a, std::size_t s) {
    const auto& t = a.tracks[s];
    const auto& doc = a.replica.doc().text;
    const auto repl = utf8::decode(sites[s].replacement);
    std::size_t from = *t.start, to = *t.end;
    std::u32string insert = repl;
    if (sites[s].is_anchor()) {
      insert = from == 0 ? repl + U" " : U" " + repl;
    } else if (repl.empty()) {
      if (from > 0 && doc[from - 1] == U' ') --from;
      else if (to < doc.size() && doc[to] == U' ') ++to;
    }
    EditOp op(a.replica.server_revision());
    op.retain(from);
    if (!insert.empty()) op.insert(std::u32string_view(insert), a.id);
    op.del(to - from).retain(doc.size() - to);
    return op;
  };

  next_fix = [&](Agent& a) {
    while (!a.queue.empty() && handled(a, a.queue.front())) {
      a.queue.pop_front();
      ++result.abandoned;
    }
    if (a.queue.empty()) {
      a.busy = false;
      return;
    }
    a.busy = true;
    const auto s = a.queue.front();
    a.queue.pop_front();
    const double reaction = std::max(0.0, rng.normal(a.profile.reaction_mean_s, a.profile.reaction_sd_s));
    const double chars = std::max<double>(1.0, static_cast<double>(utf8::length(sites[s].replacement)));
    const double typing = chars / 5.0 / a.profile.typing_wpm * 60.0;
    const auto done = loop.now() + static_cast<std::int64_t>(std::llround(1000.0 * (reaction + typing)));
    loop.at(done, [&, s, &a = a] {
      if (handled(a, s) || session.phase() != Phase::Running) {
        ++result.abandoned;
      } else if (!rng.bernoulli(a.profile.fix_accuracy)) {
        ++result.fixes_failed;
      } else {
        const auto op = build_fix(a, s);
        a.tracks[s].mine = true;
        auto local = op;
        if (auto out = a.replica.local_edit(op)) send(a, *out);
        shift(a, local, std::nullopt);
      }
      next_fix(a);
    });
  };

  auto encounter = [&](Agent& a, std::size_t s) {
    if (!rng.bernoulli(a.visit_p)) return;
    ++result.detections;
    a.queue.push_back(s);
    if (!a.busy) next_fix(a);
  };

  deliver = [&](Agent& a, const Message& m) {
    switch (m.type) {
      case MessageType::Inject: {
        const auto rev = m.payload["revision"].get<Revision>();
        const auto applied = a.replica.on_remote(op_from_json(m.payload["components"], rev - 1), rev);
        shift(a, applied, std::nullopt);
        std::size_t pos = 0;
        std::u32string text;
        for (const auto& c : applied.components()) {
          if (auto* r = std::get_if<Retain>(&c)) {
            pos += r->n;
          } else if (auto* ins = std::get_if<Insert>(&c)) {
            text = ins->text;
            break;
          }
        }
        const auto word = m.payload["index"].get<std::size_t>();
        const std::size_t word_start = pos + (!text.empty() && (text[0] == U' ' || text[0] == kParagraphSeparator) ? 1 : 0);
        const std::size_t word_end = pos + text.size();
        for (auto s : starts_at[word]) a.tracks[s].start = word_start;
        for (auto s : ends_at[word]) {
          auto& t = a.tracks[s];
          t.end = word_end;
          t.original = a.replica.doc().text.substr(*t.start, *t.end - *t.start);
        }
        for (auto s : anchors_after[word]) a.tracks[s].start = a.tracks[s].end = word_end;
        // rotating correctors only scan the paragraphs they own
        const auto& owner = m.payload["owner"];
        if (a.role.rotation_slot && owner.is_number() && owner.get<AuthorId>() != a.id) break;
        const auto delay = static_cast<std::int64_t>(std::llround(a.role.audio_delay_s * 1000.0));
        for (auto s : visible_at[word]) {
          loop.at(loop.now() + delay, [&, s, &a = a] { encounter(a, s); });
        }
        break;
      }
      case MessageType::Broadcast: {
        const auto rev = m.payload["revision"].get<Revision>();
        const auto author = m.payload["author"].get<AuthorId>();
        const auto applied = a.replica.on_remote(op_from_json(m.payload["components"], rev - 1), rev);
        shift(a, applied, author);
        break;
      }
      case MessageType::Ack:
        if (auto next = a.replica.on_ack(m.payload["revision"].get<Revision>())) send(a, *next);
        break;
      case MessageType::Error:
        if (m.payload.contains("snapshot")) {
          // lost the in-flight edit; start over from the server state
          a.replica.resync(snapshot_from_json(m.payload["snapshot"]));
          for (auto& t : a.tracks) t.touched = true;
        }
        break;
      default: break;
    }
  };

  session.start_playback(0);
  std::int64_t last_end = 0;
  for (const auto& w : transcript) {
    const auto t = static_cast<std::int64_t>(std::llround(w.end_s * 1000.0));
    last_end = std::max(last_end, t);
    loop.at(t, [&] { route(session.injection_tick(loop.now())); });
  }
  double max_delay = 0;
  for (const auto& r : roles) max_delay = std::max(max_delay, r.audio_delay_s);
  const auto finish = last_end + static_cast<std::int64_t>(max_delay * 1000.0) + options.tail_ms;
  loop.at(finish, [&] {
    auto r = session.finalize(loop.now());
    result.delta = *r.artifacts.metrics;
    result.final_text = r.artifacts.final_text;
    result.oplog = r.artifacts.oplog;
  });
  loop.run(options.speedup);
  result.conflicts = session.server().conflicts();
  result.concurrent_pairs = session.server().concurrent_pairs();
  return result;
}

// --- sweeps ---------------------------------------------------------------------------------

struct SweepRow {
  ScenarioKind scenario = ScenarioKind::A;
  std::uint64_t seed = 0;
  ExperimentResult result;
};

struct Interval {
  double mean = 0;
  double low = 0;
  double high = 0;
  bool overlaps(const Interval& o) const { return low <= o.high && o.low <= high; }
};

/// Two-sided Student-t confidence interval of the mean.
inline Interval mean_interval(std::span<const double> xs, double level = 0.95) {
  Interval iv;
  if (xs.empty()) return iv;
  const auto n = static_cast<double>(xs.size());
  for (double x : xs) iv.mean += x;
  iv.mean /= n;
  if (xs.size() < 2) return {iv.mean, iv.mean, iv.mean};
  double ss = 0;
  for (double x : xs) ss += (x - iv.mean) * (x - iv.mean);
  const double se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  const boost::math::students_t dist(n - 1.0);
  const double t = boost::math::quantile(boost::math::complement(dist, (1.0 - level) / 2.0));
  iv.low = iv.mean - t * se;
  iv.high = iv.mean + t * se;
  return iv;
}

/// Every scenario x seed combination. `transcript_for(seed)` supplies the
/// input, so all scenarios of one seed see the same text. Runs execute on
/// parallel threads; results do not depend on scheduling.
inline std::vector<SweepRow> sweep(std::span<const ScenarioKind> scenarios, std::span<const std::uint64_t> seeds,
                                   const std::array<AgentProfile, 3>& agents,
                                   const std::function<Transcript(std::uint64_t)>& transcript_for, const std::string& ref,
                                   const SimOptions& options = {}, std::size_t threads = 0) {
  std::map<std::uint64_t, Transcript> inputs;
  for (auto s : seeds) {
    if (!inputs.contains(s)) inputs.emplace(s, transcript_for(s));
  }
  std::vector<SweepRow> rows;
  for (auto k : scenarios) {
    for (auto s : seeds) rows.push_back({k, s, {}});
  }
  if (threads == 0) threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (options.speedup > 0) threads = rows.size();  // paced runs mostly sleep
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(rows.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, rows.size()); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < rows.size(); i = next++) {
        try {
          rows[i].result = run_experiment(rows[i].scenario, agents, inputs.at(rows[i].seed), ref, rows[i].seed, options);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

/// Same grid on one fixed transcript.
inline std::vector<SweepRow> sweep(std::span<const ScenarioKind> scenarios, std::span<const std::uint64_t> seeds,
                                   const std::array<AgentProfile, 3>& agents, const Transcript& transcript, const std::string& ref,
                                   const SimOptions& options = {}, std::size_t threads = 0) {
  return sweep(scenarios, seeds, agents, [&](std::uint64_t) { return transcript; }, ref, options, threads);
}

/// Corrupts `ref` to `target_wer` with the run's seed and times it at the
/// reference's reading speed.
inline std::function<Transcript(std::uint64_t)> seeded_input(const std::string& ref, double target_wer) {
  return [ref, target_wer](std::uint64_t seed) {
    return synthetic_timing(seed_errors(ref, target_wer, seed), speech_duration_s(words_from_text(ref).size()));
  };
}

/// Per-scenario mean reduction with its 95% interval, and total conflicts.
struct ScenarioSummary {
  ScenarioKind scenario = ScenarioKind::A;
  Interval reduction;
  std::size_t conflicts = 0;
  std::size_t runs = 0;
};

inline std::vector<ScenarioSummary> summarize(std::span<const SweepRow> rows) {
  std::vector<ScenarioSummary> out;
  for (const auto& r : rows) {
    if (std::none_of(out.begin(), out.end(), [&](const ScenarioSummary& s) { return s.scenario == r.scenario; })) {
      out.push_back({r.scenario, {}, 0, 0});
    }
  }
  for (auto& s : out) {
    std::vector<double> xs;
    for (const auto& r : rows) {
      if (r.scenario != s.scenario) continue;
      xs.push_back(r.result.delta.relative_wer_reduction);
      s.conflicts += r.result.conflicts;
    }
    s.runs = xs.size();
    s.reduction = mean_interval(xs);
  }
  return out;
}

inline std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "scenario,seed,baseline_wer,edited_wer,relative_wer_reduction,punct_error_delta,cap_error_delta,sites,detections,"
         "fixes_sent,conflicts,concurrent_pairs\n";
  out.precision(6);
  for (const auto& r : rows) {
    const auto& d = r.result.delta;
    out << to_string(r.scenario) << ',' << r.seed << ',' << d.baseline.wer() << ',' << d.edited.wer() << ','
        << d.relative_wer_reduction << ',' << d.punct_error_delta << ',' << d.cap_error_delta << ',' << r.result.sites << ','
        << r.result.detections << ',' << r.result.fixes_sent << ',' << r.result.conflicts << ',' << r.result.concurrent_pairs
        << '\n';
  }
  return out.str();
}

}  // namespace cart::sim
