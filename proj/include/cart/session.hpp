#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cart/doc_server.hpp"
#include "cart/formatter.hpp"
#include "cart/metrics.hpp"
#include "cart/protocol.hpp"
#include "cart/scenario.hpp"
#include "cart/transcript.hpp"

namespace cart {

struct SessionConfig {
  ScenarioConfig scenario;
  Transcript transcript;
  std::optional<std::string> reference_text;
  std::optional<std::string> media_uri;
  std::optional<std::filesystem::path> persist_dir;  // artifacts go to <persist_dir>/<session id>/
  std::size_t history_limit = DocumentServer::kDefaultHistory;
};

inline void validate(const SessionConfig& c) {
  validate(c.scenario);
  if (c.transcript.empty()) throw Error(ErrorCode::InvalidConfig, "transcript is empty");
  try {
    validate_transcript(c.transcript);
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  if (c.history_limit == 0) throw Error(ErrorCode::InvalidConfig, "history_limit must be positive");
}

/// Reads a session config. `transcript` is either an inline {"words": [...]}
/// object or a path; `reference_file`, `transcript` and `persist_dir` paths
/// are relative to `base_dir`.
inline SessionConfig session_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "session config must be an object");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  SessionConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "scenario") {
        c.scenario = scenario_config_from_json(value);
      } else if (key == "transcript") {
        c.transcript = value.is_string() ? load_transcript(resolve(value.get<std::string>()).string()) : transcript_from_json(value);
      } else if (key == "reference_text") {
        c.reference_text = value.get<std::string>();
      } else if (key == "reference_file") {
        c.reference_text = read_file(resolve(value.get<std::string>()).string());
      } else if (key == "media_uri") {
        c.media_uri = value.get<std::string>();
      } else if (key == "persist_dir") {
        c.persist_dir = resolve(value.get<std::string>());
      } else if (key == "history_limit") {
        c.history_limit = value.get<std::size_t>();
      } else {
        throw Error(ErrorCode::InvalidConfig, "unknown config field '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("session config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidConfig) throw;
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  validate(c);
  return c;
}

// --- artifacts ------------------------------------------------------------------------

/// Everything a finished session leaves behind. All of it is a function of
/// the op log and the reference, so replaying the log rebuilds it exactly.
struct SessionArtifacts {
  std::string oplog;
  std::string final_text;
  std::string baseline_text;
  std::optional<MetricsDelta> metrics;

  std::optional<std::string> metrics_json() const {
    if (!metrics) return std::nullopt;
    return to_json(*metrics).dump(2) + "\n";
  }
};

inline std::map<AuthorId, std::size_t> edit_counts(const std::vector<LogEntry>& log) {
  std::map<AuthorId, std::size_t> counts;
  for (const auto& e : log) {
    if (e.author != kSystemAuthor) ++counts[e.author];
  }
  return counts;
}

inline SessionArtifacts build_artifacts(const std::vector<LogEntry>& log, const std::optional<std::string>& reference) {
  SessionArtifacts a;
  a.oplog = to_ndjson(log);
  a.final_text = replay_log(log).utf8();
  a.baseline_text = system_stream(log);
  if (reference) a.metrics = reduction_report(*reference, a.baseline_text, a.final_text, edit_counts(log));
  return a;
}

inline SessionArtifacts replay_artifacts(std::string_view oplog_text, const std::optional<std::string>& reference) {
  return build_artifacts(parse_ndjson_log(oplog_text), reference);
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::InvalidInput, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline void write_artifacts(const std::filesystem::path& dir, const SessionArtifacts& a) {
  std::filesystem::create_directories(dir);
  write_text(dir / "oplog.ndjson", a.oplog);
  write_text(dir / "final.txt", a.final_text);
  write_text(dir / "baseline.txt", a.baseline_text);
  if (auto m = a.metrics_json()) write_text(dir / "metrics.json", *m);
}

// --- session --------------------------------------------------------------------------

enum class Phase { Lobby, Running, Finished };

inline constexpr std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Lobby: return "lobby";
    case Phase::Running: return "running";
    case Phase::Finished: return "finished";
  }
  return "?";
}

/// A message for one connected editor.
struct Outgoing {
  AuthorId to = 0;
  Message msg;
};

struct JoinResult {
  AuthorId user = 0;
  std::vector<Outgoing> out;
};

struct FinalizeResult {
  SessionArtifacts artifacts;
  std::vector<Outgoing> out;
};

/// One correction session. Not thread-safe: the owner serializes calls. Every
/// operation takes the current server time and returns the messages to send.
class Session {
 public:
  Session(std::string id, SessionConfig config) : id_(std::move(id)), config_(std::move(config)), server_(config_.history_limit) {
    validate(config_);
    const auto paragraphs = format_transcript(config_.transcript, config_.scenario.paragraph_window());
    paragraph_of_word_.resize(config_.transcript.size());
    for (std::size_t p = 0; p < paragraphs.size(); ++p) {
      for (std::size_t w = paragraphs[p].first_word; w < paragraphs[p].last_word; ++w) paragraph_of_word_[w] = p;
    }
    for (const auto& w : config_.transcript) word_end_ms_.push_back(std::llround(w.end_s * 1000.0));
  }

  const std::string& id() const { return id_; }
  const SessionConfig& config() const { return config_; }
  Phase phase() const { return phase_; }
  const AttributedDoc& doc() const { return server_.doc(); }
  const std::vector<LogEntry>& log() const { return server_.log(); }
  const DocumentServer& server() const { return server_; }
  const std::vector<AuthorId>& users() const { return users_; }
  const std::vector<RoleAssignment>& roles() const { return roles_; }
  const ChunkMap& chunks() const { return chunks_; }
  std::size_t injected_upto() const { return injected_upto_; }
  std::int64_t clock_origin() const { return clock_origin_; }
  bool playback_complete() const { return injected_upto_ == config_.transcript.size(); }
  std::int64_t playback_end_ms() const { return clock_origin_ + word_end_ms_.back(); }
  std::size_t paragraph_of_word(std::size_t index) const { return paragraph_of_word_.at(index); }

  std::optional<RoleAssignment> assignment(AuthorId user) const {
    for (const auto& r : roles_) {
      if (r.user == user) return r;
    }
    return std::nullopt;
  }

  /// Owner of the paragraph at a document position, empty when shared.
  std::optional<AuthorId> owner_at(std::size_t position) const {
    return chunk_owner(chunks_, position, [this](std::size_t pos) { return paragraph_index_at(doc(), pos); });
  }

  /// Adds the next editor. Roles are handed out once the third one joins.
  JoinResult join(std::int64_t now_ms) {
    if (users_.size() >= kGroupSize) throw Error(ErrorCode::SessionFull, "session " + id_ + " already has 3 editors");
    const auto user = static_cast<AuthorId>(users_.size() + 1);
    users_.push_back(user);
    if (users_.size() == kGroupSize) {
      roles_ = assign_roles(config_.scenario.kind, users_);
      chunks_ = ChunkMap::for_roles(roles_);
    }
    JoinResult r{user, {}};
    r.out.push_back(welcome(user, now_ms));
    return r;
  }

  /// Fresh Welcome with the current snapshot for an editor who reconnects.
  Outgoing welcome(AuthorId user, std::int64_t now_ms) const {
    require_user(user);
    const auto a = assignment(user);
    nlohmann::json payload{{"user", user},
                           {"assignment", a ? to_json(*a) : nlohmann::json(nullptr)},
                           {"snapshot", snapshot_json(doc())},
                           {"scenario", to_json(config_.scenario)},
                           {"phase", std::string(to_string(phase_))},
                           {"word_count", config_.transcript.size()}};
    if (config_.media_uri) payload["media_uri"] = *config_.media_uri;
    if (phase_ != Phase::Lobby) payload["clock_origin_ms"] = clock_origin_;
    return {user, make(MessageType::Welcome, std::move(payload), now_ms)};
  }

  std::vector<Outgoing> start_playback(std::int64_t now_ms) {
    if (phase_ != Phase::Lobby) throw Error(ErrorCode::AlreadyRunning, "session " + id_ + " already started");
    if (users_.size() < kGroupSize) {
      throw Error(ErrorCode::NotEnoughUsers, std::to_string(users_.size()) + " of 3 editors joined");
    }
    phase_ = Phase::Running;
    clock_origin_ = now_ms;
    std::vector<Outgoing> out;
    for (const auto& r : roles_) {
      out.push_back({r.user, make(MessageType::Start,
                                  {{"clock_origin_ms", clock_origin_}, {"audio_delay_s", r.audio_delay_s}, {"assignment", to_json(r)}},
                                  now_ms)});
    }
    return out;
  }

  /// Injects every word whose end time has passed on the playback clock.
  std::vector<Outgoing> injection_tick(std::int64_t now_ms) {
    std::vector<Outgoing> out;
    if (phase_ != Phase::Running) return out;
    const std::int64_t elapsed = now_ms - clock_origin_;
    while (injected_upto_ < config_.transcript.size() && word_end_ms_[injected_upto_] <= elapsed) {
      const std::size_t i = injected_upto_;
      const std::size_t paragraph = paragraph_of_word_[i];
      const bool opens = i > 0 && paragraph != paragraph_of_word_[i - 1];
      if (!chunks_.members.empty() && paragraph == chunks_.paragraph_count()) chunks_ = advance_rotation(chunks_, paragraph);
      const auto& e = server_.apply_local(inject_word(doc(), config_.transcript[i], opens), kSystemAuthor, now_ms);
      ++injected_upto_;
      nlohmann::json payload{{"word", config_.transcript[i].text},
                             {"index", i},
                             {"paragraph", paragraph},
                             {"revision", e.revision},
                             {"components", components_to_json(e.op)}};
      const auto owner = chunks_.members.empty() ? std::nullopt : std::optional<AuthorId>(chunks_.ranges[paragraph].owner);
      payload["owner"] = owner ? nlohmann::json(*owner) : nlohmann::json("all");
      for (auto u : users_) out.push_back({u, make(MessageType::Inject, payload, now_ms)});
    }
    return out;
  }

  /// Applies a client edit: Ack to the sender, Broadcast to everyone else.
  std::vector<Outgoing> handle_edit(AuthorId user, const EditOp& op, std::int64_t now_ms) {
    require_user(user);
    if (phase_ != Phase::Running) throw Error(ErrorCode::NotRunning, "edits are accepted only while running");
    for (const auto& c : op.components()) {
      if (auto* ins = std::get_if<Insert>(&c); ins && ins->author != user) {
        throw Error(ErrorCode::MalformedOp, "insert attributed to another author");
      }
    }
    const auto& e = server_.receive(op, user, now_ms);
    std::vector<Outgoing> out;
    out.push_back({user, make(MessageType::Ack, {{"revision", e.revision}}, now_ms)});
    nlohmann::json payload{{"revision", e.revision}, {"author", user}, {"components", components_to_json(e.op)}};
    for (auto u : users_) {
      if (u != user) out.push_back({u, make(MessageType::Broadcast, payload, now_ms)});
    }
    return out;
  }

  /// Ends the session, persists artifacts and reports metrics.
  FinalizeResult finalize(std::int64_t now_ms) {
    if (phase_ == Phase::Finished) throw Error(ErrorCode::AlreadyFinished, "session " + id_ + " already finished");
    if (phase_ == Phase::Lobby) throw Error(ErrorCode::NotRunning, "session " + id_ + " never started");
    phase_ = Phase::Finished;
    FinalizeResult r{build_artifacts(log(), config_.reference_text), {}};
    if (config_.persist_dir) write_artifacts(*config_.persist_dir / id_, r.artifacts);
    for (auto u : users_) {
      r.out.push_back({u, make(MessageType::End, {{"revision", doc().revision}, {"words_injected", injected_upto_}}, now_ms)});
      if (r.artifacts.metrics) r.out.push_back({u, make(MessageType::Metrics, {{"delta", to_json(*r.artifacts.metrics)}}, now_ms)});
    }
    return r;
  }

  /// Dispatches a client envelope other than Join. Failures become an Error
  /// message to the sender; RevisionTooOld carries a snapshot for resync.
  std::vector<Outgoing> handle(const Message& m, std::int64_t now_ms) {
    try {
      if (m.session != id_) throw Error(ErrorCode::UnknownSession, "message for session '" + m.session + "'");
      require_user(m.sender);
      switch (m.type) {
        case MessageType::Edit: return handle_edit(m.sender, edit_from_payload(m.payload), now_ms);
        case MessageType::Start: return start_playback(now_ms);
        case MessageType::End: return finalize(now_ms).out;
        case MessageType::Join: return {welcome(m.sender, now_ms)};
        default: throw Error(ErrorCode::InvalidInput, "clients cannot send " + std::string(to_string(m.type)));
      }
    } catch (const Error& e) {
      return {error_message(m.sender, e, now_ms)};
    }
  }

  Outgoing error_message(AuthorId to, const Error& e, std::int64_t now_ms) const {
    nlohmann::json payload{{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
    if (e.code() == ErrorCode::RevisionTooOld) payload["snapshot"] = snapshot_json(doc());
    return {to, make(MessageType::Error, std::move(payload), now_ms)};
  }

 private:
  void require_user(AuthorId user) const {
    if (std::find(users_.begin(), users_.end(), user) == users_.end()) {
      throw Error(ErrorCode::UnknownUser, "author " + std::to_string(user) + " has not joined");
    }
  }

  Message make(MessageType type, nlohmann::json payload, std::int64_t now_ms) const {
    return Message{type, id_, kSystemAuthor, std::move(payload), now_ms};
  }

  std::string id_;
  SessionConfig config_;
  DocumentServer server_;
  Phase phase_ = Phase::Lobby;
  std::vector<AuthorId> users_;
  std::vector<RoleAssignment> roles_;
  ChunkMap chunks_;
  std::vector<std::size_t> paragraph_of_word_;
  std::vector<std::int64_t> word_end_ms_;
  std::size_t injected_upto_ = 0;
  std::int64_t clock_origin_ = 0;
};

/// A session plus the lock that serializes work on it.
struct SessionSlot {
  explicit SessionSlot(Session s) : session(std::move(s)) {}
  std::mutex mutex;
  Session session;
};

/// Owns all sessions of a server. Ids are unique for the registry's lifetime.
class SessionRegistry {
 public:
  SessionRegistry() : rng_(std::random_device{}()) {}

  std::string create(SessionConfig config) {
    validate(config);
    std::lock_guard lock(mutex_);
    std::string id;
    do {
      char buf[24];
      std::snprintf(buf, sizeof buf, "s%llx", static_cast<unsigned long long>(rng_()));
      id = buf;
    } while (sessions_.count(id) != 0);
    sessions_.emplace(id, std::make_shared<SessionSlot>(Session(id, std::move(config))));
    return id;
  }

  std::shared_ptr<SessionSlot> find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
    return it->second;
  }

  std::vector<std::string> ids() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, slot] : sessions_) out.push_back(id);
    return out;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::mt19937_64 rng_;
  std::map<std::string, std::shared_ptr<SessionSlot>> sessions_;
};

}  // namespace cart
