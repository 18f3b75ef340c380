#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "cart/replica.hpp"
#include "cart/session.hpp"

namespace {

using cart::MessageType;
using cart::ScenarioKind;

// 20 words, one every 500 ms, each lasting 400 ms.
cart::Transcript twenty_words() {
  cart::Transcript t;
  for (int i = 0; i < 20; ++i) {
    t.push_back({(i % 7 == 6 ? "Satz" + std::to_string(i) + "." : "wort" + std::to_string(i)), 0.5 * i, 0.5 * i + 0.4});
  }
  return t;
}

cart::SessionConfig config(ScenarioKind kind = ScenarioKind::A, cart::Transcript t = twenty_words()) {
  cart::SessionConfig c;
  c.scenario.kind = kind;
  c.transcript = std::move(t);
  c.reference_text = cart::join_words(c.transcript);
  return c;
}

std::vector<cart::Outgoing> of_type(const std::vector<cart::Outgoing>& out, MessageType type) {
  std::vector<cart::Outgoing> r;
  for (const auto& o : out) {
    if (o.msg.type == type) r.push_back(o);
  }
  return r;
}

cart::Session running(ScenarioKind kind = ScenarioKind::A, cart::SessionConfig c = config()) {
  c.scenario.kind = kind;
  cart::Session s("t", std::move(c));
  for (int i = 0; i < 3; ++i) s.join(0);
  s.start_playback(1000);
  return s;
}

void expect_code(auto&& fn, cart::ErrorCode code) {
  try {
    fn();
    ADD_FAILURE() << "no error, expected " << cart::to_string(code);
  } catch (const cart::Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

TEST(SessionCreate, ValidConfigStartsInLobby) {
  cart::SessionRegistry reg;
  const auto id = reg.create(config());
  auto slot = reg.find(id);
  EXPECT_EQ(slot->session.phase(), cart::Phase::Lobby);
  EXPECT_TRUE(slot->session.doc().text.empty());
  EXPECT_TRUE(slot->session.roles().empty());
  expect_code([&] { reg.find("nope"); }, cart::ErrorCode::UnknownSession);
}

TEST(SessionCreate, EmptyTranscriptIsInvalid) {
  cart::SessionRegistry reg;
  expect_code([&] { reg.create(config(ScenarioKind::A, {})); }, cart::ErrorCode::InvalidConfig);
}

TEST(SessionCreate, IdsAreUnique) {
  cart::SessionRegistry reg;
  std::set<std::string> ids;
  for (int i = 0; i < 1000; ++i) ids.insert(reg.create(config()));
  EXPECT_EQ(ids.size(), 1000u);
}

TEST(SessionConfigFile, ParsesInlineTranscript) {
  auto j = nlohmann::json::parse(R"({"scenario":{"kind":"B"},"transcript":{"words":[{"w":"Hallo","s":0.1,"e":0.4}]},
                                     "reference_text":"Hallo","media_uri":"video.mp4"})");
  auto c = cart::session_config_from_json(j);
  EXPECT_EQ(c.scenario.kind, ScenarioKind::B);
  EXPECT_EQ(c.transcript.size(), 1u);
  EXPECT_EQ(*c.media_uri, "video.mp4");
  expect_code([&] { cart::session_config_from_json(nlohmann::json::parse(R"({"transcript":{"words":[]}})")); },
              cart::ErrorCode::InvalidConfig);
  expect_code([&] { cart::session_config_from_json(nlohmann::json::parse(R"({"bogus":1})")); }, cart::ErrorCode::InvalidConfig);
}

TEST(SessionJoin, RolesAfterThirdUser) {
  cart::Session s("t", config(ScenarioKind::B));
  auto first = s.join(0);
  EXPECT_EQ(first.user, 1u);
  EXPECT_TRUE(first.out[0].msg.payload["assignment"].is_null());
  s.join(0);
  auto third = s.join(0);
  EXPECT_EQ(third.user, 3u);
  EXPECT_EQ(third.out[0].msg.payload["assignment"]["audio_delay_s"], 20.0);
  expect_code([&] { s.join(0); }, cart::ErrorCode::SessionFull);
}

TEST(StartPlayback, SendsDelaysToEveryone) {
  cart::Session s("t", config(ScenarioKind::B));
  s.join(0);
  s.join(0);
  expect_code([&] { s.start_playback(5); }, cart::ErrorCode::NotEnoughUsers);
  s.join(0);
  auto out = s.start_playback(5000);
  ASSERT_EQ(out.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(out[i].to, i + 1);
    EXPECT_EQ(out[i].msg.type, MessageType::Start);
    EXPECT_EQ(out[i].msg.payload["audio_delay_s"], 10.0 * static_cast<double>(i));
    EXPECT_EQ(out[i].msg.payload["clock_origin_ms"], 5000);
  }
  EXPECT_EQ(s.clock_origin(), 5000);
  expect_code([&] { s.start_playback(6000); }, cart::ErrorCode::AlreadyRunning);
}

TEST(InjectionTick, FollowsWordEndTimes) {
  auto s = running();
  EXPECT_TRUE(s.injection_tick(1000 + 399).empty());
  // words 0..2 end at 400, 900, 1400 ms
  auto out = s.injection_tick(1000 + 1400);
  auto to_one = of_type(out, MessageType::Inject);
  std::erase_if(to_one, [](const auto& o) { return o.to != 1; });
  ASSERT_EQ(to_one.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(to_one[k].msg.payload["index"], k);
  EXPECT_EQ(s.doc().utf8(), "wort0 wort1 wort2");
  // positions of the inserted words grow strictly
  std::size_t last = 0;
  for (std::size_t k = 1; k < s.log().size(); ++k) {
    const auto& comps = s.log()[k].op.components();
    const auto pos = std::get<cart::Retain>(comps.front()).n;
    EXPECT_GT(pos, last);
    last = pos;
  }
  out = s.injection_tick(1000 + 60'000);
  EXPECT_EQ(of_type(out, MessageType::Inject).size(), 3u * 17u);
  EXPECT_TRUE(s.playback_complete());
  EXPECT_EQ(s.doc().utf8(), cart::join_words(twenty_words()));
}

TEST(InjectionTick, JitterDoesNotReorder) {
  auto a = running();
  auto b = running();
  for (std::int64_t t = 1000; t < 12'000; t += 100) a.injection_tick(t);
  std::mt19937_64 rng(4);
  for (std::int64_t t = 1000; t < 12'000; t += 100) b.injection_tick(t + static_cast<std::int64_t>(rng() % 100));
  EXPECT_EQ(a.doc().text, b.doc().text);
}

TEST(InjectionTick, ChunkedScenarioStartsParagraphsAndRotatesOwners) {
  cart::Transcript t;
  for (int i = 0; i < 120; ++i) t.push_back({"abcdefghi", i * 0.5, i * 0.5 + 0.4});
  auto s = running(ScenarioKind::C, config(ScenarioKind::C, t));
  auto out = s.injection_tick(1000 + 100'000);
  EXPECT_TRUE(s.playback_complete());
  const auto paragraphs = cart::format_transcript(t, cart::kChunkedParagraph);
  const auto text = s.doc().utf8();
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), paragraphs.size() - 1);
  ASSERT_EQ(s.chunks().ranges.size(), paragraphs.size());
  for (std::size_t p = 0; p < paragraphs.size(); ++p) EXPECT_EQ(s.chunks().ranges[p].owner, p % 3 + 1);
  for (const auto& o : of_type(out, MessageType::Inject)) {
    const auto p = o.msg.payload["paragraph"].get<std::size_t>();
    EXPECT_EQ(o.msg.payload["owner"], p % 3 + 1);
  }
  // the paragraph just after the first separator belongs to user 2
  EXPECT_EQ(s.owner_at(text.find('\n') + 1), 2u);
  EXPECT_EQ(s.owner_at(0), 1u);
}

TEST(HandleEdit, AppliedAndAcknowledged) {
  auto s = running();
  s.injection_tick(1000 + 900);  // "wort0 wort1"
  cart::EditOp op(s.doc().revision);
  op.retain(0).del(5).insert(U"Wort0", 2).retain(6);
  auto out = s.handle_edit(2, op, 3000);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].to, 2u);
  EXPECT_EQ(out[0].msg.type, MessageType::Ack);
  EXPECT_EQ(out[0].msg.payload["revision"], s.doc().revision);
  for (std::size_t i = 1; i < 3; ++i) {
    EXPECT_EQ(out[i].msg.type, MessageType::Broadcast);
    EXPECT_NE(out[i].to, 2u);
    EXPECT_EQ(out[i].msg.payload["author"], 2);
  }
  EXPECT_EQ(s.doc().utf8(), "Wort0 wort1");
  EXPECT_EQ(s.log().back().op.components(), op.components());
}

TEST(HandleEdit, ConcurrentWithInjection) {
  auto s = running();
  s.injection_tick(1000 + 400);  // "wort0"
  cart::EditOp op(s.doc().revision);
  op.del(5).insert(U"WORT", 1);
  s.injection_tick(1000 + 900);  // word 1 lands first
  s.handle_edit(1, op, 2000);
  EXPECT_EQ(s.doc().utf8(), "WORT wort1");
  EXPECT_EQ(cart::replay_log(s.log()), s.doc());
  s.injection_tick(1000 + 1400);
  EXPECT_EQ(s.doc().utf8(), "WORT wort1 wort2");
}

TEST(HandleEdit, Errors) {
  auto c = config();
  c.history_limit = 2;
  auto s = running(ScenarioKind::A, c);
  s.injection_tick(1000 + 5000);
  cart::EditOp stale(1);
  stale.retain(5);
  expect_code([&] { s.handle_edit(1, stale, 0); }, cart::ErrorCode::RevisionTooOld);
  cart::EditOp ok(s.doc().revision);
  ok.retain(s.doc().size());
  expect_code([&] { s.handle_edit(9, ok, 0); }, cart::ErrorCode::UnknownUser);
  cart::EditOp forged(s.doc().revision);
  forged.insert(U"x", 3).retain(s.doc().size());
  expect_code([&] { s.handle_edit(1, forged, 0); }, cart::ErrorCode::MalformedOp);
  cart::EditOp wrong_len(s.doc().revision);
  wrong_len.retain(s.doc().size() + 3);
  expect_code([&] { s.handle_edit(1, wrong_len, 0); }, cart::ErrorCode::MalformedOp);

  // via the envelope: RevisionTooOld comes back with a snapshot
  cart::Message m{MessageType::Edit, "t", 1, cart::edit_payload(stale), 0};
  auto out = s.handle(m, 10);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].msg.type, MessageType::Error);
  EXPECT_EQ(out[0].msg.payload["code"], "RevisionTooOld");
  EXPECT_EQ(cart::snapshot_from_json(out[0].msg.payload["snapshot"]), s.doc());
}

TEST(HandleEdit, OwnershipIsAdvisory) {
  for (auto kind : {ScenarioKind::A, ScenarioKind::B, ScenarioKind::C, ScenarioKind::D}) {
    cart::Transcript t;
    for (int i = 0; i < 60; ++i) t.push_back({"abcdefghi", i * 0.5, i * 0.5 + 0.4});
    auto s = running(kind, config(kind, t));
    s.injection_tick(1000 + 100'000);
    for (cart::AuthorId u = 1; u <= 3; ++u) {
      for (std::size_t pos : {std::size_t{0}, s.doc().size() / 2, s.doc().size()}) {
        cart::EditOp op(s.doc().revision);
        op.retain(pos).insert(U"!", u).retain(s.doc().size() - pos);
        EXPECT_NO_THROW(s.handle_edit(u, op, 0)) << cart::to_string(kind);
      }
    }
  }
}

TEST(Finalize, NoEditsMeansNoReduction) {
  auto c = config();
  c.reference_text = "wort0 wort1 falsch wort3";
  auto s = running(ScenarioKind::A, c);
  s.injection_tick(1000 + 1900);
  auto r = s.finalize(5000);
  ASSERT_TRUE(r.artifacts.metrics);
  EXPECT_EQ(r.artifacts.metrics->baseline, r.artifacts.metrics->edited);
  EXPECT_EQ(r.artifacts.metrics->relative_wer_reduction, 0.0);
  EXPECT_EQ(of_type(r.out, MessageType::End).size(), 3u);
  EXPECT_EQ(of_type(r.out, MessageType::Metrics).size(), 3u);
  expect_code([&] { s.finalize(6000); }, cart::ErrorCode::AlreadyFinished);
  cart::EditOp op(s.doc().revision);
  op.retain(s.doc().size());
  expect_code([&] { s.handle_edit(1, op, 0); }, cart::ErrorCode::NotRunning);
}

TEST(Finalize, AllErrorsCorrected) {
  auto c = config();
  c.reference_text = "wort0 wort1 falsch wort3";
  auto s = running(ScenarioKind::A, c);
  s.injection_tick(1000 + 1900);
  cart::EditOp op(s.doc().revision);
  op.retain(12).del(5).insert(U"falsch", 3).retain(6);
  s.handle_edit(3, op, 2500);
  auto r = s.finalize(5000);
  EXPECT_EQ(r.artifacts.final_text, "wort0 wort1 falsch wort3");
  EXPECT_EQ(r.artifacts.baseline_text, "wort0 wort1 wort2 wort3");
  EXPECT_EQ(r.artifacts.metrics->edited.errors(), 0u);
  EXPECT_EQ(r.artifacts.metrics->relative_wer_reduction, 1.0);
  EXPECT_EQ(r.artifacts.metrics->per_user_edit_counts.at(3), 1u);
}

TEST(Finalize, LobbySessionCannotFinish) {
  cart::Session s("t", config());
  expect_code([&] { s.finalize(0); }, cart::ErrorCode::NotRunning);
}

TEST(Persistence, ReplayReproducesArtifactsByteForByte) {
  const auto dir = std::filesystem::temp_directory_path() / "cart_session_test";
  std::filesystem::remove_all(dir);
  auto c = config();
  c.persist_dir = dir;
  c.reference_text = "Wort0 wort1, Wort2 wort3 wort4 wort5 Satz6. wort7";
  auto s = running(ScenarioKind::C, c);
  std::mt19937_64 rng(8);
  for (std::int64_t t = 1000; t < 6000; t += 250) {
    s.injection_tick(t);
    const auto user = static_cast<cart::AuthorId>(1 + rng() % 3);
    const auto pos = rng() % (s.doc().size() + 1);
    cart::EditOp op(s.doc().revision > 2 ? s.doc().revision - 1 : s.doc().revision);  // sometimes stale
    const auto base_len = op.base_revision == s.doc().revision ? s.doc().size() : s.log()[op.base_revision - 1].op.target_length();
    const auto p = std::min<std::size_t>(pos, base_len);
    op.retain(p).insert(U"x", user).retain(base_len - p);
    s.handle_edit(user, op, t);
  }
  const auto r = s.finalize(7000);
  const auto session_dir = dir / "t";
  for (const char* f : {"oplog.ndjson", "final.txt", "baseline.txt", "metrics.json"}) {
    EXPECT_TRUE(std::filesystem::exists(session_dir / f)) << f;
  }
  const auto replayed = cart::replay_artifacts(cart::read_file((session_dir / "oplog.ndjson").string()), c.reference_text);
  EXPECT_EQ(replayed.final_text, cart::read_file((session_dir / "final.txt").string()));
  EXPECT_EQ(*replayed.metrics_json(), cart::read_file((session_dir / "metrics.json").string()));
  EXPECT_EQ(replayed.baseline_text, cart::read_file((session_dir / "baseline.txt").string()));
  // independent check against the exported texts
  const auto delta = cart::reduction_report(*c.reference_text, cart::read_file((session_dir / "baseline.txt").string()),
                                            cart::read_file((session_dir / "final.txt").string()), cart::edit_counts(s.log()));
  EXPECT_EQ(delta, *r.artifacts.metrics);
  std::filesystem::remove_all(dir);
}

TEST(Protocol, EnvelopeRoundTrip) {
  cart::Message m{MessageType::Broadcast, "s1", 0, {{"revision", 3}}, 1234};
  const auto line = cart::to_line(m);
  EXPECT_EQ(line, R"({"payload":{"revision":3},"sender":0,"server_time_ms":1234,"session":"s1","type":"broadcast","v":1})"
                  "\n");
  const auto back = cart::parse_message(line);
  EXPECT_EQ(back.type, m.type);
  EXPECT_EQ(back.payload, m.payload);
  EXPECT_EQ(back.server_time_ms, 1234);
  for (const char* bad : {R"({"type":"join","session":"s"})", R"({"v":2,"type":"join","session":"s"})",
                          R"({"v":1,"type":"hello","session":"s"})", R"({"v":1,"type":"join"})", "not json",
                          R"({"v":1,"type":"join","session":"s","payload":[]})"}) {
    EXPECT_THROW(cart::parse_message(bad), cart::Error) << bad;
  }
}

TEST(Protocol, SnapshotRoundTrip) {
  auto s = running();
  s.injection_tick(1000 + 2000);
  cart::EditOp op(s.doc().revision);
  op.retain(3).insert(U"ää", 2).retain(s.doc().size() - 3);
  s.handle_edit(2, op, 0);
  EXPECT_EQ(cart::snapshot_from_json(cart::snapshot_json(s.doc())), s.doc());
  EXPECT_THROW(cart::snapshot_from_json(nlohmann::json::parse(R"({"text":"ab","authors":[[0,1]],"revision":1,"injection_cursor":0})")),
               cart::Error);
}

TEST(Protocol, ClientsConvergeThroughEnvelopes) {
  // Three replicas that only see serialized envelopes; each client edits at
  // its own pace while the server keeps injecting.
  auto s = running(ScenarioKind::D);
  std::vector<cart::ClientReplica> clients;
  for (cart::AuthorId u = 1; u <= 3; ++u) clients.emplace_back(s.doc(), u);
  std::vector<std::vector<std::string>> inbox(4);
  auto deliver = [&](const std::vector<cart::Outgoing>& out) {
    for (const auto& o : out) inbox[o.to].push_back(cart::to_line(o.msg));
  };
  std::vector<std::vector<std::string>> outbox(4);
  auto drain_client = [&](cart::AuthorId u, std::size_t max) {
    auto& c = clients[u - 1];
    std::size_t n = 0;
    while (!inbox[u].empty() && n++ < max) {
      const auto m = cart::parse_message(inbox[u].front());
      inbox[u].erase(inbox[u].begin());
      const auto rev = m.payload["revision"].get<cart::Revision>();
      if (m.type == MessageType::Ack) {
        if (auto next = c.on_ack(rev)) outbox[u].push_back(cart::to_line({MessageType::Edit, "t", u, cart::edit_payload(*next), 0}));
      } else {
        c.on_remote(cart::op_from_json(m.payload["components"], rev - 1), rev);
      }
    }
  };
  std::mt19937_64 rng(12);
  for (std::int64_t t = 1000; t < 12'000; t += 50) {
    deliver(s.injection_tick(t));
    const auto u = static_cast<cart::AuthorId>(1 + rng() % 3);
    drain_client(u, rng() % 4);
    if (rng() % 3 == 0) {
      auto& c = clients[u - 1];
      const auto pos = rng() % (c.doc().size() + 1);
      cart::EditOp op(0);
      op.retain(pos).insert(U"+", u).retain(c.doc().size() - pos);
      if (auto send = c.local_edit(op)) outbox[u].push_back(cart::to_line({MessageType::Edit, "t", u, cart::edit_payload(*send), 0}));
    }
    if (!outbox[u].empty() && rng() % 2) {
      deliver(s.handle(cart::parse_message(outbox[u].front()), t));
      outbox[u].erase(outbox[u].begin());
    }
  }
  for (int round = 0; round < 100; ++round) {
    for (cart::AuthorId u = 1; u <= 3; ++u) {
      drain_client(u, 1000);
      while (!outbox[u].empty()) {
        deliver(s.handle(cart::parse_message(outbox[u].front()), 20'000));
        outbox[u].erase(outbox[u].begin());
      }
    }
  }
  for (const auto& c : clients) {
    EXPECT_EQ(c.doc().text, s.doc().text);
    EXPECT_EQ(c.doc().authors, s.doc().authors);
  }
  EXPECT_TRUE(s.playback_complete());
}

}  // namespace
