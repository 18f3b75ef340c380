#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "cart/error.hpp"
#include "cart/ot.hpp"

namespace cart {

inline constexpr int kProtocolVersion = 1;

enum class MessageType { Join, Welcome, Start, Inject, Edit, Ack, Broadcast, End, Metrics, Error };

inline constexpr std::string_view to_string(MessageType t) {
  switch (t) {
    case MessageType::Join: return "join";
    case MessageType::Welcome: return "welcome";
    case MessageType::Start: return "start";
    case MessageType::Inject: return "inject";
    case MessageType::Edit: return "edit";
    case MessageType::Ack: return "ack";
    case MessageType::Broadcast: return "broadcast";
    case MessageType::End: return "end";
    case MessageType::Metrics: return "metrics";
    case MessageType::Error: return "error";
  }
  return "?";
}

inline std::optional<MessageType> message_type_from_string(std::string_view s) {
  for (auto t : {MessageType::Join, MessageType::Welcome, MessageType::Start, MessageType::Inject, MessageType::Edit,
                 MessageType::Ack, MessageType::Broadcast, MessageType::End, MessageType::Metrics, MessageType::Error}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

/// Wire envelope. `sender` is the author id of a client, or 0 for the server.
struct Message {
  MessageType type = MessageType::Error;
  std::string session;
  AuthorId sender = kSystemAuthor;
  nlohmann::json payload = nlohmann::json::object();
  std::int64_t server_time_ms = 0;
};

inline nlohmann::json to_json(const Message& m) {
  return nlohmann::json{{"v", kProtocolVersion},
                        {"type", std::string(to_string(m.type))},
                        {"session", m.session},
                        {"sender", m.sender},
                        {"payload", m.payload},
                        {"server_time_ms", m.server_time_ms}};
}

/// One NDJSON line, newline included.
inline std::string to_line(const Message& m) { return to_json(m).dump() + "\n"; }

/// Strict parse of one envelope. Clients may omit `sender`, `payload` and
/// `server_time_ms`.
inline Message message_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidInput, "envelope must be an object");
  if (!j.contains("v") || j["v"] != kProtocolVersion) throw Error(ErrorCode::InvalidInput, "unsupported protocol version");
  Message m;
  if (!j.contains("type") || !j["type"].is_string()) throw Error(ErrorCode::InvalidInput, "missing type");
  const auto type = message_type_from_string(j["type"].get<std::string>());
  if (!type) throw Error(ErrorCode::InvalidInput, "unknown message type " + j["type"].dump());
  m.type = *type;
  if (!j.contains("session") || !j["session"].is_string()) throw Error(ErrorCode::InvalidInput, "missing session");
  m.session = j["session"].get<std::string>();
  if (j.contains("sender")) {
    if (!j["sender"].is_number_unsigned()) throw Error(ErrorCode::InvalidInput, "sender must be an author id");
    m.sender = j["sender"].get<AuthorId>();
  }
  if (j.contains("payload")) {
    if (!j["payload"].is_object()) throw Error(ErrorCode::InvalidInput, "payload must be an object");
    m.payload = j["payload"];
  }
  if (j.contains("server_time_ms")) {
    if (!j["server_time_ms"].is_number_integer()) throw Error(ErrorCode::InvalidInput, "server_time_ms must be an integer");
    m.server_time_ms = j["server_time_ms"].get<std::int64_t>();
  }
  return m;
}

inline Message parse_message(std::string_view line) {
  try {
    return message_from_json(nlohmann::json::parse(line));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("envelope is not JSON: ") + e.what());
  }
}

/// Document snapshot with attribution as [author, run length] pairs.
inline nlohmann::json snapshot_json(const AttributedDoc& doc) {
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < doc.authors.size();) {
    std::size_t j = i;
    while (j < doc.authors.size() && doc.authors[j] == doc.authors[i]) ++j;
    runs.push_back({doc.authors[i], j - i});
    i = j;
  }
  return nlohmann::json{{"text", doc.utf8()},
                        {"authors", runs},
                        {"revision", doc.revision},
                        {"injection_cursor", doc.injection_cursor}};
}

inline AttributedDoc snapshot_from_json(const nlohmann::json& j) {
  try {
    AttributedDoc d;
    d.text = utf8::decode(j.at("text").get<std::string>());
    for (const auto& run : j.at("authors")) d.authors.insert(d.authors.end(), run.at(1).get<std::size_t>(), run.at(0).get<AuthorId>());
    d.revision = j.at("revision").get<Revision>();
    d.injection_cursor = j.at("injection_cursor").get<std::size_t>();
    if (d.authors.size() != d.text.size() || d.injection_cursor > d.text.size()) {
      throw Error(ErrorCode::InvalidInput, "snapshot attribution does not cover the text");
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("bad snapshot: ") + e.what());
  }
}

/// Edit payload: {"revision": base, "components": [...]}.
inline nlohmann::json edit_payload(const EditOp& op) {
  return nlohmann::json{{"revision", op.base_revision}, {"components", components_to_json(op)}};
}

inline EditOp edit_from_payload(const nlohmann::json& p) {
  if (!p.contains("revision") || !p["revision"].is_number_unsigned() || !p.contains("components")) {
    throw Error(ErrorCode::MalformedOp, "edit needs revision and components");
  }
  return op_from_json(p["components"], p["revision"].get<Revision>());
}

}  // namespace cart
