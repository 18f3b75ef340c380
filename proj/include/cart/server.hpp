#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "cart/session.hpp"

namespace cart {

/// Blocking NDJSON line channel over a connected socket.
class LineSocket {
 public:
  explicit LineSocket(int fd = -1) : fd_(fd) {}
  LineSocket(const LineSocket&) = delete;
  LineSocket& operator=(const LineSocket&) = delete;
  ~LineSocket() { close(); }

  static std::unique_ptr<LineSocket> connect_to(const std::string& host, std::uint16_t port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw Error(ErrorCode::InvalidInput, std::string("socket: ") + std::strerror(errno));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      ::close(fd);
      throw Error(ErrorCode::InvalidInput, "bad IPv4 address " + host);
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      const std::string why = std::strerror(errno);
      ::close(fd);
      throw Error(ErrorCode::InvalidInput, "connect: " + why);
    }
    set_nodelay(fd);
    return std::make_unique<LineSocket>(fd);
  }

  static void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }

  int fd() const { return fd_; }

  bool write_line(std::string_view line) {
    std::lock_guard lock(write_mutex_);
    std::size_t sent = 0;
    while (sent < line.size()) {
      const auto n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      sent += static_cast<std::size_t>(n);
    }
    return true;
  }

  /// Next line without its newline; empty optional on EOF, error or timeout
  /// (a negative timeout waits forever).
  std::optional<std::string> read_line(int timeout_ms = -1) {
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      if (timeout_ms >= 0) {
        pollfd p{fd_, POLLIN, 0};
        const int r = ::poll(&p, 1, timeout_ms);
        if (r < 0 && errno == EINTR) continue;
        if (r <= 0) return std::nullopt;
      }
      char chunk[4096];
      const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return std::nullopt;
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void shutdown() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_;
  std::string buffer_;
  std::mutex write_mutex_;
};

struct ServerOptions {
  std::uint16_t port = 0;  // 0 picks a free port
  std::string bind_address = "127.0.0.1";
  int tick_ms = 20;
  bool auto_start = true;               // start playback once the third editor joins
  std::int64_t finalize_grace_ms = 10'000;  // keep editing open after the last word
};

/// TCP front end: one reader thread per connection and one ticker thread
/// that drives injection and finalization. Each session's lock serializes
/// all work on it.
class TcpServer {
 public:
  TcpServer(SessionRegistry& registry, ServerOptions options)
      : registry_(registry), options_(std::move(options)), epoch_(std::chrono::steady_clock::now()) {}
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;
  ~TcpServer() { stop(); }

  std::int64_t now_ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - epoch_).count();
  }

  std::uint16_t port() const { return port_; }

  void start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw Error(ErrorCode::InvalidConfig, std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(options_.port);
    if (::inet_pton(AF_INET, options_.bind_address.c_str(), &addr.sin_addr) != 1) {
      throw Error(ErrorCode::InvalidConfig, "bad bind address " + options_.bind_address);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
      throw Error(ErrorCode::InvalidConfig, std::string("bind: ") + std::strerror(errno));
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
    ticker_thread_ = std::thread([this] { tick_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (accept_thread_.joinable()) accept_thread_.join();
    if (ticker_thread_.joinable()) ticker_thread_.join();
    std::vector<std::thread> readers;
    {
      std::lock_guard lock(conn_mutex_);
      for (auto& c : connections_) c->shutdown();
      readers.swap(reader_threads_);
    }
    for (auto& t : readers) t.join();
    std::lock_guard lock(conn_mutex_);
    connections_.clear();
    routes_.clear();
  }

  /// Called after a session finishes, with its artifacts.
  std::function<void(const std::string&, const SessionArtifacts&)> on_finished;

 private:
  using Route = std::pair<std::string, AuthorId>;

  void accept_loop() {
    while (running_) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (!running_) return;
        continue;
      }
      LineSocket::set_nodelay(fd);
      auto conn = std::make_shared<LineSocket>(fd);
      std::lock_guard lock(conn_mutex_);
      connections_.push_back(conn);
      reader_threads_.emplace_back([this, conn] { read_loop(conn); });
    }
  }

  void read_loop(std::shared_ptr<LineSocket> conn) {
    std::optional<Route> me;
    while (auto line = conn->read_line()) {
      if (line->empty()) continue;
      Message m;
      try {
        m = parse_message(*line);
      } catch (const Error& e) {
        conn->write_line(to_line(error_envelope("", e)));
        continue;
      }
      std::shared_ptr<SessionSlot> slot;
      try {
        slot = registry_.find(m.session);
      } catch (const Error& e) {
        conn->write_line(to_line(error_envelope(m.session, e)));
        continue;
      }
      std::vector<Outgoing> out;
      std::optional<SessionArtifacts> finished;
      {
        std::lock_guard lock(slot->mutex);
        auto& s = slot->session;
        const auto now = now_ms();
        try {
          if (m.type == MessageType::Join) {
            AuthorId user = 0;
            if (m.payload.contains("user")) {
              // reconnect: same author, fresh snapshot
              user = m.payload["user"].get<AuthorId>();
              out.push_back(s.welcome(user, now));
            } else {
              auto r = s.join(now);
              user = r.user;
              out = std::move(r.out);
            }
            me = Route{m.session, user};
            bind(*me, conn);
            if (options_.auto_start && s.phase() == Phase::Lobby && s.users().size() == kGroupSize) {
              auto started = s.start_playback(now);
              out.insert(out.end(), started.begin(), started.end());
            }
          } else if (!me || me->first != m.session) {
            throw Error(ErrorCode::UnknownUser, "join the session first");
          } else {
            m.sender = me->second;
            const bool was_finished = s.phase() == Phase::Finished;
            if (m.type == MessageType::End && !was_finished && s.phase() == Phase::Running) {
              auto r = s.finalize(now);
              out = std::move(r.out);
              finished = std::move(r.artifacts);
            } else {
              out = s.handle(m, now);
            }
          }
        } catch (const Error& e) {
          conn->write_line(to_line(error_envelope(m.session, e)));
          continue;
        } catch (const nlohmann::json::exception& e) {
          conn->write_line(to_line(error_envelope(m.session, Error(ErrorCode::InvalidInput, e.what()))));
          continue;
        }
        route(m.session, out);
      }
      if (finished && on_finished) on_finished(m.session, *finished);
    }
    std::lock_guard lock(conn_mutex_);
    if (me) {
      auto it = routes_.find(*me);
      if (it != routes_.end() && it->second.lock() == conn) routes_.erase(it);
    }
  }

  void tick_loop() {
    while (running_) {
      for (const auto& id : registry_.ids()) {
        auto slot = registry_.find(id);
        std::optional<SessionArtifacts> finished;
        {
          std::lock_guard lock(slot->mutex);
          auto& s = slot->session;
          if (s.phase() != Phase::Running) continue;
          const auto now = now_ms();
          route(id, s.injection_tick(now));
          if (s.playback_complete() && now >= s.playback_end_ms() + options_.finalize_grace_ms) {
            auto r = s.finalize(now);
            route(id, r.out);
            finished = std::move(r.artifacts);
          }
        }
        if (finished && on_finished) on_finished(id, *finished);
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(options_.tick_ms));
    }
  }

  void bind(const Route& r, const std::shared_ptr<LineSocket>& conn) {
    std::lock_guard lock(conn_mutex_);
    routes_[r] = conn;
  }

  // Called with the session lock held, so per-session order is preserved.
  void route(const std::string& session, const std::vector<Outgoing>& out) {
    for (const auto& o : out) {
      std::shared_ptr<LineSocket> conn;
      {
        std::lock_guard lock(conn_mutex_);
        auto it = routes_.find(Route{session, o.to});
        if (it != routes_.end()) conn = it->second.lock();
      }
      if (conn) conn->write_line(to_line(o.msg));
    }
  }

  Message error_envelope(const std::string& session, const Error& e) const {
    return Message{MessageType::Error, session, kSystemAuthor,
                   {{"code", std::string(to_string(e.code()))}, {"message", e.what()}}, now_ms()};
  }

  SessionRegistry& registry_;
  ServerOptions options_;
  std::chrono::steady_clock::time_point epoch_;
  std::atomic<bool> running_{false};
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread accept_thread_;
  std::thread ticker_thread_;
  std::mutex conn_mutex_;
  std::vector<std::shared_ptr<LineSocket>> connections_;
  std::vector<std::thread> reader_threads_;
  std::map<Route, std::weak_ptr<LineSocket>> routes_;
};

}  // namespace cart
