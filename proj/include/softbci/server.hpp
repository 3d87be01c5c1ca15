#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "softbci/config.hpp"
#include "softbci/live_session.hpp"

namespace softbci {

struct ServerOptions {
  std::string bind = "127.0.0.1";
  std::uint16_t port = 8787;        // 0 picks a free port
  std::optional<std::uint16_t> tcp_port;  // NDJSON fallback, off when empty
  RunConfig base_config;            // defaults for `start` commands
};

/// HTTP + WebSocket front end for a LiveSession.
///   GET /health    liveness JSON
///   GET /config    active RunConfig as JSON (empty object when idle)
///   POST /command  one command object, answered with ack / rejection
///   /ws            snapshots out, commands in, one JSON object per message
/// The optional TCP port speaks the same payloads as LF-terminated lines.
/// All sockets run on one background io thread.
class Server {
 public:
  Server(LiveSession& session, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving. Throws IoError if a port cannot be bound.
  void start();
  void stop();

  std::uint16_t port() const;
  std::optional<std::uint16_t> tcp_port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Handles one inbound message (a JSON command) and returns the JSON reply.
nlohmann::json handle_message(LiveSession& session, const std::string& text,
                              const RunConfig& base);

}  // namespace softbci
