#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "rfusion/mission_harness.hpp"

namespace rfusion {

struct ServerConfig {
  SessionConfig session;
  std::string address = "127.0.0.1";
  unsigned short port = 8080;
  /// Optional directory served for GET requests outside /api and /ws.
  std::filesystem::path static_dir;
  /// Optional JSON-lines log of every robot-bound control message, stamped
  /// with the session tick that ingests it (replayable with `simulate`).
  std::filesystem::path record_path;
};

/// State document served by GET /api/session.
nlohmann::json session_state_json(const Session& session, bool running);

/// Operator service on one port:
///   GET  /api/session   session state JSON
///   POST /api/session   {"action": "start" | "reset", "mode": ..., "trajectory": 1..4}
///   WS   /ws/frames     binary FUSED_PNG messages (27-byte header + PNG)
///   WS   /ws/control    JSON-lines control messages in both directions
/// The session ticks in real time on the service thread.
class OperatorServer {
 public:
  explicit OperatorServer(ServerConfig config);
  ~OperatorServer();
  OperatorServer(const OperatorServer&) = delete;
  OperatorServer& operator=(const OperatorServer&) = delete;

  /// Binds and starts the service thread; returns the bound port (useful
  /// with port 0).
  unsigned short start();
  void stop();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

}  // namespace rfusion
