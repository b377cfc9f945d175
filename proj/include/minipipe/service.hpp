#pragma once
// Network preprocessing service. One connection is one session, pinned to
// one engine slot for its lifetime.
//
// Session, client -> server:
//   CONFIG  slot 0, seq 1, payload = pipeline description text
//   then, on the slot from the ACK: schema DATA, column DATA frames, END
// Session, server -> client:
//   ACK     slot = assigned slot, payload = canonical spec text
//           (or ERROR and close; "BUSY ..." when no slot is free)
//   then schema DATA, processed column DATA frames, END
//   (or ERROR carrying the failure, then close)

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "minipipe/engine.hpp"
#include "minipipe/net.hpp"
#include "minipipe/source.hpp"

namespace minipipe {

enum class SessionPhase : std::uint8_t { kConfiguring, kPass1, kPass2, kStreaming, kClosed };

std::string_view to_string(SessionPhase phase);

struct SessionInfo {
  std::uint64_t session_id = 0;
  std::optional<std::size_t> slot;
  std::string spec_id;
  SessionPhase phase = SessionPhase::kConfiguring;
};

class Server {
 public:
  /// Binds and starts accepting. Throws IoError on bind failure.
  Server(const net::Endpoint& bind, EngineConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  net::Endpoint endpoint() const { return endpoint_; }
  Engine& engine() { return engine_; }

  /// Graceful: stop accepting and wait for open sessions to finish.
  /// Immediate: also preempt running jobs; their clients get an ERROR frame.
  void stop(bool graceful = true);

  std::vector<SessionInfo> sessions() const;
  std::size_t active_sessions() const;
  std::uint64_t sessions_started() const { return next_session_id_.load() - 1; }

 private:
  struct Session {
    std::uint64_t id = 0;
    net::Socket socket;
    std::atomic<SessionPhase> phase{SessionPhase::kConfiguring};
    std::optional<std::size_t> slot;
    std::string spec_id;
    std::atomic<bool> done{false};
    std::jthread thread;
  };

  void accept_loop();
  void handle(Session& s);
  void reap();

  Engine engine_;
  net::Socket listener_;
  net::Endpoint endpoint_;
  std::atomic<bool> stopping_{false};
  std::atomic<bool> killing_{false};
  std::atomic<std::uint64_t> next_session_id_{1};
  mutable std::mutex mu_;
  std::list<std::unique_ptr<Session>> sessions_;
  std::jthread acceptor_;
};

/// Starts a server; the handle stops it on destruction.
std::unique_ptr<Server> serve(const net::Endpoint& bind, EngineConfig config = {});

/// In-process client for the session protocol.
class ServiceClient {
 public:
  explicit ServiceClient(const net::Endpoint& endpoint);

  /// Sends CONFIG and waits for the ACK. Returns the assigned slot. Throws
  /// BusyError when the server is full, ProtocolError on any other ERROR.
  std::uint8_t configure(std::string_view description);

  /// Streams `input` to the server while reading the processed stream into
  /// `output`. Throws ProtocolError carrying the server's message and the
  /// last good sequence if the server fails mid-stream.
  void process(ColumnSource& input, ColumnSink& output);

  /// Sends raw frames as given, for protocol tests.
  void send(const StreamFrame& frame);
  std::optional<StreamFrame> receive();
  void close() { socket_.close(); }

 private:
  net::Socket socket_;
  std::uint8_t slot_ = 0;
  bool configured_ = false;
};

/// configure + process over one connection, collecting the output batch.
ColumnBatch preprocess_remote(const net::Endpoint& endpoint, std::string_view description,
                              const ColumnBatch& batch);

}  // namespace minipipe
