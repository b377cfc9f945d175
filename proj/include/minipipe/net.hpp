#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "minipipe/frame.hpp"

namespace minipipe::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// Parses "host:port". Throws ParamError.
  static Endpoint parse(std::string_view text);
  std::string to_string() const;
};

/// Owning TCP socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  static Socket connect(const Endpoint& endpoint);
  /// Binds and listens; port 0 picks an ephemeral port.
  static Socket listen(const Endpoint& endpoint, int backlog = 64);

  /// Blocks for a connection; returns an invalid socket once the listener is shut down.
  Socket accept() const;
  std::uint16_t local_port() const;

  /// Throws IoError on failure or short write.
  void write_all(std::span<const std::byte> bytes) const;
  /// Returns false on clean EOF before any byte; throws IoError on a partial read.
  bool read_exact(std::span<std::byte> bytes) const;

  void shutdown_read() const;
  void shutdown_both() const;
  void close();
  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

 private:
  int fd_ = -1;
};

void send_frame(const Socket& socket, const StreamFrame& frame);
/// nullopt on clean EOF at a frame boundary.
std::optional<StreamFrame> recv_frame(const Socket& socket);

}  // namespace minipipe::net
