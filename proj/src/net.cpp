#include "minipipe/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include "minipipe/error.hpp"

namespace minipipe::net {

namespace {

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

sockaddr_in resolve(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string host = ep.host.empty() ? "0.0.0.0" : ep.host;
  if (const int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0) {
    throw IoError("cannot resolve '" + host + "': " + ::gai_strerror(rc), 0);
  }
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  addr.sin_port = htons(ep.port);
  return addr;
}

}  // namespace

Endpoint Endpoint::parse(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) {
    throw ParamError("endpoint '" + std::string(text) + "' must be host:port");
  }
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  const auto port = text.substr(colon + 1);
  unsigned value = 0;
  const auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (ec != std::errc{} || ptr != port.data() + port.size() || value > 65535) {
    throw ParamError("endpoint '" + std::string(text) + "' has an invalid port");
  }
  ep.port = static_cast<std::uint16_t>(value);
  return ep;
}

std::string Endpoint::to_string() const { return host + ":" + std::to_string(port); }

Socket::~Socket() { close(); }

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

Socket Socket::connect(const Endpoint& endpoint) {
  const auto addr = resolve(endpoint);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw IoError(errno_text("socket"), 0);
  if (::connect(s.fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw IoError("connect to " + endpoint.to_string() + " failed: " + std::strerror(errno), 0);
  }
  int one = 1;
  ::setsockopt(s.fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return s;
}

Socket Socket::listen(const Endpoint& endpoint, int backlog) {
  const auto addr = resolve(endpoint);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw IoError(errno_text("socket"), 0);
  int one = 1;
  ::setsockopt(s.fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(s.fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw IoError("bind " + endpoint.to_string() + " failed: " + std::strerror(errno), 0);
  }
  if (::listen(s.fd_, backlog) != 0) throw IoError(errno_text("listen"), 0);
  return s;
}

Socket Socket::accept() const {
  for (;;) {
    const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return Socket(fd);
    }
    if (errno == EINTR) continue;
    return Socket();
  }
}

std::uint16_t Socket::local_port() const {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    throw IoError(errno_text("getsockname"), 0);
  }
  return ntohs(addr.sin_port);
}

void Socket::write_all(std::span<const std::byte> bytes) const {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto n = ::send(fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(errno_text("send"), done);
    }
    done += static_cast<std::size_t>(n);
  }
}

bool Socket::read_exact(std::span<std::byte> bytes) const {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto n = ::recv(fd_, bytes.data() + done, bytes.size() - done, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(errno_text("recv"), done);
    }
    if (n == 0) {
      if (done == 0) return false;
      throw IoError("connection closed mid-frame", done);
    }
    done += static_cast<std::size_t>(n);
  }
  return true;
}

void Socket::shutdown_read() const {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RD);
}

void Socket::shutdown_both() const {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void send_frame(const Socket& socket, const StreamFrame& frame) {
  auto header = frame.header;
  header.payload_len = static_cast<std::uint32_t>(frame.payload.size());
  const auto raw = header.encode();
  if (frame.payload.size() <= 4096) {
    // One send for small frames keeps control traffic in a single segment.
    std::array<std::byte, kFrameHeaderSize + 4096> buf;
    std::memcpy(buf.data(), raw.data(), raw.size());
    if (!frame.payload.empty()) {
      std::memcpy(buf.data() + raw.size(), frame.payload.data(), frame.payload.size());
    }
    socket.write_all(std::span(buf.data(), raw.size() + frame.payload.size()));
    return;
  }
  socket.write_all(raw);
  socket.write_all(frame.payload);
}

std::optional<StreamFrame> recv_frame(const Socket& socket) {
  std::array<std::byte, kFrameHeaderSize> raw;
  if (!socket.read_exact(raw)) return std::nullopt;
  StreamFrame f;
  f.header = FrameHeader::decode(raw);
  f.payload.resize(f.header.payload_len);
  if (!f.payload.empty() && !socket.read_exact(f.payload)) {
    throw ProtocolError("connection closed inside frame payload (sequence " +
                        std::to_string(f.header.sequence) + ")");
  }
  return f;
}

}  // namespace minipipe::net
