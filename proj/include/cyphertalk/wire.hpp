#pragma once

// Length-prefixed framing over plain stream sockets: u32 little-endian
// length, then kind byte + body. Bodies are JSON text.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "cyphertalk/errors.hpp"

namespace cyphertalk {

struct TransportError : Error {
  using Error::Error;
};

enum class MsgKind : uint8_t {
  InferReq = 1,
  InferResp = 2,
  TuneBatch = 3,
  TuneAck = 4,
  StatusReq = 5,
  StatusResp = 6,
  ErrorMsg = 7,
};

struct WireMessage {
  MsgKind kind;
  std::string body;
};

inline constexpr uint32_t kMaxFrameBytes = 16u * 1024 * 1024;

// Raw frame bytes as they appear on the wire (length prefix included),
// used by the capture tests.
inline std::vector<uint8_t> frame_bytes(const WireMessage& msg) {
  const uint32_t len = static_cast<uint32_t>(1 + msg.body.size());
  std::vector<uint8_t> out(4 + len);
  std::memcpy(out.data(), &len, 4);
  out[4] = static_cast<uint8_t>(msg.kind);
  std::memcpy(out.data() + 5, msg.body.data(), msg.body.size());
  return out;
}

inline void write_all(int fd, const void* buf, size_t n) {
  const auto* p = static_cast<const uint8_t*>(buf);
  while (n > 0) {
    const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w <= 0) throw TransportError("socket write failed");
    p += w;
    n -= static_cast<size_t>(w);
  }
}

inline bool read_all(int fd, void* buf, size_t n) {
  auto* p = static_cast<uint8_t*>(buf);
  while (n > 0) {
    const ssize_t r = ::recv(fd, p, n, 0);
    if (r == 0) return false;  // orderly close
    if (r < 0) throw TransportError("socket read failed");
    p += r;
    n -= static_cast<size_t>(r);
  }
  return true;
}

inline void send_msg(int fd, const WireMessage& msg) {
  const auto bytes = frame_bytes(msg);
  write_all(fd, bytes.data(), bytes.size());
}

// Returns false on orderly peer close before a frame starts.
inline bool recv_msg(int fd, WireMessage& out) {
  uint32_t len;
  if (!read_all(fd, &len, 4)) return false;
  if (len == 0 || len > kMaxFrameBytes)
    throw TransportError("oversized or empty frame");
  std::vector<uint8_t> payload(len);
  if (!read_all(fd, payload.data(), len))
    throw TransportError("connection closed mid-frame");
  out.kind = static_cast<MsgKind>(payload[0]);
  out.body.assign(reinterpret_cast<const char*>(payload.data()) + 1, len - 1);
  return true;
}

struct Socket {
  int fd = -1;
  Socket() = default;
  explicit Socket(int f) : fd(f) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd(o.fd) { o.fd = -1; }
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close_fd();
      fd = o.fd;
      o.fd = -1;
    }
    return *this;
  }
  ~Socket() { close_fd(); }
  void close_fd() {
    if (fd >= 0) {
      ::close(fd);
      fd = -1;
    }
  }
};

inline Socket tcp_connect(const std::string& host, uint16_t port) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (s.fd < 0) throw TransportError("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw TransportError("bad address: " + host);
  if (::connect(s.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    throw TransportError("connect failed: " + host + ":" + std::to_string(port));
  return s;
}

// Binds and listens; port 0 picks an ephemeral port (reported back).
inline Socket tcp_listen(const std::string& host, uint16_t& port) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (s.fd < 0) throw TransportError("socket() failed");
  const int one = 1;
  ::setsockopt(s.fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw TransportError("bad address: " + host);
  if (::bind(s.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    throw TransportError("bind failed");
  if (::listen(s.fd, 16) != 0) throw TransportError("listen failed");
  socklen_t len = sizeof(addr);
  ::getsockname(s.fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port = ntohs(addr.sin_port);
  return s;
}

}  // namespace cyphertalk
