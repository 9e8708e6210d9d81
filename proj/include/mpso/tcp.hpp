#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <optional>
#include <thread>

#include "mpso/net.hpp"

namespace mpso {

struct Endpoint {
  std::string host = "127.0.0.1";
  u16 port = 0;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline void write_all(int fd, const u8* p, std::size_t n) {
  while (n) {
    ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("socket write failed: ") + std::strerror(errno));
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
}

// Blocking read of exactly n bytes; false on clean EOF before any byte.
inline bool read_all(int fd, u8* p, std::size_t n, Clock::time_point deadline = Clock::time_point::max()) {
  std::size_t got = 0;
  while (got < n) {
    if (deadline != Clock::time_point::max()) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
      if (left <= 0) throw ProtocolError("timeout during handshake");
      pollfd pfd{fd, POLLIN, 0};
      int r = ::poll(&pfd, 1, static_cast<int>(left));
      if (r == 0) throw ProtocolError("timeout during handshake");
      if (r < 0 && errno != EINTR) throw ProtocolError("poll failed");
      if (r <= 0) continue;
    }
    ssize_t k = ::recv(fd, p + got, n - got, 0);
    if (k == 0) {
      if (got == 0) return false;
      throw ProtocolError("connection closed mid-frame");
    }
    if (k < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("socket read failed: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(k);
  }
  return true;
}

inline Bytes encode_frame(const Frame& f) {
  ByteWriter w;
  w.le<u32>(static_cast<u32>(f.payload.size()));
  w.le<u16>(f.session);
  w.u8_(static_cast<u8>(f.stage));
  w.le<u16>(f.round);
  w.raw(f.payload);
  return std::move(w.buf);
}

inline std::optional<Frame> read_frame(int fd, Clock::time_point deadline = Clock::time_point::max()) {
  u8 h[kFrameHeader];
  if (!read_all(fd, h, sizeof h, deadline)) return std::nullopt;
  ByteReader r(std::span<const u8>(h, sizeof h));
  Frame f;
  u32 len = r.le<u32>();
  f.session = r.le<u16>();
  f.stage = static_cast<Stage>(r.u8_());
  f.round = r.le<u16>();
  if (len > kMaxFrame) throw ProtocolError("incoming frame exceeds 64 MiB cap");
  f.payload.resize(len);
  if (len && !read_all(fd, f.payload.data(), len, deadline)) throw ProtocolError("connection closed mid-frame");
  return f;
}

}  // namespace detail

class TcpLink : public Link {
 public:
  explicit TcpLink(int fd) : fd_(fd) {
    reader_ = std::thread([this, q = in_] {
      try {
        for (;;) {
          auto f = detail::read_frame(fd_);
          if (!f) {
            q->close("connection closed by peer");
            return;
          }
          q->push(std::move(*f));
        }
      } catch (const std::exception& e) {
        q->close(e.what());
      }
    });
  }
  ~TcpLink() override { close(); }

  void send(const Frame& f) override {
    Bytes b = detail::encode_frame(f);
    std::lock_guard<std::mutex> g(wmu_);
    detail::write_all(fd_, b.data(), b.size());
  }
  void close() override {
    if (fd_ < 0) return;
    ::shutdown(fd_, SHUT_RDWR);
    if (reader_.joinable()) reader_.join();
    ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_;
  std::mutex wmu_;
  std::thread reader_;
};

struct Hello {
  PartyId party = 0;
  unsigned m = 0;
  u16 session = 0;
  std::array<u8, 32> config_digest{};

  Bytes encode() const {
    ByteWriter w;
    w.raw(std::span<const u8>(reinterpret_cast<const u8*>("MPSOHELO"), 8));
    w.le<u32>(party);
    w.le<u32>(m);
    w.le<u16>(session);
    w.raw(config_digest);
    return std::move(w.buf);
  }
  static Hello decode(std::span<const u8> b) {
    ByteReader r(b);
    auto magic = r.raw(8);
    if (std::memcmp(magic.data(), "MPSOHELO", 8) != 0) throw ProtocolError("handshake rejected: bad magic");
    Hello h;
    h.party = r.le<u32>();
    h.m = r.le<u32>();
    h.session = r.le<u16>();
    auto d = r.raw(32);
    std::copy(d.begin(), d.end(), h.config_digest.begin());
    return h;
  }
};

namespace detail {

inline void check_hello(const Hello& mine, const Hello& peer, PartyId expect) {
  if (peer.m != mine.m)
    throw ConfigError("handshake rejected: party count mismatch (local " + std::to_string(mine.m) + ", peer " +
                      std::to_string(peer.m) + ")");
  if (peer.session != mine.session) throw ConfigError("handshake rejected: session id mismatch");
  if (peer.config_digest != mine.config_digest) throw ConfigError("handshake rejected: configuration digest mismatch");
  if (expect && peer.party != expect) throw ConfigError("handshake rejected: unexpected party id");
  if (peer.party == 0 || peer.party > mine.m || peer.party == mine.party) throw ConfigError("handshake rejected: bad party id");
}

inline int dial(const Endpoint& ep, Clock::time_point deadline) {
  addrinfo hints{}, *res = nullptr;
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  for (;;) {
    if (::getaddrinfo(ep.host.c_str(), std::to_string(ep.port).c_str(), &hints, &res) == 0) {
      int fd = ::socket(res->ai_family, res->ai_socktype, 0);
      int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
      ::freeaddrinfo(res);
      if (rc == 0) {
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        return fd;
      }
      ::close(fd);
    }
    if (Clock::now() >= deadline)
      throw ProtocolError("timeout connecting to " + ep.host + ":" + std::to_string(ep.port));
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

inline int listen_on(const Endpoint& ep) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_port = htons(ep.port);
  a.sin_addr.s_addr = htonl(INADDR_ANY);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&a), sizeof a) != 0 || ::listen(fd, 64) != 0) {
    ::close(fd);
    throw IoError("cannot listen on port " + std::to_string(ep.port) + ": " + std::strerror(errno));
  }
  return fd;
}

}  // namespace detail

// Listens on our own endpoint, dials every lower-indexed party, accepts the rest.
inline std::unique_ptr<Mesh> connect_tcp_mesh(const Hello& mine, const std::vector<Endpoint>& eps,
                                              std::chrono::milliseconds timeout) {
  using detail::Clock;
  const unsigned m = mine.m;
  if (eps.size() != m + 1) throw ConfigError("endpoint list must have one entry per party");
  auto mesh = std::make_unique<Mesh>(mine.party, m, mine.session);
  mesh->set_timeout(timeout);
  auto deadline = Clock::now() + timeout;
  int lfd = detail::listen_on(eps[mine.party]);
  struct Closer {
    int fd;
    ~Closer() { ::close(fd); }
  } closer{lfd};

  auto hello_frame = [&] { return detail::encode_frame(Frame{mine.session, Stage::handshake, 0, mine.encode()}); };

  for (PartyId j = 1; j < mine.party; ++j) {
    int fd = detail::dial(eps[j], deadline);
    try {
      Bytes h = hello_frame();
      detail::write_all(fd, h.data(), h.size());
      auto f = detail::read_frame(fd, deadline);
      if (!f) throw ProtocolError("handshake failed: peer closed connection");
      detail::check_hello(mine, Hello::decode(f->payload), j);
    } catch (...) {
      ::close(fd);
      throw;
    }
    mesh->set_link(j, std::make_unique<TcpLink>(fd));
  }
  for (unsigned k = mine.party; k < m; ++k) {
    pollfd pfd{lfd, POLLIN, 0};
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0 || ::poll(&pfd, 1, static_cast<int>(left)) <= 0) throw ProtocolError("timeout waiting for peers to connect");
    int fd = ::accept(lfd, nullptr, nullptr);
    if (fd < 0) throw IoError("accept failed");
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    Hello peer;
    try {
      auto f = detail::read_frame(fd, deadline);
      if (!f) throw ProtocolError("handshake failed: peer closed connection");
      peer = Hello::decode(f->payload);
      Bytes h = hello_frame();
      detail::write_all(fd, h.data(), h.size());
      detail::check_hello(mine, peer, 0);
      if (peer.party <= mine.party) throw ConfigError("handshake rejected: unexpected dial direction");
    } catch (...) {
      ::close(fd);
      throw;
    }
    mesh->set_link(peer.party, std::make_unique<TcpLink>(fd));
  }
  return mesh;
}

}  // namespace mpso
