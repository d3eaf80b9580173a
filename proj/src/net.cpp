#include "stageverify/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <charconv>
#include <cstring>

#include <fmt/format.h>

namespace sv {

namespace {

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (host.empty() || host == "0.0.0.0") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    return addr;
  }
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
    throw std::runtime_error(fmt::format("cannot resolve host '{}'", host));
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

int poll_one(int fd, short events, std::chrono::milliseconds timeout) {
  pollfd p{fd, events, 0};
  for (;;) {
    const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return r;
    return p.revents;
  }
}

}  // namespace

HostPort parse_host_port(std::string_view s, std::string_view default_host) {
  const auto colon = s.rfind(':');
  if (colon == std::string_view::npos)
    throw ValidationError(fmt::format("'{}' is not HOST:PORT", s));
  HostPort hp;
  hp.host = colon == 0 ? std::string(default_host) : std::string(s.substr(0, colon));
  const auto digits = s.substr(colon + 1);
  unsigned port = 0;
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc() || p != digits.data() + digits.size() || port > 65535)
    throw ValidationError(fmt::format("bad port in '{}'", s));
  hp.port = static_cast<std::uint16_t>(port);
  return hp;
}

TcpTransport::~TcpTransport() {
  const int fd = fd_.exchange(-1);
  if (fd >= 0) ::close(fd);
}

ReadResult TcpTransport::read(std::chrono::milliseconds timeout) {
  const int fd = fd_.load();
  if (fd < 0 || shut_) return {ReadResult::Status::Closed, {}};
  const int ev = poll_one(fd, POLLIN, timeout);
  if (ev < 0) return {ReadResult::Status::Closed, {}};
  if (ev == 0) return {ReadResult::Status::Timeout, {}};
  std::array<char, 8192> buf;
  ssize_t n;
  do {
    n = ::recv(fd, buf.data(), buf.size(), 0);
  } while (n < 0 && errno == EINTR);
  if (n <= 0) return {ReadResult::Status::Closed, {}};
  return {ReadResult::Status::Data, std::string(buf.data(), static_cast<std::size_t>(n))};
}

bool TcpTransport::write(std::string_view bytes) {
  const int fd = fd_.load();
  if (fd < 0 || shut_) return false;
  while (!bytes.empty()) {
    const ssize_t n = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

void TcpTransport::close() {
  // shutdown wakes a poll() in another thread; the descriptor itself is
  // released in the destructor so it cannot be reused underneath a reader
  if (!shut_.exchange(true)) {
    const int fd = fd_.load();
    if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
  }
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw BindError(fmt::format("socket: {}", std::strerror(errno)));
  const int yes = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  sockaddr_in addr;
  try {
    addr = resolve(host, port);
  } catch (const std::exception& e) {
    ::close(fd);
    throw BindError(e.what());
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(fd, 16) != 0) {
    const int err = errno;
    ::close(fd);
    throw BindError(fmt::format("cannot bind {}:{}: {}", host, port, std::strerror(err)));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  fd_ = fd;
}

TcpListener::~TcpListener() { close(); }

std::unique_ptr<TcpTransport> TcpListener::accept(std::chrono::milliseconds timeout) {
  const int fd = fd_.load();
  if (fd < 0) return nullptr;
  const int ev = poll_one(fd, POLLIN, timeout);
  if (ev <= 0 || !(ev & POLLIN)) return nullptr;
  const int c = ::accept4(fd, nullptr, nullptr, SOCK_CLOEXEC);
  if (c < 0) return nullptr;
  const int one = 1;
  ::setsockopt(c, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return std::make_unique<TcpTransport>(c);
}

void TcpListener::close() {
  const int fd = fd_.exchange(-1);
  if (fd >= 0) {
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
  }
}

std::unique_ptr<TcpTransport> tcp_connect(const std::string& host, std::uint16_t port) {
  const auto addr = resolve(host == "0.0.0.0" ? "127.0.0.1" : host, port);
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw std::runtime_error(fmt::format("socket: {}", std::strerror(errno)));
  if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    const int err = errno;
    ::close(fd);
    throw std::runtime_error(
        fmt::format("cannot connect to {}:{}: {}", host, port, std::strerror(err)));
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return std::make_unique<TcpTransport>(fd);
}

}  // namespace sv
