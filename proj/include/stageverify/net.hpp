#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "stageverify/screw_link.hpp"

namespace sv {

class BindError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};

/// "HOST:PORT" or ":PORT" (host defaults to 0.0.0.0). Throws ValidationError.
HostPort parse_host_port(std::string_view s, std::string_view default_host = "0.0.0.0");

/// Owns a connected socket. close() may be called from another thread to
/// unblock a reader.
class TcpTransport final : public Transport {
 public:
  explicit TcpTransport(int fd) : fd_(fd) {}
  ~TcpTransport() override;
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  ReadResult read(std::chrono::milliseconds timeout) override;
  bool write(std::string_view bytes) override;
  void close() override;

 private:
  std::atomic<int> fd_;
  std::atomic<bool> shut_{false};
};

class TcpListener {
 public:
  /// Port 0 picks a free port. Throws BindError.
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  /// nullptr on timeout or after close().
  std::unique_ptr<TcpTransport> accept(std::chrono::milliseconds timeout);
  void close();

 private:
  std::atomic<int> fd_{-1};
  std::uint16_t port_ = 0;
};

/// Throws std::runtime_error when the connection cannot be made.
std::unique_ptr<TcpTransport> tcp_connect(const std::string& host, std::uint16_t port);

}  // namespace sv
