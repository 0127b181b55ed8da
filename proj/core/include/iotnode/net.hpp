#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>

namespace iotnode::net {

class BindError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};

/// Parses `host:port`; throws std::invalid_argument.
HostPort parse_host_port(std::string_view text);

/// Blocking TCP acceptor with one worker thread per connection. Each
/// connection carries one request: the handler receives the raw request
/// head (through the blank line) and returns the bytes to send back before
/// the socket is closed.
class TcpListener {
 public:
  using Handler = std::function<std::string(std::string_view raw_request)>;

  static constexpr std::size_t kMaxRequestHead = 8192;

  explicit TcpListener(Handler handler, std::size_t max_connections = 128);
  ~TcpListener();

  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  /// Binds and listens; port 0 picks a free port. Returns the bound port.
  /// Throws BindError.
  std::uint16_t bind(const HostPort& address);

  /// Runs the accept loop on a background thread.
  void start();

  /// Stops accepting and waits for in-flight connections to finish.
  void stop();

  std::uint16_t port() const noexcept { return port_; }

 private:
  void accept_loop();
  void serve_connection(int fd);

  Handler handler_;
  std::size_t max_connections_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;

  std::mutex workers_mutex_;
  std::condition_variable workers_cv_;
  std::size_t active_workers_ = 0;
};

}  // namespace iotnode::net
