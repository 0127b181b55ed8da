#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "iotnode/net.hpp"

namespace iotnode::net {

HostPort parse_host_port(std::string_view text) {
  const std::size_t colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw std::invalid_argument(fmt::format("'{}' is not host:port", text));
  }
  const std::string_view port_text = text.substr(colon + 1);
  unsigned port = 0;
  const auto [ptr, ec] =
      std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port > 65535) {
    throw std::invalid_argument(fmt::format("'{}' has an invalid port", text));
  }
  return HostPort{std::string(text.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

TcpListener::TcpListener(Handler handler, std::size_t max_connections)
    : handler_(std::move(handler)), max_connections_(max_connections) {}

TcpListener::~TcpListener() {
  stop();
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

std::uint16_t TcpListener::bind(const HostPort& address) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* info = nullptr;
  const std::string port = std::to_string(address.port);
  const char* host = address.host.empty() || address.host == "*" ? nullptr : address.host.c_str();
  if (const int rc = ::getaddrinfo(host, port.c_str(), &hints, &info); rc != 0) {
    throw BindError(fmt::format("cannot resolve {}: {}", address.host, ::gai_strerror(rc)));
  }

  const int fd = ::socket(info->ai_family, info->ai_socktype | SOCK_CLOEXEC, info->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(info);
    throw BindError(fmt::format("socket: {}", std::strerror(errno)));
  }
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd, info->ai_addr, info->ai_addrlen) != 0 || ::listen(fd, 128) != 0) {
    const int err = errno;
    ::freeaddrinfo(info);
    ::close(fd);
    throw BindError(fmt::format("cannot listen on {}:{}: {}", address.host, address.port,
                                std::strerror(err)));
  }
  ::freeaddrinfo(info);

  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  listen_fd_ = fd;
  port_ = ntohs(bound.sin_port);
  return port_;
}

void TcpListener::start() {
  if (listen_fd_ < 0) throw BindError("listener is not bound");
  stopping_ = false;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void TcpListener::stop() {
  stopping_ = true;
  if (acceptor_.joinable()) acceptor_.join();
  std::unique_lock lock(workers_mutex_);
  workers_cv_.wait(lock, [this] { return active_workers_ == 0; });
}

void TcpListener::accept_loop() {
  while (!stopping_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 50);
    if (ready <= 0) continue;

    const int client = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (client < 0) continue;

    {
      std::unique_lock lock(workers_mutex_);
      workers_cv_.wait(lock, [this] { return active_workers_ < max_connections_; });
      ++active_workers_;
    }
    std::thread([this, client] {
      serve_connection(client);
      std::lock_guard lock(workers_mutex_);
      --active_workers_;
      workers_cv_.notify_all();
    }).detach();
  }
}

void TcpListener::serve_connection(int fd) {
  timeval timeout{5, 0};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &timeout, sizeof(timeout));
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &timeout, sizeof(timeout));
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));

  std::string request;
  char buf[2048];
  while (request.find("\r\n\r\n") == std::string::npos && request.size() < kMaxRequestHead) {
    const ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    request.append(buf, static_cast<std::size_t>(n));
  }

  if (!request.empty()) {
    std::string response;
    try {
      response = handler_(request);
    } catch (const std::exception& e) {
      spdlog::error("request handler failed: {}", e.what());
      response =
          "HTTP/1.1 500 Internal Server Error\r\nContent-Length: 0\r\nConnection: close\r\n\r\n";
    }
    std::string_view out = response;
    while (!out.empty()) {
      const ssize_t n = ::send(fd, out.data(), out.size(), MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      out.remove_prefix(static_cast<std::size_t>(n));
    }
  }
  ::shutdown(fd, SHUT_WR);
  ::close(fd);
}

}  // namespace iotnode::net
