#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>

#include "iotnode/wifi_at.hpp"

namespace iotnode::at {

// UART between the host MCU and the module: 115200 baud, 8N1.
inline constexpr unsigned kBaudRate = 115200;
inline constexpr unsigned kBitsPerByte = 10;  // start + 8 data + stop

constexpr std::chrono::nanoseconds uart_transfer_time(std::size_t bytes) {
  return std::chrono::nanoseconds(static_cast<long long>(bytes) * kBitsPerByte * 1'000'000'000LL /
                                  kBaudRate);
}

/// The module as seen from both of its sides: a CR LF line-disciplined byte
/// stream towards the host MCU, and TCP sessions towards remote clients.
/// Not thread-safe; callers serialize access.
class SerialModem {
 public:
  explicit SerialModem(LinkConfig config = {});

  /// Pulls RSTB low with the given GPIO0 level, then releases it.
  void reset(BootPins pins);

  /// Host -> module. Complete command lines are executed as they arrive;
  /// while a CIPSEND is pending the next `length` bytes are its payload.
  void write(std::string_view bytes);

  /// Module -> host: everything printed since the last read.
  std::string read();

  /// A TCP client connected; returns its session id. Throws SessionError.
  int accept_client();
  void receive(int session, std::string_view bytes);
  void disconnect(int session);

  /// Bytes sent to `session` via CIPSEND since the last call.
  std::string take_transmitted(int session);

  const LinkState& state() const noexcept { return state_; }
  /// Bytes that crossed the UART in either direction.
  std::size_t uart_bytes() const noexcept { return uart_bytes_; }

 private:
  void emit(std::string_view line);

  LinkConfig config_;
  LinkState state_;
  std::string rx_;
  std::string tx_;
  std::map<int, std::string> transmitted_;
  std::size_t uart_bytes_ = 0;
};

}  // namespace iotnode::at
