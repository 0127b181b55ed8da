#pragma once

// aREST-style control plane: GET paths map onto pin and sensor operations
// of the device, answered with a JSON envelope over minimal HTTP/1.1.
//
//   /digital/{pin}/{0|1}   digital-write
//   /analog/{pin}/{0..255} analog-write (LED duty)
//   /digital/{pin}         digital-read
//   /sensor                latest DHT11 reading
//   /                      status

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "iotnode/device.hpp"

namespace iotnode::control {

inline constexpr std::string_view kHardware = "msp430g2553";
inline constexpr int kMaxPinSegment = 9999;

enum class ActionKind { DigitalWrite, AnalogWrite, DigitalRead, SensorRead, Status };

struct ControlAction {
  ActionKind kind = ActionKind::Status;
  std::optional<int> pin;
  std::optional<int> value;

  bool read_only() const {
    return kind == ActionKind::DigitalRead || kind == ActionKind::SensorRead ||
           kind == ActionKind::Status;
  }
  friend bool operator==(const ControlAction&, const ControlAction&) = default;
};

class RouteError : public std::runtime_error {
 public:
  RouteError(int http_status, const std::string& what)
      : std::runtime_error(what), http_status_(http_status) {}
  /// 400 bad value or malformed line, 404 unknown path, 405 non-GET method.
  int http_status() const noexcept { return http_status_; }

 private:
  int http_status_;
};

/// Maps an HTTP request line (`GET /analog/5/128 HTTP/1.1`) to an action.
/// A query string is ignored. Throws RouteError.
ControlAction route(std::string_view request_line);

/// The request line route() maps back to `action`.
std::string serialize(const ControlAction& action);

struct ControlResponse {
  int http_status = 200;
  nlohmann::ordered_json body;
};

struct Execution {
  device::DeviceState state;
  ControlResponse response;
};

/// Runs a routed action against the device. Device rejections become
/// HTTP 400 responses and leave the state as it was.
Execution execute(const ControlAction& action, const device::DeviceState& state);

/// Response envelope for failures detected before execution.
ControlResponse error_response(const device::DeviceState& state, int http_status,
                               std::string_view message);

// ---------------------------------------------------------------------------
// Wire format

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

std::string_view reason_phrase(int status);

/// Status line, Content-Type, Content-Length, `Connection: close`, body.
std::string render_http(const HttpReply& reply);

/// The request line of a raw request head, without its CR LF; nullopt when
/// the line is not yet complete.
std::optional<std::string_view> request_line_of(std::string_view raw_request);

struct JournalEntry {
  std::uint64_t seq = 0;
  std::string request_line;
  int http_status = 0;
  std::string body;
};

/// Routes requests and executes them through the device's serial command
/// path. Optionally journals every executed request in linearization order.
class ControlPlane {
 public:
  explicit ControlPlane(device::SerialDevice& device) : device_(device) {}

  HttpReply handle(std::string_view request_line);

  /// Raw request head in, raw HTTP response out.
  std::string handle_raw(std::string_view raw_request);

  void enable_journal(bool on);
  std::vector<JournalEntry> journal() const;

 private:
  device::SerialDevice& device_;
  bool journal_enabled_ = false;
  std::vector<JournalEntry> journal_;  // guarded by the device's command path
};

}  // namespace iotnode::control
