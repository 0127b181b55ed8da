#pragma once

// Ties the node together: the periodic sample/push loop towards the
// telemetry service, the modem bridge carrying control-plane traffic over
// emulated AT sessions, and the TCP listener in front of it.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "iotnode/control_plane.hpp"
#include "iotnode/device.hpp"
#include "iotnode/dht11.hpp"
#include "iotnode/net.hpp"
#include "iotnode/serial_modem.hpp"
#include "iotnode/telemetry.hpp"

namespace iotnode::gateway {

/// A configuration problem; the CLI maps it to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Transport {
  Modem,   // each TCP connection becomes an AT session on the emulated module
  Direct,  // plain TCP straight into the control plane
};

struct GatewayConfig {
  std::filesystem::path scenario_path;
  net::HostPort listen{"127.0.0.1", 80};
  std::string telemetry_base_url;
  std::string api_key;
  Seconds sample_interval = device::kDefaultSampleInterval;
  std::string device_id = "iotnode-1";
  bool fake_clock = false;
  Transport transport = Transport::Modem;
  std::optional<std::filesystem::path> app_dir;  // dashboard assets served under /app
  std::string ssid = "iotnode";
  std::string password = "iotnode-pass";
};

/// Throws ConfigError describing the first invalid setting.
void validate(const GatewayConfig& config);

/// Loads and validates a scenario CSV; errors name the offending line.
device::Scenario load_scenario(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Telemetry client

enum class PushStatus { Accepted, RateLimited, Rejected, AuthRejected, NetworkError };

struct PushResult {
  PushStatus status = PushStatus::NetworkError;
  std::int64_t entry_id = 0;
  std::string detail;
};

class TelemetryClient {
 public:
  virtual ~TelemetryClient() = default;
  virtual PushResult write(const telemetry::FieldMap& fields, Timestamp created_at) = 0;
};

/// `GET /update` against a ThingSpeak-compatible service. The sample time
/// travels as `created_at`.
class HttpTelemetryClient final : public TelemetryClient {
 public:
  /// base_url is `http://host:port`. Throws ConfigError.
  HttpTelemetryClient(std::string base_url, std::string api_key,
                      std::chrono::milliseconds timeout = std::chrono::seconds(5));
  ~HttpTelemetryClient() override;

  PushResult write(const telemetry::FieldMap& fields, Timestamp created_at) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Writes straight into an in-process store.
class StoreTelemetryClient final : public TelemetryClient {
 public:
  StoreTelemetryClient(telemetry::TelemetryStore& store, std::string api_key)
      : store_(store), api_key_(std::move(api_key)) {}

  PushResult write(const telemetry::FieldMap& fields, Timestamp created_at) override;

 private:
  telemetry::TelemetryStore& store_;
  std::string api_key_;
};

// ---------------------------------------------------------------------------
// Sample / push cycle

/// Hook on the DHT11 data line, applied to the pulse train between the
/// sensor and the decoder.
using LineFault = std::function<void(dht11::PulseTrain&)>;

/// Reads the DHT11 at `at`: scenario value -> frame -> pulses -> frame ->
/// checked reading. nullopt when the frame fails timing or checksum.
std::optional<device::SensorReading> read_sensor(const device::Scenario& scenario, Timestamp at,
                                                 const LineFault& fault = {});

enum class CycleResult {
  NotDue,   // tick said no sample is due
  Pushed,   // reading accepted by the telemetry service
  Dropped,  // DHT11 frame failed validation; nothing sent
  Failed,   // telemetry write failed; retried on the next cycle
};

/// One sampler cycle. The device's schedule and latest reading are only
/// committed after an accepted push, so every non-pushed outcome is retried
/// on the next cycle. A rejected API key throws ConfigError.
CycleResult push_cycle(device::SerialDevice& device, const device::Scenario& scenario,
                       TelemetryClient& client, Timestamp now, const LineFault& fault = {});

/// Pushes every scenario point through the sensor path into an in-memory
/// store and returns the resulting feed.
std::vector<telemetry::TelemetryEntry> replay(const device::Scenario& scenario);

// ---------------------------------------------------------------------------
// Modem bridge

/// Carries raw HTTP exchanges over the emulated module: an inbound
/// connection becomes `<id>,CONNECT` + `+IPD` on the UART, and the node's
/// firmware answers with CIPSEND / CIPCLOSE. Thread-safe; exchanges are
/// serialized like traffic on the single UART.
class ModemBridge {
 public:
  using Firmware = std::function<std::string(std::string_view request)>;

  ModemBridge(Firmware firmware, at::LinkConfig link = {});

  /// Resets the module and runs the join / server bring-up sequence.
  /// Throws ConfigError if any step fails.
  void bring_up(std::string_view ssid, std::string_view password, std::uint16_t port);

  /// Throws std::runtime_error when the module rejects the exchange.
  std::string exchange(std::string_view raw_request);

  at::LinkState link_state() const;
  /// Host-side view of the UART: `> ` lines were sent to the module,
  /// `< ` lines came back. Bring-up only.
  std::vector<std::string> bring_up_log() const;

 private:
  std::string command(const at::AtCommand& cmd);

  Firmware firmware_;
  mutable std::mutex mutex_;
  at::SerialModem modem_;
  std::vector<std::string> log_;
};

/// Serves files below `root` for targets under `/app`.
std::string serve_static(const std::filesystem::path& root, std::string_view target);

// ---------------------------------------------------------------------------

struct SamplerStats {
  std::uint64_t cycles = 0;
  std::uint64_t pushed = 0;
  std::uint64_t dropped = 0;
  std::uint64_t failed = 0;
};

/// The running node: listener, modem bridge, control plane and sampler.
class Gateway {
 public:
  /// Validates the config and loads the scenario. Throws ConfigError.
  Gateway(GatewayConfig config, std::unique_ptr<TelemetryClient> client);
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds the listener (net::BindError), brings up the link and starts the
  /// sampler. Returns the bound port.
  std::uint16_t start();

  /// Stops accepting, lets in-flight requests finish, then stops the
  /// sampler after retrying any failed push once.
  void stop();

  /// Blocks until `stop` is requested or the sampler hits a fatal error.
  void wait(std::stop_token stop);

  /// With a fake clock: blocks until every scenario instant was sampled.
  bool wait_until_replayed(std::chrono::milliseconds timeout);

  std::optional<std::string> fatal_error() const;
  SamplerStats stats() const;

  device::SerialDevice& device() noexcept { return device_; }
  control::ControlPlane& control_plane() noexcept { return control_; }
  const GatewayConfig& config() const noexcept { return config_; }
  std::optional<at::LinkState> link_state() const;

  /// Test hook on the DHT11 line. Set before start().
  void set_line_fault(LineFault fault) { fault_ = std::move(fault); }

 private:
  std::string handle(std::string_view raw_request);
  void sampler_loop(std::stop_token stop);
  void record(CycleResult result);

  GatewayConfig config_;
  device::Scenario scenario_;
  std::unique_ptr<TelemetryClient> client_;
  device::SerialDevice device_;
  control::ControlPlane control_;
  std::unique_ptr<ModemBridge> bridge_;
  std::unique_ptr<net::TcpListener> listener_;
  LineFault fault_;
  std::jthread sampler_;

  mutable std::mutex mutex_;
  std::condition_variable_any cv_;
  SamplerStats stats_;
  bool replayed_ = false;
  std::optional<std::string> fatal_;
};

}  // namespace iotnode::gateway
