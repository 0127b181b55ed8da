#pragma once

// Emulated MSP430-class sensor/actuator node: GPIO levels, four PWM LED
// channels and a DHT11 fed from a replayable environment scenario.

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "iotnode/time.hpp"

namespace iotnode::device {

/// Logical pin ids of the four LED driver channels.
inline constexpr std::array<int, 4> kPwmPins{2, 5, 6, 9};
/// Digital pins are the logical ids [0, kPinCount).
inline constexpr int kPinCount = 16;
inline constexpr int kMaxDuty = 255;
inline constexpr Seconds kDefaultSampleInterval{15};

// DHT11 operating range.
inline constexpr int kMinTemperatureC = 0;
inline constexpr int kMaxTemperatureC = 50;
inline constexpr int kMinHumidityPct = 20;
inline constexpr int kMaxHumidityPct = 90;

constexpr bool is_pwm_pin(int pin) {
  for (int p : kPwmPins) {
    if (p == pin) return true;
  }
  return false;
}

constexpr bool in_sensor_range(int temperature_c, int humidity_pct) {
  return temperature_c >= kMinTemperatureC && temperature_c <= kMaxTemperatureC &&
         humidity_pct >= kMinHumidityPct && humidity_pct <= kMaxHumidityPct;
}

struct SensorReading {
  int temperature_c = 0;
  int humidity_pct = 0;
  Timestamp taken_at{};

  friend bool operator==(const SensorReading&, const SensorReading&) = default;
};

struct DeviceState {
  std::string device_id;
  std::string name;
  std::map<int, int> digital_pins;  // pin -> 0|1
  std::map<int, int> pwm_channels;  // pin -> duty 0..255
  Seconds sample_interval = kDefaultSampleInterval;
  std::optional<Timestamp> last_sample_at;
  std::optional<SensorReading> last_reading;

  friend bool operator==(const DeviceState&, const DeviceState&) = default;
};

/// A fresh node: all digital pins low, all LED channels at duty 0.
DeviceState make_device(std::string device_id, Seconds sample_interval = kDefaultSampleInterval);

/// True when the state satisfies every DeviceState invariant.
bool satisfies_invariants(const DeviceState& state);

class DeviceError : public std::runtime_error {
 public:
  enum class Kind { UnknownPin, NotPwmPin, BadLevel, BadDuty, NoData };

  DeviceError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Sets one digital pin. Throws DeviceError; the input is never modified.
DeviceState apply_digital(const DeviceState& state, int pin, int level);

/// Sets the duty register of an LED channel. Throws DeviceError.
DeviceState apply_pwm(const DeviceState& state, int pin, int duty);

/// Fraction of each PWM period the LED is on, duty / 255.
constexpr double duty_fraction(int duty) { return static_cast<double>(duty) / kMaxDuty; }

struct TickResult {
  DeviceState state;
  bool sample_due = false;
};

/// Advances the sampling schedule. A sample is due on the first tick and
/// whenever at least sample_interval has elapsed since the last one.
TickResult tick(const DeviceState& state, Timestamp now);

// ---------------------------------------------------------------------------
// Scenario replay

struct ScenarioPoint {
  Timestamp at{};
  int temperature_c = 0;
  int humidity_pct = 0;

  friend bool operator==(const ScenarioPoint&, const ScenarioPoint&) = default;
};

class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::size_t line, const std::string& what)
      : std::runtime_error(what), line_(line) {}
  /// 1-based line of the offending row; 0 when not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Ordered environment points with strictly increasing timestamps.
class Scenario {
 public:
  /// Validates ordering and ranges; throws ScenarioError naming the
  /// offending point (line = index + 2, matching the CSV layout).
  explicit Scenario(std::vector<ScenarioPoint> points);

  const std::vector<ScenarioPoint>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  Timestamp start() const;
  Timestamp end() const;

 private:
  std::vector<ScenarioPoint> points_;
};

/// Step-hold lookup: the latest point with timestamp <= at.
/// Throws DeviceError(NoData) when `at` precedes the first point.
SensorReading sample_environment(const Scenario& scenario, Timestamp at);

/// Reads `ts,temp_c,rh_pct` CSV. Malformed rows abort with a ScenarioError
/// carrying the line number; an input without data rows is an error.
Scenario parse_scenario_csv(std::istream& in);
Scenario load_scenario_file(const std::filesystem::path& path);
std::string scenario_to_csv(const Scenario& scenario);

// ---------------------------------------------------------------------------

/// Sole owner of a DeviceState. Every mutation runs through apply(), which
/// executes commands one at a time; snapshot() hands out immutable copies.
class SerialDevice {
 public:
  explicit SerialDevice(DeviceState initial) : state_(std::move(initial)) {}

  SerialDevice(const SerialDevice&) = delete;
  SerialDevice& operator=(const SerialDevice&) = delete;

  template <typename Command>
  auto apply(Command&& command) -> std::invoke_result_t<Command, DeviceState&> {
    std::lock_guard lock(mutex_);
    return std::forward<Command>(command)(state_);
  }

  DeviceState snapshot() const {
    std::lock_guard lock(mutex_);
    return state_;
  }

 private:
  mutable std::mutex mutex_;
  DeviceState state_;
};

}  // namespace iotnode::device
