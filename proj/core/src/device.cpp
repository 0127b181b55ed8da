#include "iotnode/device.hpp"

#include <fmt/format.h>

namespace iotnode::device {

DeviceState make_device(std::string device_id, Seconds sample_interval) {
  DeviceState state;
  state.device_id = std::move(device_id);
  state.name = "iot-node";
  state.sample_interval = sample_interval;
  for (int pin = 0; pin < kPinCount; ++pin) state.digital_pins[pin] = 0;
  for (int pin : kPwmPins) state.pwm_channels[pin] = 0;
  return state;
}

bool satisfies_invariants(const DeviceState& state) {
  if (state.pwm_channels.size() != kPwmPins.size()) return false;
  for (const auto& [pin, duty] : state.pwm_channels) {
    if (!is_pwm_pin(pin) || duty < 0 || duty > kMaxDuty) return false;
  }
  for (const auto& [pin, level] : state.digital_pins) {
    if (pin < 0 || pin >= kPinCount || (level != 0 && level != 1)) return false;
  }
  if (state.last_reading &&
      !in_sensor_range(state.last_reading->temperature_c, state.last_reading->humidity_pct)) {
    return false;
  }
  return state.sample_interval.count() > 0;
}

DeviceState apply_digital(const DeviceState& state, int pin, int level) {
  const auto it = state.digital_pins.find(pin);
  if (it == state.digital_pins.end()) {
    throw DeviceError(DeviceError::Kind::UnknownPin, fmt::format("unknown pin {}", pin));
  }
  if (level != 0 && level != 1) {
    throw DeviceError(DeviceError::Kind::BadLevel,
                      fmt::format("digital level {} is not 0 or 1", level));
  }
  DeviceState next = state;
  next.digital_pins[pin] = level;
  return next;
}

DeviceState apply_pwm(const DeviceState& state, int pin, int duty) {
  if (!state.pwm_channels.contains(pin)) {
    if (state.digital_pins.contains(pin)) {
      throw DeviceError(DeviceError::Kind::NotPwmPin,
                        fmt::format("pin {} is not PWM-capable", pin));
    }
    throw DeviceError(DeviceError::Kind::UnknownPin, fmt::format("unknown pin {}", pin));
  }
  if (duty < 0 || duty > kMaxDuty) {
    throw DeviceError(DeviceError::Kind::BadDuty,
                      fmt::format("duty {} outside [0, {}]", duty, kMaxDuty));
  }
  DeviceState next = state;
  next.pwm_channels[pin] = duty;
  return next;
}

TickResult tick(const DeviceState& state, Timestamp now) {
  TickResult result{state, false};
  if (!state.last_sample_at || now - *state.last_sample_at >= state.sample_interval) {
    result.sample_due = true;
    result.state.last_sample_at = now;
  }
  return result;
}

}  // namespace iotnode::device
