#pragma once

// DHT11 single-wire framing: the 5-byte frame (RH int/dec, T int/dec,
// additive checksum) and its 40-pulse data phase, MSB of rh_int first.

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "iotnode/device.hpp"

namespace iotnode::dht11 {

inline constexpr std::size_t kFrameBytes = 5;
inline constexpr std::size_t kFrameBits = 40;

// High-pulse durations in microseconds.
inline constexpr double kZeroBitUs = 27.0;
inline constexpr double kOneBitUs = 70.0;
inline constexpr double kMinPulseUs = 20.0;
inline constexpr double kBitThresholdUs = 49.5;  // > threshold is a 1
inline constexpr double kMaxPulseUs = 90.0;

struct SensorFrame {
  std::uint8_t rh_int = 0;
  std::uint8_t rh_dec = 0;
  std::uint8_t t_int = 0;
  std::uint8_t t_dec = 0;
  std::uint8_t checksum = 0;

  std::array<std::uint8_t, kFrameBytes> bytes() const {
    return {rh_int, rh_dec, t_int, t_dec, checksum};
  }
  friend bool operator==(const SensorFrame&, const SensorFrame&) = default;
};

using PulseTrain = std::vector<double>;

constexpr std::uint8_t checksum_of(std::uint8_t rh_int, std::uint8_t rh_dec, std::uint8_t t_int,
                                   std::uint8_t t_dec) {
  return static_cast<std::uint8_t>((rh_int + rh_dec + t_int + t_dec) & 0xFF);
}

class CodecError : public std::runtime_error {
 public:
  enum class Kind { Range, Checksum, Length, Timing };

  CodecError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class ChecksumError : public CodecError {
 public:
  ChecksumError(std::uint8_t expected, std::uint8_t actual);
  std::uint8_t expected() const noexcept { return expected_; }
  std::uint8_t actual() const noexcept { return actual_; }

 private:
  std::uint8_t expected_;
  std::uint8_t actual_;
};

class TimingError : public CodecError {
 public:
  TimingError(std::size_t index, double duration_us);
  std::size_t index() const noexcept { return index_; }
  double duration_us() const noexcept { return duration_us_; }

 private:
  std::size_t index_;
  double duration_us_;
};

/// Decimal bytes are always zero. Throws CodecError(Range) outside the
/// DHT11 operating range.
SensorFrame encode_frame(const device::SensorReading& reading);

/// Length and checksum validation only; decimal bytes are kept as received.
SensorFrame parse_frame(std::span<const std::uint8_t> bytes);

/// parse_frame followed by the operating-range guard.
device::SensorReading decode_frame(std::span<const std::uint8_t> bytes, Timestamp taken_at = {});

PulseTrain frame_to_pulses(const SensorFrame& frame);

/// Classifies each high pulse; the checksum is not verified here.
SensorFrame pulses_to_frame(std::span<const double> pulses);

}  // namespace iotnode::dht11
