#include "iotnode/dht11.hpp"

#include <fmt/format.h>

namespace iotnode::dht11 {

ChecksumError::ChecksumError(std::uint8_t expected, std::uint8_t actual)
    : CodecError(Kind::Checksum,
                 fmt::format("checksum mismatch: expected {}, got {}", expected, actual)),
      expected_(expected),
      actual_(actual) {}

TimingError::TimingError(std::size_t index, double duration_us)
    : CodecError(Kind::Timing, fmt::format("pulse {} lasts {} us, outside [{}, {}] us", index,
                                           duration_us, kMinPulseUs, kMaxPulseUs)),
      index_(index),
      duration_us_(duration_us) {}

SensorFrame encode_frame(const device::SensorReading& reading) {
  if (!device::in_sensor_range(reading.temperature_c, reading.humidity_pct)) {
    throw CodecError(CodecError::Kind::Range,
                     fmt::format("reading ({} C, {} %RH) outside the DHT11 range",
                                 reading.temperature_c, reading.humidity_pct));
  }
  SensorFrame frame;
  frame.rh_int = static_cast<std::uint8_t>(reading.humidity_pct);
  frame.t_int = static_cast<std::uint8_t>(reading.temperature_c);
  frame.checksum = checksum_of(frame.rh_int, frame.rh_dec, frame.t_int, frame.t_dec);
  return frame;
}

SensorFrame parse_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kFrameBytes) {
    throw CodecError(CodecError::Kind::Length,
                     fmt::format("frame has {} bytes, expected {}", bytes.size(), kFrameBytes));
  }
  const SensorFrame frame{bytes[0], bytes[1], bytes[2], bytes[3], bytes[4]};
  const std::uint8_t expected = checksum_of(frame.rh_int, frame.rh_dec, frame.t_int, frame.t_dec);
  if (frame.checksum != expected) throw ChecksumError(expected, frame.checksum);
  return frame;
}

device::SensorReading decode_frame(std::span<const std::uint8_t> bytes, Timestamp taken_at) {
  const SensorFrame frame = parse_frame(bytes);
  const int temperature = frame.t_int;
  const int humidity = frame.rh_int;
  if (!device::in_sensor_range(temperature, humidity)) {
    throw CodecError(CodecError::Kind::Range,
                     fmt::format("decoded reading ({} C, {} %RH) outside the DHT11 range",
                                 temperature, humidity));
  }
  return device::SensorReading{temperature, humidity, taken_at};
}

PulseTrain frame_to_pulses(const SensorFrame& frame) {
  PulseTrain pulses;
  pulses.reserve(kFrameBits);
  for (std::uint8_t byte : frame.bytes()) {
    for (int bit = 7; bit >= 0; --bit) {
      pulses.push_back(((byte >> bit) & 1U) != 0 ? kOneBitUs : kZeroBitUs);
    }
  }
  return pulses;
}

SensorFrame pulses_to_frame(std::span<const double> pulses) {
  if (pulses.size() != kFrameBits) {
    throw CodecError(CodecError::Kind::Length,
                     fmt::format("pulse train has {} pulses, expected {}", pulses.size(),
                                 kFrameBits));
  }
  std::array<std::uint8_t, kFrameBytes> bytes{};
  for (std::size_t i = 0; i < kFrameBits; ++i) {
    const double us = pulses[i];
    if (!(us >= kMinPulseUs && us <= kMaxPulseUs)) throw TimingError(i, us);
    bytes[i / 8] = static_cast<std::uint8_t>((bytes[i / 8] << 1) | (us > kBitThresholdUs ? 1 : 0));
  }
  return SensorFrame{bytes[0], bytes[1], bytes[2], bytes[3], bytes[4]};
}

}  // namespace iotnode::dht11
