#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "iotnode/device.hpp"

namespace iotnode::device {
namespace {

constexpr std::string_view kHeader = "ts,temp_c,rh_pct";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

int parse_int(std::string_view text, std::size_t line, std::string_view column) {
  text = trim(text);
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ScenarioError(line, fmt::format("line {}: {} '{}' is not an integer", line, column,
                                          text));
  }
  return value;
}

}  // namespace

Scenario::Scenario(std::vector<ScenarioPoint> points) : points_(std::move(points)) {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& p = points_[i];
    const std::size_t line = i + 2;
    if (!in_sensor_range(p.temperature_c, p.humidity_pct)) {
      throw ScenarioError(line, fmt::format("line {}: reading ({} C, {} %RH) outside the "
                                            "DHT11 range",
                                            line, p.temperature_c, p.humidity_pct));
    }
    if (i > 0 && p.at <= points_[i - 1].at) {
      throw ScenarioError(line, fmt::format("line {}: timestamp {} does not increase", line,
                                            format_iso8601(p.at)));
    }
  }
}

Timestamp Scenario::start() const {
  if (points_.empty()) throw ScenarioError(0, "scenario is empty");
  return points_.front().at;
}

Timestamp Scenario::end() const {
  if (points_.empty()) throw ScenarioError(0, "scenario is empty");
  return points_.back().at;
}

SensorReading sample_environment(const Scenario& scenario, Timestamp at) {
  const auto& points = scenario.points();
  auto it = std::upper_bound(points.begin(), points.end(), at,
                             [](Timestamp t, const ScenarioPoint& p) { return t < p.at; });
  if (it == points.begin()) {
    throw DeviceError(DeviceError::Kind::NoData,
                      fmt::format("no scenario data at or before {}", format_iso8601(at)));
  }
  --it;
  return SensorReading{it->temperature_c, it->humidity_pct, at};
}

Scenario parse_scenario_csv(std::istream& in) {
  std::string raw;
  std::size_t line = 0;
  std::vector<ScenarioPoint> points;

  while (std::getline(in, raw)) {
    ++line;
    const std::string_view row = trim(raw);
    if (line == 1) {
      if (row != kHeader) {
        throw ScenarioError(1, fmt::format("line 1: expected header '{}'", kHeader));
      }
      continue;
    }
    if (row.empty()) continue;

    std::array<std::string_view, 3> cols;
    std::size_t n = 0;
    std::size_t begin = 0;
    while (true) {
      const std::size_t comma = row.find(',', begin);
      if (n == cols.size()) {
        throw ScenarioError(line, fmt::format("line {}: expected 3 columns", line));
      }
      cols[n++] = row.substr(begin, comma - begin);
      if (comma == std::string_view::npos) break;
      begin = comma + 1;
    }
    if (n != cols.size()) {
      throw ScenarioError(line, fmt::format("line {}: expected 3 columns", line));
    }

    ScenarioPoint point;
    try {
      point.at = parse_iso8601(trim(cols[0]));
    } catch (const std::invalid_argument& e) {
      throw ScenarioError(line, fmt::format("line {}: {}", line, e.what()));
    }
    point.temperature_c = parse_int(cols[1], line, "temp_c");
    point.humidity_pct = parse_int(cols[2], line, "rh_pct");

    if (!in_sensor_range(point.temperature_c, point.humidity_pct)) {
      throw ScenarioError(line, fmt::format("line {}: reading ({} C, {} %RH) outside the "
                                            "DHT11 range",
                                            line, point.temperature_c, point.humidity_pct));
    }
    if (!points.empty() && point.at <= points.back().at) {
      throw ScenarioError(line, fmt::format("line {}: timestamp {} does not increase", line,
                                            format_iso8601(point.at)));
    }
    points.push_back(point);
  }

  if (line == 0) throw ScenarioError(0, "scenario file is empty");
  if (points.empty()) throw ScenarioError(0, "scenario file has no data rows");
  return Scenario(std::move(points));
}

Scenario load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(0, fmt::format("cannot open scenario '{}'", path.string()));
  return parse_scenario_csv(in);
}

std::string scenario_to_csv(const Scenario& scenario) {
  std::string out{kHeader};
  out += '\n';
  for (const auto& p : scenario.points()) {
    out += fmt::format("{},{},{}\n", format_iso8601(p.at), p.temperature_c, p.humidity_pct);
  }
  return out;
}

}  // namespace iotnode::device
