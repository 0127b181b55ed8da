#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "iotnode/telemetry.hpp"

namespace iotnode::telemetry {
namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

struct Accumulator {
  std::int64_t sum = 0;
  std::int64_t min = 0;
  std::int64_t max = 0;
  std::int64_t count = 0;

  void add(std::int64_t v) {
    if (count == 0) {
      min = max = v;
    } else {
      min = std::min(min, v);
      max = std::max(max, v);
    }
    sum += v;
    ++count;
  }
};

void check_field(int field) {
  if (field < 1 || field > kFieldCount) {
    throw std::invalid_argument(fmt::format("field {} outside 1..{}", field, kFieldCount));
  }
}

}  // namespace

bool is_valid_write_key(std::string_view key) {
  return key.size() == kWriteKeyLength &&
         std::all_of(key.begin(), key.end(),
                     [](char c) { return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9'); });
}

std::optional<int> parse_field_id(std::string_view text) {
  if (text.starts_with("field")) text.remove_prefix(5);
  if (text.size() != 1 || text[0] < '1' || text[0] > '0' + kFieldCount) return std::nullopt;
  return text[0] - '0';
}

Rational Rational::of(std::int64_t num, std::int64_t den) {
  if (den == 0) throw std::invalid_argument("zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
  return Rational{num / g, den / g};
}

std::int64_t round_half_up(Rational q) { return floor_div(2 * q.num + q.den, 2 * q.den); }

std::vector<DailyStat> daily_aggregate(std::span<const TelemetryEntry> entries, int field) {
  check_field(field);
  std::vector<DailyStat> out;
  std::optional<std::chrono::sys_days> current;
  Accumulator acc;
  Timestamp previous{};

  auto flush = [&] {
    if (current && acc.count > 0) {
      out.push_back(DailyStat{*current, Rational::of(acc.sum, acc.count), acc.min, acc.max,
                              acc.count});
    }
    acc = Accumulator{};
  };

  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& entry = entries[i];
    if (i > 0 && entry.created_at < previous) {
      throw std::invalid_argument("entries are not sorted by created_at");
    }
    previous = entry.created_at;
    const auto& value = entry.fields[static_cast<std::size_t>(field - 1)];
    if (!value) continue;
    const auto day = std::chrono::floor<std::chrono::days>(entry.created_at);
    if (current != day) {
      flush();
      current = day;
    }
    acc.add(*value);
  }
  flush();
  return out;
}

AggregateSummary summarize(std::span<const TelemetryEntry> entries, int field) {
  check_field(field);
  Accumulator acc;
  AggregateSummary summary;
  for (const auto& entry : entries) {
    const auto& value = entry.fields[static_cast<std::size_t>(field - 1)];
    if (!value) continue;
    if (acc.count == 0) {
      summary.window_start = summary.window_end = entry.created_at;
    } else {
      summary.window_start = std::min(summary.window_start, entry.created_at);
      summary.window_end = std::max(summary.window_end, entry.created_at);
    }
    acc.add(*value);
  }
  if (acc.count == 0) {
    throw EmptyWindowError(fmt::format("no entries carry field{}", field));
  }
  summary.mean = Rational::of(acc.sum, acc.count);
  summary.mean_rounded = round_half_up(summary.mean);
  summary.min = acc.min;
  summary.max = acc.max;
  summary.count = acc.count;
  return summary;
}

}  // namespace iotnode::telemetry
