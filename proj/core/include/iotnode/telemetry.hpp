#pragma once

// ThingSpeak-compatible telemetry: channels keyed by a write API key, an
// append-only entry ledger per channel, and the daily / window aggregates.

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "iotnode/time.hpp"

namespace iotnode::telemetry {

inline constexpr int kFieldCount = 8;
inline constexpr std::size_t kWriteKeyLength = 16;
inline constexpr Seconds kDefaultRateLimit{15};
/// The demonstrator's write key.
inline constexpr std::string_view kDemoWriteKey = "W4JX8WHVIQJPNBN9";

/// field1..field8; index 0 is field1.
using FieldMap = std::array<std::optional<std::int64_t>, kFieldCount>;

/// 16 characters from [A-Z0-9].
bool is_valid_write_key(std::string_view key);

/// Accepts `field3` or `3`; returns 1..8, nullopt otherwise.
std::optional<int> parse_field_id(std::string_view text);

struct Channel {
  std::int64_t channel_id = 0;
  std::string name;
  std::string write_key;
  std::array<std::optional<std::string>, kFieldCount> field_names;
  Timestamp created_at{};

  friend bool operator==(const Channel&, const Channel&) = default;
};

struct TelemetryEntry {
  std::int64_t entry_id = 0;
  Timestamp created_at{};
  FieldMap fields{};

  friend bool operator==(const TelemetryEntry&, const TelemetryEntry&) = default;
};

/// Exact mean as a reduced fraction with positive denominator.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Rational of(std::int64_t num, std::int64_t den);
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};

/// Round half up: floor(q + 1/2).
std::int64_t round_half_up(Rational q);

struct DailyStat {
  std::chrono::sys_days date{};
  Rational mean;
  std::int64_t min = 0;
  std::int64_t max = 0;
  std::int64_t count = 0;

  std::int64_t mean_rounded() const { return round_half_up(mean); }
  friend bool operator==(const DailyStat&, const DailyStat&) = default;
};

struct AggregateSummary {
  Rational mean;
  std::int64_t mean_rounded = 0;
  std::int64_t min = 0;
  std::int64_t max = 0;
  std::int64_t count = 0;
  Timestamp window_start{};
  Timestamp window_end{};

  friend bool operator==(const AggregateSummary&, const AggregateSummary&) = default;
};

class EmptyWindowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One stat per UTC day with at least one value of `field` (1..8); entries
/// without the field are skipped. Input must be sorted by created_at.
std::vector<DailyStat> daily_aggregate(std::span<const TelemetryEntry> entries, int field);

/// Mean/min/max of `field` over all entries carrying it. The window spans
/// the first to the last created_at of those entries.
/// Throws EmptyWindowError when no entry carries the field.
AggregateSummary summarize(std::span<const TelemetryEntry> entries, int field);

// ---------------------------------------------------------------------------

enum class WriteStatus { Accepted, AuthError, RateLimited, NoFields };

struct WriteResult {
  WriteStatus status = WriteStatus::Accepted;
  std::int64_t entry_id = 0;  // 0 unless accepted
};

class UnknownChannelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StoreOptions {
  /// Minimum spacing between accepted writes to one channel; zero disables.
  Seconds rate_limit = kDefaultRateLimit;
  /// fsync every appended record before acknowledging it.
  bool durable = true;
  /// Timestamp source for writes that do not carry their own.
  std::function<Timestamp()> clock;
};

/// Channel registry and per-channel entry ledgers.
///
/// Writes to one channel are serialized through that channel's appender;
/// reads copy a consistent snapshot and may run concurrently. With a store
/// directory every accepted entry is appended to `channel-<id>.jsonl`
/// before write_update returns, and channel metadata lives in
/// `channels.json`.
class TelemetryStore {
 public:
  /// In-memory store.
  explicit TelemetryStore(StoreOptions options = {});
  /// Persistent store rooted at `dir`, loading whatever it already holds.
  explicit TelemetryStore(std::filesystem::path dir, StoreOptions options = {});
  ~TelemetryStore();

  TelemetryStore(const TelemetryStore&) = delete;
  TelemetryStore& operator=(const TelemetryStore&) = delete;

  /// Registers a channel; field1/field2 are labelled temperature/humidity.
  /// A key is generated when none is given. Throws StoreError for a
  /// malformed or duplicate key.
  Channel create_channel(std::string name, std::optional<std::string> write_key = std::nullopt,
                         std::optional<Timestamp> now = std::nullopt);

  /// Appends an entry to the key's channel. `now` defaults to the store
  /// clock, read under the channel's appender; an earlier `now` than the
  /// channel's last entry is clamped so created_at never decreases.
  WriteResult write_update(std::string_view write_key, const FieldMap& fields,
                           std::optional<Timestamp> now = std::nullopt);

  /// Entries with start <= created_at <= end, ascending, truncated to the
  /// last `limit`. Throws UnknownChannelError.
  std::vector<TelemetryEntry> read_feed(std::int64_t channel_id, Timestamp start, Timestamp end,
                                        std::size_t limit) const;

  /// Every entry of the channel. Throws UnknownChannelError.
  std::vector<TelemetryEntry> entries(std::int64_t channel_id) const;

  std::optional<Channel> channel(std::int64_t channel_id) const;
  std::vector<Channel> channels() const;

  void set_rate_limit(Seconds interval);
  Seconds rate_limit() const;

  const std::optional<std::filesystem::path>& directory() const noexcept { return dir_; }

 private:
  struct ChannelLog;

  ChannelLog* find_by_key(std::string_view key) const;
  ChannelLog* find_by_id(std::int64_t id) const;
  void load();
  void write_manifest() const;
  Timestamp clock_now() const;

  std::optional<std::filesystem::path> dir_;
  StoreOptions options_;
  std::atomic<std::int64_t> rate_limit_seconds_;

  mutable std::shared_mutex registry_mutex_;
  std::map<std::int64_t, std::unique_ptr<ChannelLog>> channels_;
  std::map<std::string, std::int64_t, std::less<>> key_index_;
};

}  // namespace iotnode::telemetry
