#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "iotnode/telemetry.hpp"

namespace iotnode::telemetry {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kManifestName = "channels.json";

fs::path feed_path(const fs::path& dir, std::int64_t id) {
  return dir / fmt::format("channel-{}.jsonl", id);
}

std::string encode_record(const TelemetryEntry& entry) {
  nlohmann::ordered_json doc;
  doc["entry_id"] = entry.entry_id;
  doc["ts"] = format_iso8601(entry.created_at);
  for (int i = 0; i < kFieldCount; ++i) {
    if (entry.fields[static_cast<std::size_t>(i)]) {
      doc[fmt::format("f{}", i + 1)] = *entry.fields[static_cast<std::size_t>(i)];
    }
  }
  return doc.dump() + "\n";
}

TelemetryEntry decode_record(std::string_view line) {
  const json doc = json::parse(line);
  TelemetryEntry entry;
  entry.entry_id = doc.at("entry_id").get<std::int64_t>();
  entry.created_at = parse_iso8601(doc.at("ts").get<std::string>());
  for (int i = 0; i < kFieldCount; ++i) {
    const std::string key = fmt::format("f{}", i + 1);
    if (doc.contains(key)) entry.fields[static_cast<std::size_t>(i)] = doc[key].get<std::int64_t>();
  }
  return entry;
}

void write_all(int fd, std::string_view data, const fs::path& path) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StoreError(fmt::format("write to {} failed: {}", path.string(), std::strerror(errno)));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::string generate_key(std::mt19937_64& rng) {
  static constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  std::uniform_int_distribution<std::size_t> pick(0, kAlphabet.size() - 1);
  std::string key(kWriteKeyLength, 'A');
  for (char& c : key) c = kAlphabet[pick(rng)];
  return key;
}

}  // namespace

struct TelemetryStore::ChannelLog {
  Channel meta;
  mutable std::shared_mutex mutex;
  std::vector<TelemetryEntry> entries;
  int fd = -1;
  fs::path path;
  off_t bytes = 0;

  ~ChannelLog() {
    if (fd >= 0) ::close(fd);
  }

  void open_for_append() {
    fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) {
      throw StoreError(fmt::format("cannot open {}: {}", path.string(), std::strerror(errno)));
    }
  }
};

TelemetryStore::TelemetryStore(StoreOptions options)
    : options_(std::move(options)), rate_limit_seconds_(options_.rate_limit.count()) {}

TelemetryStore::TelemetryStore(fs::path dir, StoreOptions options)
    : dir_(std::move(dir)),
      options_(std::move(options)),
      rate_limit_seconds_(options_.rate_limit.count()) {
  fs::create_directories(*dir_);
  load();
}

TelemetryStore::~TelemetryStore() = default;

Timestamp TelemetryStore::clock_now() const {
  if (options_.clock) return options_.clock();
  return std::chrono::floor<Seconds>(std::chrono::system_clock::now());
}

void TelemetryStore::set_rate_limit(Seconds interval) { rate_limit_seconds_ = interval.count(); }

Seconds TelemetryStore::rate_limit() const { return Seconds{rate_limit_seconds_.load()}; }

TelemetryStore::ChannelLog* TelemetryStore::find_by_key(std::string_view key) const {
  const auto it = key_index_.find(key);
  return it == key_index_.end() ? nullptr : channels_.at(it->second).get();
}

TelemetryStore::ChannelLog* TelemetryStore::find_by_id(std::int64_t id) const {
  const auto it = channels_.find(id);
  return it == channels_.end() ? nullptr : it->second.get();
}

void TelemetryStore::load() {
  const fs::path manifest = *dir_ / kManifestName;
  if (!fs::exists(manifest)) return;

  json doc;
  try {
    std::ifstream in(manifest);
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw StoreError(fmt::format("corrupt manifest {}: {}", manifest.string(), e.what()));
  }

  for (const auto& c : doc.at("channels")) {
    auto log = std::make_unique<ChannelLog>();
    log->meta.channel_id = c.at("id").get<std::int64_t>();
    log->meta.name = c.at("name").get<std::string>();
    log->meta.write_key = c.at("write_key").get<std::string>();
    log->meta.created_at = parse_iso8601(c.at("created_at").get<std::string>());
    for (int i = 0; i < kFieldCount; ++i) {
      const std::string key = fmt::format("field{}", i + 1);
      if (c.contains("fields") && c["fields"].contains(key)) {
        log->meta.field_names[static_cast<std::size_t>(i)] = c["fields"][key].get<std::string>();
      }
    }
    log->path = feed_path(*dir_, log->meta.channel_id);

    if (fs::exists(log->path)) {
      std::ifstream in(log->path, std::ios::binary);
      std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      std::size_t pos = 0;
      std::size_t line_no = 0;
      while (pos < content.size()) {
        const std::size_t nl = content.find('\n', pos);
        ++line_no;
        if (nl == std::string::npos) {
          // A record without its newline is a torn append; drop it.
          spdlog::warn("{}: discarding incomplete trailing record", log->path.string());
          fs::resize_file(log->path, pos);
          break;
        }
        TelemetryEntry entry;
        try {
          entry = decode_record(std::string_view(content).substr(pos, nl - pos));
        } catch (const std::exception& e) {
          throw StoreError(
              fmt::format("{}:{}: corrupt record: {}", log->path.string(), line_no, e.what()));
        }
        if (entry.entry_id != static_cast<std::int64_t>(log->entries.size()) + 1) {
          throw StoreError(fmt::format("{}:{}: entry_id {} breaks the 1..N sequence",
                                       log->path.string(), line_no, entry.entry_id));
        }
        log->entries.push_back(entry);
        pos = nl + 1;
        log->bytes = static_cast<off_t>(pos);
      }
    }
    log->open_for_append();
    key_index_.emplace(log->meta.write_key, log->meta.channel_id);
    channels_.emplace(log->meta.channel_id, std::move(log));
  }
}

void TelemetryStore::write_manifest() const {
  if (!dir_) return;
  nlohmann::ordered_json doc;
  doc["channels"] = nlohmann::ordered_json::array();
  for (const auto& [id, log] : channels_) {
    nlohmann::ordered_json c;
    c["id"] = id;
    c["name"] = log->meta.name;
    c["write_key"] = log->meta.write_key;
    c["created_at"] = format_iso8601(log->meta.created_at);
    nlohmann::ordered_json fields = nlohmann::ordered_json::object();
    for (int i = 0; i < kFieldCount; ++i) {
      if (const auto& label = log->meta.field_names[static_cast<std::size_t>(i)]) {
        fields[fmt::format("field{}", i + 1)] = *label;
      }
    }
    c["fields"] = std::move(fields);
    doc["channels"].push_back(std::move(c));
  }

  const fs::path target = *dir_ / kManifestName;
  const fs::path tmp = *dir_ / (std::string(kManifestName) + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << doc.dump(2) << '\n';
    out.flush();
    if (!out) throw StoreError(fmt::format("cannot write {}", tmp.string()));
  }
  fs::rename(tmp, target);
}

Channel TelemetryStore::create_channel(std::string name, std::optional<std::string> write_key,
                                       std::optional<Timestamp> now) {
  std::unique_lock lock(registry_mutex_);

  if (write_key) {
    if (!is_valid_write_key(*write_key)) {
      throw StoreError(fmt::format("write key '{}' is not 16 uppercase alphanumerics", *write_key));
    }
    if (key_index_.contains(*write_key)) {
      throw StoreError(fmt::format("write key '{}' is already in use", *write_key));
    }
  } else {
    std::mt19937_64 rng{std::random_device{}()};
    do {
      write_key = generate_key(rng);
    } while (key_index_.contains(*write_key));
  }

  auto log = std::make_unique<ChannelLog>();
  log->meta.channel_id = channels_.empty() ? 1 : channels_.rbegin()->first + 1;
  log->meta.name = std::move(name);
  log->meta.write_key = *write_key;
  log->meta.field_names[0] = "temperature";
  log->meta.field_names[1] = "humidity";
  log->meta.created_at = now.value_or(clock_now());
  if (dir_) {
    log->path = feed_path(*dir_, log->meta.channel_id);
    log->open_for_append();
  }

  Channel meta = log->meta;
  key_index_.emplace(meta.write_key, meta.channel_id);
  channels_.emplace(meta.channel_id, std::move(log));
  write_manifest();
  return meta;
}

WriteResult TelemetryStore::write_update(std::string_view write_key, const FieldMap& fields,
                                         std::optional<Timestamp> now) {
  const bool any = std::any_of(fields.begin(), fields.end(), [](const auto& f) { return f; });
  if (!any) return {WriteStatus::NoFields, 0};

  std::shared_lock registry(registry_mutex_);
  ChannelLog* log = find_by_key(write_key);
  if (log == nullptr) return {WriteStatus::AuthError, 0};

  std::unique_lock appender(log->mutex);
  Timestamp at = now.value_or(clock_now());
  if (!log->entries.empty()) {
    const Timestamp last = log->entries.back().created_at;
    const Seconds limit{rate_limit_seconds_.load()};
    if (limit.count() > 0 && at - last < limit) return {WriteStatus::RateLimited, 0};
    at = std::max(at, last);
  }

  TelemetryEntry entry{static_cast<std::int64_t>(log->entries.size()) + 1, at, fields};
  if (log->fd >= 0) {
    const std::string record = encode_record(entry);
    try {
      write_all(log->fd, record, log->path);
      if (options_.durable && ::fsync(log->fd) != 0) {
        throw StoreError(fmt::format("fsync {} failed: {}", log->path.string(),
                                     std::strerror(errno)));
      }
    } catch (const StoreError&) {
      if (::ftruncate(log->fd, log->bytes) != 0) {
        spdlog::error("{}: could not roll back a failed append", log->path.string());
      }
      throw;
    }
    log->bytes += static_cast<off_t>(record.size());
  }
  log->entries.push_back(entry);
  return {WriteStatus::Accepted, entry.entry_id};
}

std::vector<TelemetryEntry> TelemetryStore::read_feed(std::int64_t channel_id, Timestamp start,
                                                      Timestamp end, std::size_t limit) const {
  if (start > end) throw std::invalid_argument("feed window start is after its end");
  if (limit == 0) throw std::invalid_argument("feed limit must be positive");

  std::shared_lock registry(registry_mutex_);
  const ChannelLog* log = find_by_id(channel_id);
  if (log == nullptr) throw UnknownChannelError(fmt::format("no channel {}", channel_id));

  std::shared_lock reader(log->mutex);
  std::vector<TelemetryEntry> out;
  for (const auto& entry : log->entries) {
    if (entry.created_at >= start && entry.created_at <= end) out.push_back(entry);
  }
  if (out.size() > limit) out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(limit));
  return out;
}

std::vector<TelemetryEntry> TelemetryStore::entries(std::int64_t channel_id) const {
  std::shared_lock registry(registry_mutex_);
  const ChannelLog* log = find_by_id(channel_id);
  if (log == nullptr) throw UnknownChannelError(fmt::format("no channel {}", channel_id));
  std::shared_lock reader(log->mutex);
  return log->entries;
}

std::optional<Channel> TelemetryStore::channel(std::int64_t channel_id) const {
  std::shared_lock registry(registry_mutex_);
  const ChannelLog* log = find_by_id(channel_id);
  if (log == nullptr) return std::nullopt;
  return log->meta;
}

std::vector<Channel> TelemetryStore::channels() const {
  std::shared_lock registry(registry_mutex_);
  std::vector<Channel> out;
  for (const auto& [id, log] : channels_) out.push_back(log->meta);
  return out;
}

}  // namespace iotnode::telemetry
