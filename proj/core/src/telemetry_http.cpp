#include "iotnode/telemetry_http.hpp"

#include <charconv>
#include <limits>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

namespace iotnode::telemetry {
namespace {

using Json = nlohmann::ordered_json;

std::optional<std::int64_t> to_int64(std::string_view text) {
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return value;
}

Json entry_document(const TelemetryEntry& entry) {
  Json doc;
  doc["created_at"] = format_iso8601(entry.created_at);
  doc["entry_id"] = entry.entry_id;
  for (int i = 0; i < kFieldCount; ++i) {
    if (const auto& v = entry.fields[static_cast<std::size_t>(i)]) {
      doc[fmt::format("field{}", i + 1)] = *v;
    }
  }
  return doc;
}

void set_json(httplib::Response& res, int status, const Json& doc) {
  res.status = status;
  res.set_content(doc.dump(), "application/json");
}

void set_error(httplib::Response& res, int status, std::string_view message) {
  set_json(res, status, Json{{"error", message}});
}

Timestamp param_time(const httplib::Request& req, const char* name, Timestamp fallback) {
  if (!req.has_param(name)) return fallback;
  return parse_iso8601(req.get_param_value(name));
}

}  // namespace

Json channel_document(const Channel& channel, std::span<const TelemetryEntry> entries) {
  Json doc;
  doc["id"] = channel.channel_id;
  doc["name"] = channel.name;
  doc["created_at"] = format_iso8601(channel.created_at);
  for (int i = 0; i < kFieldCount; ++i) {
    if (const auto& label = channel.field_names[static_cast<std::size_t>(i)]) {
      doc[fmt::format("field{}", i + 1)] = *label;
    }
  }
  doc["last_entry_id"] = entries.empty() ? Json(nullptr) : Json(entries.back().entry_id);
  return doc;
}

Json feed_document(const Channel& channel, std::span<const TelemetryEntry> feed,
                   std::int64_t last_entry_id) {
  Json doc;
  Json meta = channel_document(channel, {});
  meta["last_entry_id"] = last_entry_id > 0 ? Json(last_entry_id) : Json(nullptr);
  doc["channel"] = std::move(meta);
  doc["feeds"] = Json::array();
  for (const auto& entry : feed) doc["feeds"].push_back(entry_document(entry));
  return doc;
}

Json summary_document(const Channel& channel, int field,
                      std::span<const TelemetryEntry> entries) {
  const AggregateSummary s = summarize(entries, field);
  Json doc;
  doc["channel_id"] = channel.channel_id;
  doc["field"] = fmt::format("field{}", field);
  const auto& label = channel.field_names[static_cast<std::size_t>(field - 1)];
  doc["label"] = label ? Json(*label) : Json(nullptr);
  doc["mean"] = s.mean.value();
  doc["mean_rounded"] = s.mean_rounded;
  doc["min"] = s.min;
  doc["max"] = s.max;
  doc["count"] = s.count;
  doc["window"] = {{"start", format_iso8601(s.window_start)},
                   {"end", format_iso8601(s.window_end)}};
  Json daily = Json::array();
  for (const auto& d : daily_aggregate(entries, field)) {
    daily.push_back({{"date", format_date(d.date)},
                     {"mean", d.mean.value()},
                     {"mean_rounded", d.mean_rounded()},
                     {"min", d.min},
                     {"max", d.max},
                     {"count", d.count}});
  }
  doc["daily"] = std::move(daily);
  return doc;
}

struct TelemetryServer::Impl {
  TelemetryStore& store;
  httplib::Server server;
  std::thread thread;

  explicit Impl(TelemetryStore& s) : store(s) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Get("/update", [this](const auto& req, auto& res) { update(req, res); });
    server.Get(R"(/channels/(\d+)/feeds(?:\.json)?)",
               [this](const auto& req, auto& res) { feeds(req, res); });
    server.Get(R"(/channels/(\d+)/summary(?:\.json)?)",
               [this](const auto& req, auto& res) { summary(req, res); });
  }

  void update(const httplib::Request& req, httplib::Response& res) {
    auto reject = [&](std::string_view reason) {
      res.status = 200;
      res.set_header(std::string(kRejectHeader), std::string(reason));
      res.set_content("0", "text/plain");
    };

    std::string key = req.has_param("api_key") ? req.get_param_value("api_key")
                                               : req.get_param_value("key");
    FieldMap fields{};
    for (int i = 0; i < kFieldCount; ++i) {
      const std::string name = fmt::format("field{}", i + 1);
      if (!req.has_param(name.c_str())) continue;
      const auto value = to_int64(req.get_param_value(name.c_str()));
      if (!value) return reject("invalid");
      fields[static_cast<std::size_t>(i)] = *value;
    }
    std::optional<Timestamp> created_at;
    if (req.has_param("created_at")) {
      try {
        created_at = parse_iso8601(req.get_param_value("created_at"));
      } catch (const std::invalid_argument&) {
        return reject("invalid");
      }
    }

    const WriteResult result = store.write_update(key, fields, created_at);
    switch (result.status) {
      case WriteStatus::Accepted:
        res.set_content(std::to_string(result.entry_id), "text/plain");
        return;
      case WriteStatus::AuthError: return reject("auth");
      case WriteStatus::RateLimited: return reject("rate-limited");
      case WriteStatus::NoFields: return reject("no-fields");
    }
  }

  std::optional<Channel> channel_of(const httplib::Request& req, httplib::Response& res) {
    const auto id = to_int64(req.matches[1].str());
    auto channel = id ? store.channel(*id) : std::nullopt;
    if (!channel) set_error(res, 404, "unknown channel");
    return channel;
  }

  void feeds(const httplib::Request& req, httplib::Response& res) {
    const auto channel = channel_of(req, res);
    if (!channel) return;
    try {
      const Timestamp start = param_time(req, "start", Timestamp::min());
      const Timestamp end = param_time(req, "end", Timestamp::max());
      std::size_t results = kDefaultResults;
      if (req.has_param("results")) {
        const auto n = to_int64(req.get_param_value("results"));
        if (!n || *n <= 0) return set_error(res, 400, "results must be a positive integer");
        results = std::min<std::size_t>(static_cast<std::size_t>(*n), kMaxResults);
      }
      const auto all = store.entries(channel->channel_id);
      const auto feed = store.read_feed(channel->channel_id, start, end, results);
      set_json(res, 200, feed_document(*channel, feed, all.empty() ? 0 : all.back().entry_id));
    } catch (const std::invalid_argument& e) {
      set_error(res, 400, e.what());
    }
  }

  void summary(const httplib::Request& req, httplib::Response& res) {
    const auto channel = channel_of(req, res);
    if (!channel) return;
    const auto field = parse_field_id(req.has_param("field") ? req.get_param_value("field")
                                                             : std::string("field1"));
    if (!field) return set_error(res, 400, "field must be field1..field8");
    try {
      const Timestamp start = param_time(req, "start", Timestamp::min());
      const Timestamp end = param_time(req, "end", Timestamp::max());
      const auto window = store.read_feed(channel->channel_id, start, end, std::numeric_limits<std::size_t>::max());
      set_json(res, 200, summary_document(*channel, *field, window));
    } catch (const EmptyWindowError& e) {
      set_error(res, 404, e.what());
    } catch (const std::invalid_argument& e) {
      set_error(res, 400, e.what());
    }
  }
};

TelemetryServer::TelemetryServer(TelemetryStore& store) : impl_(std::make_unique<Impl>(store)) {}

TelemetryServer::~TelemetryServer() { stop(); }

std::uint16_t TelemetryServer::bind(const net::HostPort& address) {
  const std::string host = address.host.empty() ? "0.0.0.0" : address.host;
  // httplib's default adds SO_REUSEPORT, which would let a second server
  // share a busy port instead of failing.
  impl_->server.set_socket_options([](socket_t sock) {
    const int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  if (address.port == 0) {
    const int port = impl_->server.bind_to_any_port(host);
    if (port <= 0) throw net::BindError(fmt::format("cannot listen on {}:0", host));
    return static_cast<std::uint16_t>(port);
  }
  if (!impl_->server.bind_to_port(host, address.port)) {
    throw net::BindError(fmt::format("cannot listen on {}:{}", host, address.port));
  }
  return address.port;
}

void TelemetryServer::listen() { impl_->server.listen_after_bind(); }

void TelemetryServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void TelemetryServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace iotnode::telemetry
