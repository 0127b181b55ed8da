#include "iotnode/gateway.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "iotnode/telemetry_http.hpp"

namespace iotnode::gateway {
namespace {

constexpr std::string_view kAppPrefix = "/app";
constexpr std::chrono::milliseconds kRealClockPoll{200};
constexpr std::chrono::milliseconds kFakeClockRetry{100};

bool starts_with_http(std::string_view url) { return url.rfind("http://", 0) == 0; }

std::string_view target_of(std::string_view raw_request) {
  const auto line = control::request_line_of(raw_request).value_or(raw_request);
  const std::size_t first = line.find(' ');
  if (first == std::string_view::npos) return {};
  const std::size_t second = line.find(' ', first + 1);
  return line.substr(first + 1, second == std::string_view::npos ? std::string_view::npos
                                                                  : second - first - 1);
}

bool is_app_target(std::string_view target) {
  if (target.rfind(kAppPrefix, 0) != 0) return false;
  return target.size() == kAppPrefix.size() || target[kAppPrefix.size()] == '/' ||
         target[kAppPrefix.size()] == '?';
}

std::string_view content_type_for(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  return "application/octet-stream";
}

std::string plain_reply(int status, std::string_view text) {
  return control::render_http({status, "text/plain", std::string(text)});
}

bool ends_with_ok(std::string_view out) {
  constexpr std::string_view kOk = "OK\r\n";
  return out.size() >= kOk.size() && out.substr(out.size() - kOk.size()) == kOk;
}

}  // namespace

void validate(const GatewayConfig& config) {
  if (config.sample_interval < Seconds(1)) {
    throw ConfigError(fmt::format("sample interval must be at least 1 s, got {} s",
                                  config.sample_interval.count()));
  }
  if (!telemetry::is_valid_write_key(config.api_key)) {
    throw ConfigError("api key must be 16 characters from [A-Z0-9]");
  }
  if (!starts_with_http(config.telemetry_base_url)) {
    throw ConfigError(
        fmt::format("telemetry url '{}' must start with http://", config.telemetry_base_url));
  }
  if (config.listen.host.empty()) throw ConfigError("listen address has no host");
  if (config.device_id.empty()) throw ConfigError("device id is empty");
}

device::Scenario load_scenario(const std::filesystem::path& path) {
  try {
    return device::load_scenario_file(path);
  } catch (const device::ScenarioError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

// ---------------------------------------------------------------------------

struct HttpTelemetryClient::Impl {
  std::mutex mutex;
  httplib::Client client;
  std::string api_key;

  explicit Impl(const std::string& base_url) : client(base_url) {}
};

HttpTelemetryClient::HttpTelemetryClient(std::string base_url, std::string api_key,
                                         std::chrono::milliseconds timeout) {
  while (!base_url.empty() && base_url.back() == '/') base_url.pop_back();
  if (!starts_with_http(base_url)) {
    throw ConfigError(fmt::format("telemetry url '{}' must start with http://", base_url));
  }
  impl_ = std::make_unique<Impl>(base_url);
  if (!impl_->client.is_valid()) {
    throw ConfigError(fmt::format("telemetry url '{}' is not valid", base_url));
  }
  impl_->api_key = std::move(api_key);
  impl_->client.set_connection_timeout(timeout);
  impl_->client.set_read_timeout(timeout);
  impl_->client.set_write_timeout(timeout);
}

HttpTelemetryClient::~HttpTelemetryClient() = default;

PushResult HttpTelemetryClient::write(const telemetry::FieldMap& fields, Timestamp created_at) {
  httplib::Params params{{"api_key", impl_->api_key}};
  for (int i = 0; i < telemetry::kFieldCount; ++i) {
    if (const auto& v = fields[static_cast<std::size_t>(i)]) {
      params.emplace(fmt::format("field{}", i + 1), std::to_string(*v));
    }
  }
  params.emplace("created_at", format_iso8601(created_at));

  std::lock_guard lock(impl_->mutex);
  const auto res = impl_->client.Get("/update", params, httplib::Headers{});
  if (!res) return {PushStatus::NetworkError, 0, httplib::to_string(res.error())};
  if (res->status != 200) {
    return {PushStatus::NetworkError, 0, fmt::format("HTTP {}", res->status)};
  }

  std::int64_t id = 0;
  const auto& body = res->body;
  const auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), id);
  if (ec != std::errc{} || ptr != body.data() + body.size()) {
    return {PushStatus::Rejected, 0, fmt::format("unexpected body '{}'", body)};
  }
  if (id > 0) return {PushStatus::Accepted, id, {}};

  const std::string reason = res->get_header_value(std::string(telemetry::kRejectHeader));
  if (reason == "auth") return {PushStatus::AuthRejected, 0, reason};
  if (reason == "rate-limited") return {PushStatus::RateLimited, 0, reason};
  return {PushStatus::Rejected, 0, reason.empty() ? "rejected" : reason};
}

PushResult StoreTelemetryClient::write(const telemetry::FieldMap& fields, Timestamp created_at) {
  const auto result = store_.write_update(api_key_, fields, created_at);
  switch (result.status) {
    case telemetry::WriteStatus::Accepted: return {PushStatus::Accepted, result.entry_id, {}};
    case telemetry::WriteStatus::AuthError: return {PushStatus::AuthRejected, 0, "auth"};
    case telemetry::WriteStatus::RateLimited: return {PushStatus::RateLimited, 0, "rate-limited"};
    case telemetry::WriteStatus::NoFields: return {PushStatus::Rejected, 0, "no-fields"};
  }
  return {PushStatus::Rejected, 0, "unknown status"};
}

// ---------------------------------------------------------------------------

std::optional<device::SensorReading> read_sensor(const device::Scenario& scenario, Timestamp at,
                                                 const LineFault& fault) {
  try {
    const auto truth = device::sample_environment(scenario, at);
    auto pulses = dht11::frame_to_pulses(dht11::encode_frame(truth));
    if (fault) fault(pulses);
    const auto frame = dht11::pulses_to_frame(pulses);
    const auto bytes = frame.bytes();
    return dht11::decode_frame(bytes, at);
  } catch (const dht11::CodecError& e) {
    spdlog::warn("DHT11 read at {} dropped: {}", format_iso8601(at), e.what());
  } catch (const device::DeviceError& e) {
    spdlog::warn("DHT11 read at {} dropped: {}", format_iso8601(at), e.what());
  }
  return std::nullopt;
}

CycleResult push_cycle(device::SerialDevice& device, const device::Scenario& scenario,
                       TelemetryClient& client, Timestamp now, const LineFault& fault) {
  if (!device::tick(device.snapshot(), now).sample_due) return CycleResult::NotDue;

  const auto reading = read_sensor(scenario, now, fault);
  if (!reading) return CycleResult::Dropped;

  telemetry::FieldMap fields{};
  fields[0] = reading->temperature_c;
  fields[1] = reading->humidity_pct;
  const PushResult pushed = client.write(fields, now);

  switch (pushed.status) {
    case PushStatus::Accepted:
      device.apply([&](device::DeviceState& state) {
        state.last_sample_at = now;
        state.last_reading = reading;
      });
      return CycleResult::Pushed;
    case PushStatus::AuthRejected:
      throw ConfigError("telemetry service rejected the api key");
    case PushStatus::RateLimited:
    case PushStatus::Rejected:
    case PushStatus::NetworkError:
      spdlog::warn("telemetry push at {} failed: {}", format_iso8601(now), pushed.detail);
      return CycleResult::Failed;
  }
  return CycleResult::Failed;
}

std::vector<telemetry::TelemetryEntry> replay(const device::Scenario& scenario) {
  telemetry::StoreOptions options;
  options.rate_limit = Seconds(0);
  options.durable = false;
  telemetry::TelemetryStore store(options);
  const auto channel =
      store.create_channel("replay", std::string(telemetry::kDemoWriteKey), scenario.start());
  StoreTelemetryClient client(store, channel.write_key);
  device::SerialDevice node(device::make_device("replay", Seconds(1)));

  for (const auto& point : scenario.points()) {
    if (push_cycle(node, scenario, client, point.at) != CycleResult::Pushed) {
      throw std::runtime_error(
          fmt::format("replay could not push the point at {}", format_iso8601(point.at)));
    }
  }
  return store.entries(channel.channel_id);
}

// ---------------------------------------------------------------------------

ModemBridge::ModemBridge(Firmware firmware, at::LinkConfig link)
    : firmware_(std::move(firmware)), modem_(std::move(link)) {}

std::string ModemBridge::command(const at::AtCommand& cmd) {
  const std::string line = at::serialize(cmd);
  modem_.write(line);
  std::string out = modem_.read();
  log_.push_back("> " + line.substr(0, line.size() - at::kCrLf.size()));
  std::istringstream lines(out);
  for (std::string l; std::getline(lines, l);) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
    log_.push_back("< " + l);
  }
  return out;
}

void ModemBridge::bring_up(std::string_view ssid, std::string_view password,
                           std::uint16_t port) {
  std::lock_guard lock(mutex_);
  log_.clear();
  modem_.reset(at::BootPins{true, false});
  const std::string banner = modem_.read();
  if (banner.find("ready") == std::string::npos) {
    throw ConfigError("wifi module did not boot");
  }

  using at::Verb;
  const std::vector<at::AtCommand> sequence{
      {Verb::At, {}},
      {Verb::Cwmode, {"1"}},
      {Verb::Cwjap, {std::string(ssid), std::string(password)}},
      {Verb::Cifsr, {}},
      {Verb::Cipmux, {"1"}},
      {Verb::Cipserver, {"1", std::to_string(port)}},
  };
  for (const auto& cmd : sequence) {
    const std::string out = command(cmd);
    if (!ends_with_ok(out)) {
      throw ConfigError(fmt::format("wifi module rejected AT+{}: {}", at::verb_name(cmd.verb),
                                    out.empty() ? "no response" : out));
    }
  }
  spdlog::info("wifi link up: station {} serving port {}",
               modem_.state().station_ip ? modem_.state().station_ip->to_string() : "?", port);
}

std::string ModemBridge::exchange(std::string_view raw_request) {
  std::lock_guard lock(mutex_);
  const int session = modem_.accept_client();
  modem_.receive(session, raw_request);

  // Host side: skip the CONNECT notice, then take the +IPD frame.
  const std::string uart = modem_.read();
  const std::size_t ipd_at = uart.find("+IPD,");
  std::optional<at::IpdFrame> frame;
  if (ipd_at != std::string::npos) frame = at::parse_ipd(std::string_view(uart).substr(ipd_at));
  if (!frame || frame->session != session) {
    modem_.disconnect(session);
    modem_.read();
    throw std::runtime_error("no +IPD frame for the inbound connection");
  }

  const std::string response = firmware_(frame->payload);

  bool sent = true;
  for (std::size_t off = 0; off < response.size() && sent; off += at::kMaxSendLength) {
    const std::string_view chunk = std::string_view(response).substr(off, at::kMaxSendLength);
    modem_.write(at::serialize(
        {at::Verb::Cipsend, {std::to_string(session), std::to_string(chunk.size())}}));
    if (modem_.read().find('>') == std::string::npos) {
      sent = false;
      break;
    }
    modem_.write(chunk);
    sent = modem_.read().find("SEND OK") != std::string::npos;
  }
  modem_.write(at::serialize({at::Verb::Cipclose, {std::to_string(session)}}));
  modem_.read();

  std::string wire = modem_.take_transmitted(session);
  if (!sent) throw std::runtime_error("wifi module refused CIPSEND");
  return wire;
}

at::LinkState ModemBridge::link_state() const {
  std::lock_guard lock(mutex_);
  return modem_.state();
}

std::vector<std::string> ModemBridge::bring_up_log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

std::string serve_static(const std::filesystem::path& root, std::string_view target) {
  if (const auto q = target.find('?'); q != std::string_view::npos) target = target.substr(0, q);
  if (!is_app_target(target)) return plain_reply(404, "not found");
  std::string_view rel = target.substr(kAppPrefix.size());
  while (!rel.empty() && rel.front() == '/') rel.remove_prefix(1);
  if (rel.find("..") != std::string_view::npos) return plain_reply(400, "bad path");

  std::filesystem::path path = root / std::filesystem::path(std::string(rel));
  std::error_code ec;
  if (rel.empty() || std::filesystem::is_directory(path, ec)) path /= "index.html";
  std::ifstream in(path, std::ios::binary);
  if (!in) return plain_reply(404, "not found");
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return control::render_http({200, std::string(content_type_for(path)), std::move(body)});
}

// ---------------------------------------------------------------------------

Gateway::Gateway(GatewayConfig config, std::unique_ptr<TelemetryClient> client)
    : config_(std::move(config)),
      scenario_((validate(config_), load_scenario(config_.scenario_path))),
      client_(std::move(client)),
      device_(device::make_device(config_.device_id, config_.sample_interval)),
      control_(device_) {
  if (!client_) {
    client_ = std::make_unique<HttpTelemetryClient>(config_.telemetry_base_url, config_.api_key);
  }
}

Gateway::~Gateway() { stop(); }

std::string Gateway::handle(std::string_view raw_request) {
  return control_.handle_raw(raw_request);
}

std::uint16_t Gateway::start() {
  listener_ = std::make_unique<net::TcpListener>([this](std::string_view raw) {
    const std::string_view target = target_of(raw);
    if (is_app_target(target)) {
      if (!config_.app_dir) return plain_reply(404, "dashboard not configured");
      return serve_static(*config_.app_dir, target);
    }
    if (bridge_) return bridge_->exchange(raw);
    return handle(raw);
  });
  const std::uint16_t port = listener_->bind(config_.listen);

  if (config_.transport == Transport::Modem) {
    bridge_ = std::make_unique<ModemBridge>(
        [this](std::string_view request) { return handle(request); });
    bridge_->bring_up(config_.ssid, config_.password, port);
  }
  listener_->start();
  sampler_ = std::jthread([this](std::stop_token stop) { sampler_loop(stop); });
  return port;
}

void Gateway::stop() {
  if (listener_) listener_->stop();
  if (sampler_.joinable()) {
    sampler_.request_stop();
    sampler_.join();
  }
}

void Gateway::record(CycleResult result) {
  std::lock_guard lock(mutex_);
  switch (result) {
    case CycleResult::NotDue: break;
    case CycleResult::Pushed: ++stats_.pushed; break;
    case CycleResult::Dropped: ++stats_.dropped; break;
    case CycleResult::Failed: ++stats_.failed; break;
  }
  if (result != CycleResult::NotDue) ++stats_.cycles;
}

void Gateway::sampler_loop(std::stop_token stop) {
  const auto started = std::chrono::steady_clock::now();
  Timestamp fake_now = scenario_.start();
  std::optional<Timestamp> unsent;  // instant of a failed push awaiting retry

  auto now = [&] {
    if (config_.fake_clock) return fake_now;
    const auto elapsed = std::chrono::duration_cast<Seconds>(std::chrono::steady_clock::now() -
                                                             started);
    return scenario_.start() + elapsed;
  };

  auto run = [&](Timestamp at) {
    try {
      const CycleResult result = push_cycle(device_, scenario_, *client_, at, fault_);
      record(result);
      if (result == CycleResult::Failed) unsent = at;
      if (result == CycleResult::Pushed) unsent.reset();
      return result;
    } catch (const ConfigError& e) {
      spdlog::error("sampler stopped: {}", e.what());
      std::lock_guard lock(mutex_);
      fatal_ = e.what();
      cv_.notify_all();
      return CycleResult::Failed;
    }
  };

  while (!stop.stop_requested() && !fatal_error()) {
    if (config_.fake_clock) {
      if (fake_now > scenario_.end()) {
        {
          std::lock_guard lock(mutex_);
          replayed_ = true;
        }
        cv_.notify_all();
        std::unique_lock lock(mutex_);
        cv_.wait(lock, stop, [] { return false; });
        break;
      }
      // A failed push holds the simulated clock until the service takes it.
      if (run(fake_now) == CycleResult::Failed) {
        std::unique_lock lock(mutex_);
        cv_.wait_for(lock, stop, kFakeClockRetry, [] { return false; });
        continue;
      }
      fake_now += config_.sample_interval;
    } else {
      // Fixed one-cycle backoff after a failed push.
      const auto pause = run(now()) == CycleResult::Failed
                             ? std::chrono::duration_cast<std::chrono::milliseconds>(
                                   config_.sample_interval)
                             : kRealClockPoll;
      std::unique_lock lock(mutex_);
      cv_.wait_for(lock, stop, pause, [] { return false; });
    }
  }

  // Graceful shutdown: one last attempt for a reading that never got through.
  if (unsent && !fatal_error()) {
    spdlog::info("flushing pending telemetry sample from {}", format_iso8601(*unsent));
    run(*unsent);
  }
}

void Gateway::wait(std::stop_token stop) {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, stop, [this] { return fatal_.has_value(); });
}

bool Gateway::wait_until_replayed(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  return cv_.wait_for(lock, timeout, [this] { return replayed_ || fatal_.has_value(); }) &&
         replayed_;
}

std::optional<std::string> Gateway::fatal_error() const {
  std::lock_guard lock(mutex_);
  return fatal_;
}

SamplerStats Gateway::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

std::optional<at::LinkState> Gateway::link_state() const {
  if (!bridge_) return std::nullopt;
  return bridge_->link_state();
}

}  // namespace iotnode::gateway
