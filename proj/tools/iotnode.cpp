// iotnode: run the emulated sensor node, the telemetry service, or an
// offline replay of a scenario file.

#include <atomic>
#include <condition_variable>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <pthread.h>
#include <stop_token>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "iotnode/gateway.hpp"
#include "iotnode/telemetry.hpp"
#include "iotnode/telemetry_http.hpp"

namespace {

using namespace iotnode;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitBind = 2;

// Blocks SIGINT/SIGTERM in every thread and turns them into a stop request.
class SignalStop {
 public:
  SignalStop() {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, nullptr);
    waiter_ = std::thread([this] {
      int sig = 0;
      sigwait(&set_, &sig);
      if (!closing_) spdlog::info("received signal {}, shutting down", sig);
      source_.request_stop();
    });
  }
  ~SignalStop() {
    // Wake the waiter if no signal ever arrived.
    closing_ = true;
    if (!source_.stop_requested()) pthread_kill(waiter_.native_handle(), SIGTERM);
    waiter_.join();
  }
  std::stop_token token() const { return source_.get_token(); }

 private:
  sigset_t set_{};
  std::atomic<bool> closing_{false};
  std::stop_source source_;
  std::thread waiter_;
};

net::HostPort parse_listen(const std::string& text) {
  try {
    return net::parse_host_port(text);
  } catch (const std::invalid_argument& e) {
    throw gateway::ConfigError(fmt::format("--listen: {}", e.what()));
  }
}

std::string env_or(const char* name, std::string fallback) {
  const char* value = std::getenv(name);
  return value && *value ? std::string(value) : std::move(fallback);
}

struct ServeArgs {
  std::string scenario;
  std::string listen;
  std::string telemetry_url;
  std::string api_key;
  long interval = device::kDefaultSampleInterval.count();
  bool fake_clock = false;
  std::string transport = "modem";
  std::string device_id = "iotnode-1";
  std::string app_dir;
};

int run_serve(const ServeArgs& args) {
  gateway::GatewayConfig config;
  config.scenario_path = args.scenario;
  config.listen = parse_listen(args.listen);
  config.telemetry_base_url = args.telemetry_url;
  config.api_key = env_or("IOTNODE_API_KEY", args.api_key);
  config.sample_interval = Seconds(args.interval);
  config.fake_clock = args.fake_clock;
  config.transport =
      args.transport == "direct" ? gateway::Transport::Direct : gateway::Transport::Modem;
  config.device_id = args.device_id;
  if (!args.app_dir.empty()) config.app_dir = args.app_dir;

  SignalStop signals;
  gateway::Gateway node(config, nullptr);
  const std::uint16_t port = node.start();
  std::cout << "listening on " << config.listen.host << ':' << port << std::endl;

  node.wait(signals.token());
  node.stop();

  if (const auto fatal = node.fatal_error()) {
    std::cerr << "error: " << *fatal << '\n';
    return kExitConfig;
  }
  const auto stats = node.stats();
  spdlog::info("sampler: {} pushed, {} dropped, {} failed", stats.pushed, stats.dropped,
               stats.failed);
  return kExitOk;
}

struct TelemetryArgs {
  std::string store;
  std::string listen;
  long rate_limit = telemetry::kDefaultRateLimit.count();
  std::string write_key{telemetry::kDemoWriteKey};
};

int run_telemetry(const TelemetryArgs& args) {
  const auto address = parse_listen(args.listen);
  if (!telemetry::is_valid_write_key(args.write_key)) {
    throw gateway::ConfigError("--write-key must be 16 characters from [A-Z0-9]");
  }
  if (args.rate_limit < 0) throw gateway::ConfigError("--rate-limit must be >= 0");

  telemetry::StoreOptions options;
  options.rate_limit = Seconds(args.rate_limit);
  telemetry::TelemetryStore store(std::filesystem::path(args.store), options);
  if (store.channels().empty()) store.create_channel("iotnode", args.write_key);

  SignalStop signals;
  telemetry::TelemetryServer server(store);
  const std::uint16_t port = server.bind(address);
  server.start();
  std::cout << "listening on " << address.host << ':' << port << std::endl;

  std::mutex mutex;
  std::condition_variable_any cv;
  std::unique_lock lock(mutex);
  cv.wait(lock, signals.token(), [] { return false; });
  server.stop();
  return kExitOk;
}

void print_field(std::string_view label, const std::vector<telemetry::TelemetryEntry>& feed,
                 int field) {
  const auto s = telemetry::summarize(feed, field);
  std::cout << fmt::format("{} mean_rounded={} min={} max={} mean={:.3f} count={}\n", label,
                           s.mean_rounded, s.min, s.max, s.mean.value(), s.count);
}

int run_replay(const std::string& scenario_path, bool summary) {
  const auto scenario = gateway::load_scenario(scenario_path);
  const auto feed = gateway::replay(scenario);
  std::cout << fmt::format("points={} first={} last={}\n", feed.size(),
                           format_iso8601(feed.front().created_at),
                           format_iso8601(feed.back().created_at));
  if (!summary) return kExitOk;

  print_field("temperature", feed, 1);
  print_field("humidity", feed, 2);
  for (const auto& day : telemetry::daily_aggregate(feed, 1)) {
    std::cout << fmt::format("day {} temperature mean_rounded={} min={} max={} count={}\n",
                             format_date(day.date), day.mean_rounded(), day.min, day.max,
                             day.count);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  if (const char* level = std::getenv("IOTNODE_LOG")) {
    spdlog::set_level(spdlog::level::from_str(level));
  }

  CLI::App app{"Emulated IoT sensor node, telemetry service and replay tools"};
  app.require_subcommand(1);

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the node: control plane plus sampler");
  serve_cmd->add_option("--scenario", serve.scenario, "Scenario CSV (ts,temp_c,rh_pct)")
      ->required();
  serve_cmd->add_option("--listen", serve.listen, "host:port for control connections")
      ->required();
  serve_cmd->add_option("--telemetry-url", serve.telemetry_url, "http://host:port")->required();
  serve_cmd->add_option("--api-key", serve.api_key, "Channel write key (IOTNODE_API_KEY wins)");
  serve_cmd->add_option("--interval", serve.interval, "Sample interval in seconds")
      ->capture_default_str();
  serve_cmd->add_flag("--fake-clock", serve.fake_clock,
                      "Step a simulated clock through the scenario");
  serve_cmd->add_option("--transport", serve.transport, "modem or direct")
      ->check(CLI::IsMember({"modem", "direct"}))
      ->capture_default_str();
  serve_cmd->add_option("--device-id", serve.device_id)->capture_default_str();
  serve_cmd->add_option("--app-dir", serve.app_dir, "Dashboard assets served under /app");

  TelemetryArgs tele;
  auto* tele_cmd = app.add_subcommand("telemetry", "Telemetry service");
  tele_cmd->require_subcommand(1);
  auto* tele_serve = tele_cmd->add_subcommand("serve", "Serve the ThingSpeak-style API");
  tele_serve->add_option("--store", tele.store, "Store directory")->required();
  tele_serve->add_option("--listen", tele.listen, "host:port")->required();
  tele_serve->add_option("--rate-limit", tele.rate_limit, "Seconds between writes, 0 disables")
      ->capture_default_str();
  tele_serve->add_option("--write-key", tele.write_key, "Key of the bootstrap channel")
      ->capture_default_str();

  std::string replay_scenario;
  bool replay_summary = false;
  auto* replay_cmd = app.add_subcommand("replay", "Push a scenario through an in-memory store");
  replay_cmd->add_option("--scenario", replay_scenario, "Scenario CSV")->required();
  replay_cmd->add_flag("--summary", replay_summary, "Print aggregates");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*serve_cmd) return run_serve(serve);
    if (*tele_serve) return run_telemetry(tele);
    if (*replay_cmd) return run_replay(replay_scenario, replay_summary);
  } catch (const net::BindError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBind;
  } catch (const gateway::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const telemetry::StoreError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
