// Acceptance suite: one PASS/FAIL line per primary criterion.
//
//   acceptance                      run every criterion
//   acceptance --write-golden PATH  regenerate the AT golden log

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "iotnode/control_plane.hpp"
#include "iotnode/dht11.hpp"
#include "iotnode/gateway.hpp"
#include "iotnode/serial_modem.hpp"
#include "iotnode/telemetry.hpp"
#include "iotnode/telemetry_http.hpp"
#include "test_support.hpp"

using namespace iotnode;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kKey{telemetry::kDemoWriteKey};
const std::filesystem::path kFixture = "fixtures/july2016.csv";
const std::filesystem::path kGolden = "tests/data/at_session.golden";

struct Verdict {
  bool pass = false;
  std::string detail;
};

double elapsed_s(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

// Independent CSV reader for the fixture, so checks never route through the
// code under test.
struct Row {
  std::string ts;
  long temp = 0;
  long rh = 0;
};

std::vector<Row> read_fixture_rows() {
  std::ifstream in(kFixture);
  std::vector<Row> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    Row r;
    std::string t, h;
    std::getline(ss, r.ts, ',');
    std::getline(ss, t, ',');
    std::getline(ss, h, ',');
    r.temp = std::stol(t);
    r.rh = std::stol(h);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------

Verdict aggregate_replication() {
  const auto start = Clock::now();
  const std::string cmd =
      std::string(IOTNODE_CLI) + " replay --scenario " + kFixture.string() + " --summary";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {false, "cannot run the CLI"};
  std::string out;
  char buf[1024];
  while (const std::size_t n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  const double secs = elapsed_s(start);

  std::smatch m;
  const std::regex temp_re("temperature mean_rounded=(-?\\d+) min=(-?\\d+) max=(-?\\d+)");
  const std::regex rh_re("humidity mean_rounded=(-?\\d+)");
  if (status != 0 || !std::regex_search(out, m, temp_re)) return {false, "unexpected output"};
  const int mean = std::stoi(m[1]), lo = std::stoi(m[2]), hi = std::stoi(m[3]);
  if (!std::regex_search(out, m, rh_re)) return {false, "no humidity line"};
  const int rh = std::stoi(m[1]);

  std::map<std::string, int> daily;
  const std::regex day_re("day (\\d{4}-\\d{2}-\\d{2}) temperature mean_rounded=(-?\\d+)");
  for (auto it = std::sregex_iterator(out.begin(), out.end(), day_re); it != std::sregex_iterator();
       ++it) {
    daily[(*it)[1]] = std::stoi((*it)[2]);
  }
  bool stable = true;
  for (const char* d : {"2016-07-09", "2016-07-10", "2016-07-11", "2016-07-12", "2016-07-13"}) {
    stable = stable && daily.count(d) && daily[d] == 14;
  }

  // Reference aggregates for 8-14 July 2016.
  const bool match = mean == 15 && lo == 7 && hi == 19 && rh == 82 && stable;
  return {match && secs < 1.0,
              "temp mean " + std::to_string(mean) + " min " + std::to_string(lo) + " max " +
              std::to_string(hi) + ", rh mean " + std::to_string(rh) + ", days 9-13 at 14: " +
              (stable ? "yes" : "no") + ", " + std::to_string(secs) + " s"};
}

Verdict end_to_end_pipeline() {
  const auto start = Clock::now();
  telemetry::StoreOptions opts;
  opts.rate_limit = telemetry::kDefaultRateLimit;
  testing::TempDir dir("e2e");
  telemetry::TelemetryStore store(dir.path(), opts);
  store.create_channel("iotnode", kKey);
  telemetry::TelemetryServer server(store);
  const auto tport = server.bind({"127.0.0.1", 0});
  server.start();

  gateway::GatewayConfig cfg;
  cfg.scenario_path = kFixture;
  cfg.listen = {"127.0.0.1", 0};
  cfg.telemetry_base_url = "http://127.0.0.1:" + std::to_string(tport);
  cfg.api_key = kKey;
  cfg.sample_interval = 9900s;
  cfg.fake_clock = true;
  gateway::Gateway node(cfg, nullptr);
  node.start();
  const bool replayed = node.wait_until_replayed(10s);
  node.stop();
  server.stop();

  const auto feed = store.entries(1);
  const auto rows = read_fixture_rows();
  bool same = feed.size() == 61 && rows.size() == 61;
  for (std::size_t i = 0; same && i < feed.size(); ++i) {
    same = feed[i].entry_id == static_cast<std::int64_t>(i + 1) &&
           format_iso8601(feed[i].created_at) == rows[i].ts && feed[i].fields[0] == rows[i].temp &&
           feed[i].fields[1] == rows[i].rh;
  }
  const double secs = elapsed_s(start);
  return {replayed && same && secs < 10.0,
          std::to_string(feed.size()) + " entries, ids and values " +
              (same ? "match" : "differ from") + " the scenario file, " + std::to_string(secs) +
              " s"};
}

Verdict dht11_codec() {
  const auto start = Clock::now();
  std::size_t failures = 0, grid = 0;
  for (int t = 0; t <= 50; ++t) {
    for (int h = 20; h <= 90; ++h) {
      ++grid;
      const device::SensorReading r{t, h, {}};
      const auto frame = dht11::encode_frame(r);
      const auto bytes = frame.bytes();
      const bool ok = bytes[4] == (h + t) % 256 && dht11::decode_frame(bytes) == r &&
                      dht11::pulses_to_frame(dht11::frame_to_pulses(frame)) == frame;
      failures += ok ? 0 : 1;
    }
  }
  std::mt19937 rng(20160708);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int trial = 0; trial < 10000; ++trial) {
    std::array<std::uint8_t, 5> b{};
    for (auto& x : b) x = static_cast<std::uint8_t>(byte(rng));
    if (trial % 2 == 0) b[4] = static_cast<std::uint8_t>((b[0] + b[1] + b[2] + b[3]) % 256);
    const bool sound = b[4] == (b[0] + b[1] + b[2] + b[3]) % 256;
    bool accepted = true;
    try {
      dht11::parse_frame(b);
    } catch (const dht11::ChecksumError&) {
      accepted = false;
    }
    failures += accepted == sound ? 0 : 1;
  }
  const double secs = elapsed_s(start);
  return {failures == 0 && grid == 51 * 71 && secs < 5.0,
          std::to_string(grid) + " grid readings + 10000 random frames, " +
              std::to_string(failures) + " failures, " + std::to_string(secs) + " s"};
}

// Boot, join, serve and one client exchange, recorded from the host side.
std::string at_session_log() {
  std::ostringstream log;
  at::SerialModem modem;
  device::SerialDevice dev(device::make_device("iotnode-1"));
  control::ControlPlane cp(dev);
  auto from_module = [&] { log << modem.read(); };
  auto to_module = [&](std::string_view bytes) {
    log << bytes;
    modem.write(bytes);
    from_module();
  };

  modem.reset({true, false});
  from_module();
  to_module("AT\r\n");
  to_module("AT+CWMODE=1\r\n");
  to_module("AT+CWJAP=\"iotnode\",\"iotnode-pass\"\r\n");
  to_module("AT+CIFSR\r\n");
  to_module("AT+CIPMUX=1\r\n");
  to_module("AT+CIPSERVER=1,80\r\n");

  const int id = modem.accept_client();
  modem.receive(id, "GET /analog/5/128 HTTP/1.1\r\nHost: 192.168.2.1\r\n\r\n");
  const std::string uart = modem.read();
  log << uart;
  const auto frame = at::parse_ipd(std::string_view(uart).substr(uart.find("+IPD")));
  const std::string reply = cp.handle_raw(frame->payload);
  to_module("AT+CIPSEND=" + std::to_string(id) + "," + std::to_string(reply.size()) + "\r\n");
  to_module(reply);
  to_module("AT+CIPCLOSE=" + std::to_string(id) + "\r\n");
  return log.str();
}

Verdict at_state_machine() {
  const auto start = Clock::now();
  const std::string first = at_session_log();
  const std::string second = at_session_log();
  const std::string golden = testing::read_file(kGolden);
  const bool deterministic = first == second && first == golden && !golden.empty();

  // Random command walks: SERVER_LISTENING must never be reached unless a
  // CWJAP succeeded since the last reset.
  at::LinkConfig cfg;
  cfg.networks["iotnode"] = "iotnode-pass";
  const std::vector<at::AtCommand> menu{
      {at::Verb::At, {}},
      {at::Verb::Rst, {}},
      {at::Verb::Cwmode, {"1"}},
      {at::Verb::Cwmode, {"2"}},
      {at::Verb::Cwmode, {"3"}},
      {at::Verb::Cwjap, {"iotnode", "iotnode-pass"}},
      {at::Verb::Cwjap, {"iotnode", "guess"}},
      {at::Verb::Cwjap, {"other", "iotnode-pass"}},
      {at::Verb::Cifsr, {}},
      {at::Verb::Cipmux, {"1"}},
      {at::Verb::Cipmux, {"0"}},
      {at::Verb::Cipserver, {"1"}},
      {at::Verb::Cipserver, {"1", "8080"}},
      {at::Verb::Cipserver, {"0"}},
      {at::Verb::Cipsend, {"0", "4"}},
      {at::Verb::Cipclose, {"0"}},
  };
  std::mt19937_64 rng(100000);
  std::uniform_int_distribution<std::size_t> pick(0, menu.size() + 2);
  std::uniform_int_distribution<int> length(1, 40);
  std::size_t violations = 0, reached = 0;
  constexpr int kWalks = 100000;
  for (int walk = 0; walk < kWalks; ++walk) {
    at::LinkState s;
    bool joined = false;
    for (int step = length(rng); step > 0; --step) {
      const std::size_t k = pick(rng);
      if (k < menu.size()) {
        const auto r = at::at_step(s, menu[k], cfg);
        const bool ok = !r.lines.empty() && r.lines.back() != "ERROR";
        if (menu[k].verb == at::Verb::Rst && ok) joined = false;
        if (menu[k].verb == at::Verb::Cwjap && ok) joined = true;
        s = r.state;
      } else if (k == menu.size()) {
        s = at::hard_reset(s, {true, rng() % 4 == 0});
        joined = false;
      } else if (k == menu.size() + 1) {
        if (s.mode == at::Mode::ServerListening && s.open_session_count() < at::kMaxSessions) {
          s = at::open_session(s).state;
        }
      } else {
        s = at::deliver_payload(s, "ping").state;
      }
      if (s.mode == at::Mode::ServerListening) {
        ++reached;
        if (!joined) ++violations;
      }
    }
  }
  const double secs = elapsed_s(start);
  return {deterministic && violations == 0 && reached > 0 && secs < 30.0,
          std::string("golden log ") + (deterministic ? "identical" : "differs") + ", " +
              std::to_string(kWalks) + " walks, " + std::to_string(reached) +
              " listening states, " + std::to_string(violations) + " without CWJAP, " +
              std::to_string(secs) + " s"};
}

// ---------------------------------------------------------------------------

struct Observed {
  std::string tag;
  std::string request;
  int status = 0;
  std::optional<long> value;
  Clock::time_point sent, received;
};

// Replays the journal against a plain register model and checks every
// client observation against it.
struct RegisterModel {
  std::map<int, long> digital;
  std::map<int, long> pwm;

  RegisterModel() {
    for (int p = 0; p < device::kPinCount; ++p) digital[p] = 0;
    for (int p : device::kPwmPins) pwm[p] = 0;
  }

  // Expected return_value for a request path, applying writes.
  std::optional<long> apply(const std::string& path) {
    int a = -1, b = -1;
    if (std::sscanf(path.c_str(), "/digital/%d/%d", &a, &b) == 2) return digital[a] = b;
    if (std::sscanf(path.c_str(), "/analog/%d/%d", &a, &b) == 2) return pwm[a] = b;
    if (std::sscanf(path.c_str(), "/digital/%d", &a) == 1) return digital[a];
    return std::nullopt;
  }
};

std::string path_of(const std::string& request_line) {
  const auto a = request_line.find(' ');
  const auto b = request_line.find(' ', a + 1);
  std::string target = request_line.substr(a + 1, b - a - 1);
  return target.substr(0, target.find('?'));
}

std::string tag_of(const std::string& request_line) {
  const auto q = request_line.find("?req=");
  return request_line.substr(q + 5, request_line.find(' ', q) - q - 5);
}

Verdict linearizability(gateway::Transport transport, const char* label) {
  gateway::GatewayConfig cfg;
  cfg.scenario_path = kFixture;
  cfg.listen = {"127.0.0.1", 0};
  cfg.telemetry_base_url = "http://127.0.0.1:1";
  cfg.api_key = kKey;
  cfg.sample_interval = 3600s;
  cfg.transport = transport;

  // Telemetry is irrelevant here; a client that accepts everything keeps
  // the sampler quiet.
  struct Sink final : gateway::TelemetryClient {
    gateway::PushResult write(const telemetry::FieldMap&, Timestamp) override {
      return {gateway::PushStatus::Accepted, 1, {}};
    }
  };
  gateway::Gateway node(cfg, std::make_unique<Sink>());
  node.control_plane().enable_journal(true);
  const auto port = node.start();

  constexpr int kClients = 50;
  constexpr int kRequests = 40;
  std::vector<std::vector<Observed>> seen(kClients);
  std::vector<std::thread> clients;
  std::atomic<int> ready{0};
  for (int c = 0; c < kClients; ++c) {
    clients.emplace_back([&, c] {
      std::mt19937 rng(static_cast<unsigned>(c) * 7919u + 1);
      // A few hot pins so clients genuinely contend.
      const std::array<int, 3> digital_pins{2, 5, 11};
      ready.fetch_add(1);
      while (ready.load() < kClients) std::this_thread::yield();
      for (int i = 0; i < kRequests; ++i) {
        std::string path;
        switch (rng() % 4) {
          case 0: path = "/digital/" + std::to_string(digital_pins[rng() % 3]) + "/" + std::to_string(rng() % 2); break;
          case 1: path = "/analog/" + std::to_string(device::kPwmPins[rng() % 4]) + "/" + std::to_string(rng() % 256); break;
          case 2: path = "/digital/" + std::to_string(digital_pins[rng() % 3]); break;
          default: path = "/"; break;
        }
        Observed o;
        o.tag = std::to_string(c) + "-" + std::to_string(i);
        o.request = path;
        o.sent = Clock::now();
        const auto r = testing::http_get(port, path + "?req=" + o.tag);
        o.received = Clock::now();
        o.status = r.status;
        if (r.status == 200) {
          const auto doc = nlohmann::json::parse(r.body);
          if (doc.contains("return_value")) o.value = doc["return_value"].get<long>();
        }
        seen[c].push_back(std::move(o));
      }
    });
  }
  for (auto& t : clients) t.join();
  const auto journal = node.control_plane().journal();
  node.stop();

  // 1. Serialized replay oracle.
  RegisterModel model;
  std::map<std::string, std::pair<std::uint64_t, std::optional<long>>> expected;
  for (const auto& e : journal) {
    expected[tag_of(e.request_line)] = {e.seq, model.apply(path_of(e.request_line))};
  }

  std::size_t mismatches = 0, order_violations = 0, failed = 0;
  std::vector<double> latencies_ms;
  std::vector<std::pair<Clock::time_point, std::uint64_t>> by_send, by_recv;
  for (const auto& per_client : seen) {
    for (const auto& o : per_client) {
      latencies_ms.push_back(std::chrono::duration<double, std::milli>(o.received - o.sent).count());
      if (o.status != 200) ++failed;
      const auto it = expected.find(o.tag);
      if (it == expected.end()) {
        ++mismatches;
        continue;
      }
      if (it->second.second != o.value) ++mismatches;
      by_send.push_back({o.sent, it->second.first});
      by_recv.push_back({o.received, it->second.first});
    }
  }

  // 2. Real-time order: whenever a response arrived before another request
  //    was sent, the first must precede the second in the linearization.
  std::sort(by_send.begin(), by_send.end());
  std::sort(by_recv.begin(), by_recv.end());
  std::uint64_t max_seq_done = 0;
  std::size_t j = 0;
  for (const auto& [sent, seq] : by_send) {
    while (j < by_recv.size() && by_recv[j].first < sent) {
      max_seq_done = std::max(max_seq_done, by_recv[j].second);
      ++j;
    }
    if (seq < max_seq_done) ++order_violations;
  }

  std::sort(latencies_ms.begin(), latencies_ms.end());
  const double p99 = latencies_ms[static_cast<std::size_t>(0.99 * (latencies_ms.size() - 1))];
  const bool ok = journal.size() == static_cast<std::size_t>(kClients * kRequests) &&
                  mismatches == 0 && order_violations == 0 && failed == 0 && p99 < 50.0;
  char p99_text[32];
  std::snprintf(p99_text, sizeof p99_text, "%.2f", p99);
  return {ok, std::string(label) + ": " + std::to_string(journal.size()) + " requests from " +
                  std::to_string(kClients) + " clients, " + std::to_string(mismatches) +
                  " oracle mismatches, " + std::to_string(order_violations) +
                  " real-time violations, p99 " + p99_text + " ms"};
}

Verdict control_plane_linearizability() {
  const auto modem = linearizability(gateway::Transport::Modem, "modem");
  const auto direct = linearizability(gateway::Transport::Direct, "direct");
  return {modem.pass && direct.pass, modem.detail + "; " + direct.detail};
}

// ---------------------------------------------------------------------------

Verdict ledger_integrity() {
  testing::TempDir dir("ledger");
  telemetry::StoreOptions opts;
  opts.rate_limit = 0s;
  std::vector<std::int64_t> ids;
  std::vector<telemetry::TelemetryEntry> before;
  std::vector<telemetry::Channel> channels;
  bool rejected_ok = false;
  std::uint64_t hash_before = 0, hash_after = 0;
  {
    telemetry::TelemetryStore store(dir.path(), opts);
    store.create_channel("iotnode", kKey);
    telemetry::TelemetryServer server(store);
    const auto port = server.bind({"127.0.0.1", 0});
    server.start();

    std::mutex mutex;
    std::vector<std::thread> writers;
    std::atomic<int> ready{0};
    for (int w = 0; w < 50; ++w) {
      writers.emplace_back([&, w] {
        ready.fetch_add(1);
        while (ready.load() < 50) std::this_thread::yield();
        const auto r = testing::http_get(
            port, "/update?api_key=" + kKey + "&field1=" + std::to_string(w % 51) + "&field2=" +
                      std::to_string(20 + w));
        std::lock_guard lock(mutex);
        ids.push_back(r.status == 200 ? std::stoll(r.body) : -1);
      });
    }
    for (auto& t : writers) t.join();

    hash_before = testing::hash_tree(dir.path());
    store.set_rate_limit(15s);
    const auto last = store.entries(1).back().created_at;
    const auto bad_key = testing::http_get(port, "/update?api_key=XXXXXXXXXXXXXXXX&field1=15");
    const auto too_soon = testing::http_get(
        port, "/update?api_key=" + kKey + "&field1=15&created_at=" + format_iso8601(last + 5s));
    rejected_ok = bad_key.body == "0" && too_soon.body == "0";
    hash_after = testing::hash_tree(dir.path());
    server.stop();
    before = store.entries(1);
    channels = store.channels();
  }

  std::sort(ids.begin(), ids.end());
  bool exact = ids.size() == 50;
  for (std::size_t i = 0; exact && i < ids.size(); ++i) exact = ids[i] == static_cast<std::int64_t>(i + 1);
  bool stored = before.size() == 50;
  for (std::size_t i = 0; stored && i < before.size(); ++i) {
    stored = before[i].entry_id == static_cast<std::int64_t>(i + 1) &&
             (i == 0 || before[i].created_at >= before[i - 1].created_at);
  }

  telemetry::TelemetryStore reloaded(dir.path(), opts);
  const bool reload_same = reloaded.entries(1) == before && reloaded.channels() == channels;

  return {exact && stored && rejected_ok && hash_before == hash_after && reload_same,
          std::string("ids 1..50 ") + (exact && stored ? "exact" : "broken") +
              ", rejections " + (rejected_ok ? "returned 0" : "accepted") + ", store hash " +
              (hash_before == hash_after ? "unchanged" : "changed") + ", reload " +
              (reload_same ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc == 3 && std::string(argv[1]) == "--write-golden") {
    std::ofstream(argv[2], std::ios::binary) << at_session_log();
    return 0;
  }
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"aggregate-replication", aggregate_replication},
      {"end-to-end-pipeline", end_to_end_pipeline},
      {"dht11-codec", dht11_codec},
      {"at-state-machine", at_state_machine},
      {"control-plane-linearizability", control_plane_linearizability},
      {"ledger-integrity", ledger_integrity},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
