#include <benchmark/benchmark.h>

#include <string>

#include "iotnode/control_plane.hpp"
#include "iotnode/dht11.hpp"
#include "iotnode/telemetry.hpp"
#include "iotnode/wifi_at.hpp"

using namespace iotnode;

static void BM_Dht11RoundTrip(benchmark::State& state) {
  const device::SensorReading r{15, 82, {}};
  for (auto _ : state) {
    const auto pulses = dht11::frame_to_pulses(dht11::encode_frame(r));
    const auto frame = dht11::pulses_to_frame(pulses);
    benchmark::DoNotOptimize(dht11::decode_frame(frame.bytes()));
  }
}
BENCHMARK(BM_Dht11RoundTrip);

static void BM_ParseAt(benchmark::State& state) {
  const std::string line = "AT+CWJAP=\"iotnode\",\"iotnode-pass\"\r\n";
  for (auto _ : state) benchmark::DoNotOptimize(at::parse_at(line));
}
BENCHMARK(BM_ParseAt);

static void BM_ParseIpd(benchmark::State& state) {
  const std::string payload(static_cast<std::size_t>(state.range(0)), 'x');
  const std::string frame = "+IPD,0," + std::to_string(payload.size()) + ":" + payload;
  for (auto _ : state) benchmark::DoNotOptimize(at::parse_ipd(frame));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(frame.size()));
}
BENCHMARK(BM_ParseIpd)->Arg(64)->Arg(2048);

static void BM_Route(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(control::route("GET /analog/5/128?req=1 HTTP/1.1"));
}
BENCHMARK(BM_Route);

static void BM_ControlHandle(benchmark::State& state) {
  device::SerialDevice dev(device::make_device("bench"));
  control::ControlPlane cp(dev);
  for (auto _ : state) benchmark::DoNotOptimize(cp.handle("GET /digital/2/1 HTTP/1.1"));
}
BENCHMARK(BM_ControlHandle);

static void BM_StoreWrite(benchmark::State& state) {
  telemetry::StoreOptions opts;
  opts.rate_limit = Seconds{0};
  opts.durable = false;
  telemetry::TelemetryStore store(opts);
  const std::string key{telemetry::kDemoWriteKey};
  store.create_channel("bench", key);
  telemetry::FieldMap fields{};
  fields[0] = 15;
  fields[1] = 82;
  for (auto _ : state) benchmark::DoNotOptimize(store.write_update(key, fields));
}
BENCHMARK(BM_StoreWrite);
BENCHMARK_MAIN();
