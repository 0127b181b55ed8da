#include <doctest.h>

#include <random>
#include <sstream>
#include <thread>

#include "iotnode/device.hpp"
#include "test_support.hpp"

using namespace iotnode;
using namespace iotnode::device;
using namespace std::chrono_literals;

namespace {

const Timestamp t0 = parse_iso8601("2016-07-08T00:00:00Z");

Scenario parse(const std::string& text) {
  std::istringstream in(text);
  return parse_scenario_csv(in);
}

std::size_t error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ScenarioError& e) {
    return e.line();
  }
  return static_cast<std::size_t>(-1);
}

}  // namespace

TEST_CASE("fresh device has all pins low and duty 0") {
  const auto s = make_device("node-a");
  CHECK(s.device_id == "node-a");
  CHECK(s.digital_pins.size() == kPinCount);
  CHECK(s.pwm_channels.size() == 4);
  for (const auto& [pin, level] : s.digital_pins) CHECK(level == 0);
  for (const auto& [pin, duty] : s.pwm_channels) CHECK(duty == 0);
  CHECK_FALSE(s.last_sample_at);
  CHECK(satisfies_invariants(s));
}

TEST_CASE("apply_digital") {
  const auto s = make_device("n");
  const auto on = apply_digital(s, 2, 1);
  CHECK(on.digital_pins.at(2) == 1);
  auto expected = s;
  expected.digital_pins[2] = 1;
  CHECK(on == expected);

  SUBCASE("idempotent") { CHECK(apply_digital(on, 2, 1) == on); }

  SUBCASE("unknown pin leaves state untouched") {
    const auto before = on;
    try {
      apply_digital(on, 99, 1);
      FAIL("expected DeviceError");
    } catch (const DeviceError& e) {
      CHECK(e.kind() == DeviceError::Kind::UnknownPin);
    }
    CHECK(on == before);
  }

  SUBCASE("level must be 0 or 1") { CHECK_THROWS_AS(apply_digital(s, 2, 2), DeviceError); }
}

TEST_CASE("apply_pwm") {
  const auto s = make_device("n");
  CHECK(apply_pwm(s, 5, 0).pwm_channels.at(5) == 0);
  CHECK(apply_pwm(s, 5, 255).pwm_channels.at(5) == 255);
  CHECK(duty_fraction(255) == 1.0);
  CHECK(duty_fraction(0) == 0.0);

  const auto half = apply_pwm(s, 5, 128);
  CHECK(half.pwm_channels.at(5) == 128);
  CHECK(duty_fraction(128) == doctest::Approx(128.0 / 255.0));
  CHECK(duty_fraction(128) == doctest::Approx(0.502).epsilon(0.001));

  auto expected = s;
  expected.pwm_channels[5] = 128;
  CHECK(half == expected);
  CHECK(apply_pwm(half, 5, 128) == half);

  auto kind_of = [&](int pin, int duty) {
    try {
      apply_pwm(s, pin, duty);
    } catch (const DeviceError& e) {
      return e.kind();
    }
    FAIL("expected DeviceError");
    return DeviceError::Kind::NoData;
  };
  CHECK(kind_of(5, 256) == DeviceError::Kind::BadDuty);
  CHECK(kind_of(5, -1) == DeviceError::Kind::BadDuty);
  CHECK(kind_of(3, 10) == DeviceError::Kind::NotPwmPin);
  CHECK(kind_of(99, 10) == DeviceError::Kind::UnknownPin);
}

TEST_CASE("random pin writes keep every invariant") {
  std::mt19937 rng(1234);
  std::uniform_int_distribution<int> pin(-2, kPinCount + 2);
  std::uniform_int_distribution<int> value(-5, 300);
  std::uniform_int_distribution<int> op(0, 1);

  for (int walk = 0; walk < 200; ++walk) {
    auto s = make_device("walk");
    for (int step = 0; step < 100; ++step) {
      const int p = pin(rng);
      const int v = op(rng) == 0 ? value(rng) % 3 : value(rng);
      const auto before = s;
      try {
        s = op(rng) == 0 ? apply_digital(s, p, v) : apply_pwm(s, p, v);
      } catch (const DeviceError&) {
        CHECK(s == before);
      }
      REQUIRE(satisfies_invariants(s));
    }
  }
}

TEST_CASE("sample_environment is step-hold") {
  const Scenario one({{t0, 15, 82}});
  const auto r = sample_environment(one, t0);
  CHECK(r.temperature_c == 15);
  CHECK(r.humidity_pct == 82);

  const Scenario two({{t0, 15, 82}, {t0 + 600s, 14, 80}});
  CHECK(sample_environment(two, t0 + 300s).temperature_c == 15);
  CHECK(sample_environment(two, t0 + 599s).humidity_pct == 82);
  CHECK(sample_environment(two, t0 + 600s).temperature_c == 14);
  CHECK(sample_environment(two, t0 + 24h).humidity_pct == 80);
  CHECK(sample_environment(two, t0 + 300s) == sample_environment(two, t0 + 300s));

  try {
    sample_environment(two, t0 - 1s);
    FAIL("expected NoData");
  } catch (const DeviceError& e) {
    CHECK(e.kind() == DeviceError::Kind::NoData);
  }
}

TEST_CASE("tick") {
  auto s = make_device("n", 15s);
  auto r = tick(s, t0);
  CHECK(r.sample_due);
  CHECK(r.state.last_sample_at == t0);

  auto r2 = tick(r.state, t0 + 10s);
  CHECK_FALSE(r2.sample_due);
  CHECK(r2.state == r.state);

  auto r3 = tick(r.state, t0 + 15s);
  CHECK(r3.sample_due);
  CHECK(r3.state.last_sample_at == t0 + 15s);
}

TEST_CASE("tick never fires twice within one interval over a day") {
  std::mt19937 rng(99);
  std::uniform_int_distribution<int> step(1, 7);
  auto s = make_device("n", 15s);
  std::optional<Timestamp> last_due;
  std::size_t due = 0;
  for (Timestamp now = t0; now < t0 + 24h; now += Seconds(step(rng))) {
    auto r = tick(s, now);
    if (r.sample_due) {
      if (last_due) CHECK(now - *last_due >= 15s);
      last_due = now;
      ++due;
    }
    s = r.state;
  }
  CHECK(due > 0);
  CHECK(due <= 24 * 3600 / 15);
}

TEST_CASE("scenario validation") {
  CHECK_THROWS_AS(Scenario({{t0, 15, 82}, {t0, 14, 80}}), ScenarioError);
  CHECK_THROWS_AS(Scenario({{t0, 51, 82}}), ScenarioError);
  CHECK_THROWS_AS(Scenario({{t0, 15, 19}}), ScenarioError);
  const Scenario ok({{t0, 0, 20}, {t0 + 1s, 50, 90}});
  CHECK(ok.start() == t0);
  CHECK(ok.end() == t0 + 1s);
}

TEST_CASE("scenario CSV parsing") {
  const auto s = parse("ts,temp_c,rh_pct\n2016-07-08T00:00:00Z,15,82\n2016-07-08T00:15:00Z,14,80\n");
  REQUIRE(s.size() == 2);
  CHECK(s.points()[1].at == t0 + 15min);
  CHECK(s.points()[1].temperature_c == 14);

  SUBCASE("round trip through text") {
    const auto again = parse(scenario_to_csv(s));
    CHECK(again.points() == s.points());
  }

  SUBCASE("errors carry the line number") {
    const std::string head = "ts,temp_c,rh_pct\n";
    CHECK(error_line(head + "2016-07-08T00:00:00Z,15,82\n2016-07-08T00:00:00Z,15,82\n") == 3);
    CHECK(error_line(head + "2016-07-08T01:00:00Z,15,82\n2016-07-08T00:00:00Z,15,82\n") == 3);
    CHECK(error_line(head + "2016-07-08T00:00:00Z,abc,82\n") == 2);
    CHECK(error_line(head + "2016-07-08T00:00:00Z,15\n") == 2);
    CHECK(error_line(head + "not-a-time,15,82\n") == 2);
    CHECK(error_line(head + "2016-07-08T00:00:00Z,15,95\n") == 2);
    CHECK(error_line("when,t,h\n2016-07-08T00:00:00Z,15,82\n") == 1);
  }

  SUBCASE("empty inputs") {
    CHECK_THROWS_AS(parse(""), ScenarioError);
    CHECK_THROWS_AS(parse("ts,temp_c,rh_pct\n"), ScenarioError);
  }
}

TEST_CASE("fixture loads 61 points") {
  const auto s = load_scenario_file(testing::fixture_path());
  CHECK(s.size() == 61);
  CHECK(s.start() == t0);
  CHECK(format_iso8601(s.end()) == "2016-07-14T21:00:00Z");
}

TEST_CASE("SerialDevice serializes commands") {
  SerialDevice dev(make_device("n"));
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&dev] {
      for (int i = 0; i < 1000; ++i) {
        dev.apply([](DeviceState& s) { s.pwm_channels[2] = (s.pwm_channels[2] + 1) % 256; });
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(dev.snapshot().pwm_channels.at(2) == 8000 % 256);
}
