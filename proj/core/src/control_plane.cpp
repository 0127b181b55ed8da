#include "iotnode/control_plane.hpp"

#include <charconv>

#include <fmt/format.h>

namespace iotnode::control {
namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t begin = 0;
  while (true) {
    const std::size_t at = text.find(sep, begin);
    parts.push_back(text.substr(begin, at - begin));
    if (at == std::string_view::npos) break;
    begin = at + 1;
  }
  return parts;
}

int parse_segment(std::string_view segment, std::string_view what) {
  int value = 0;
  const bool digits_only =
      !segment.empty() && segment.size() <= 4 &&
      segment.find_first_not_of("0123456789") == std::string_view::npos;
  if (digits_only) {
    std::from_chars(segment.data(), segment.data() + segment.size(), value);
    return value;
  }
  throw RouteError(400, fmt::format("{} '{}' is not a number in [0, {}]", what, segment,
                                    kMaxPinSegment));
}

nlohmann::ordered_json envelope(const device::DeviceState& state) {
  return {{"id", state.device_id},
          {"name", state.name},
          {"hardware", kHardware},
          {"connected", true}};
}

nlohmann::ordered_json with_envelope(nlohmann::ordered_json body,
                                     const device::DeviceState& state) {
  const auto env = envelope(state);
  for (const auto& [key, value] : env.items()) body[key] = value;
  return body;
}

}  // namespace

ControlAction route(std::string_view request_line) {
  const auto tokens = split(request_line, ' ');
  if (tokens.size() != 3 || tokens[1].empty() || tokens[1].front() != '/' ||
      (tokens[2] != "HTTP/1.1" && tokens[2] != "HTTP/1.0")) {
    throw RouteError(400, "malformed request line");
  }
  if (tokens[0] != "GET") {
    throw RouteError(405, fmt::format("method {} not allowed", tokens[0]));
  }

  std::string_view path = tokens[1];
  if (const auto q = path.find('?'); q != std::string_view::npos) path = path.substr(0, q);
  if (path == "/") return ControlAction{ActionKind::Status, {}, {}};

  const auto seg = split(path.substr(1), '/');
  if (seg.size() == 1 && seg[0] == "sensor") {
    return ControlAction{ActionKind::SensorRead, {}, {}};
  }
  if (seg[0] == "digital" && (seg.size() == 2 || seg.size() == 3)) {
    const int pin = parse_segment(seg[1], "pin");
    if (seg.size() == 2) return ControlAction{ActionKind::DigitalRead, pin, {}};
    const int level = parse_segment(seg[2], "level");
    if (level > 1) throw RouteError(400, fmt::format("digital level {} is not 0 or 1", level));
    return ControlAction{ActionKind::DigitalWrite, pin, level};
  }
  if (seg[0] == "analog" && seg.size() == 3) {
    const int pin = parse_segment(seg[1], "pin");
    const int duty = parse_segment(seg[2], "duty");
    if (duty > device::kMaxDuty) {
      throw RouteError(400, fmt::format("duty {} outside [0, {}]", duty, device::kMaxDuty));
    }
    return ControlAction{ActionKind::AnalogWrite, pin, duty};
  }
  throw RouteError(404, fmt::format("no route for {}", path));
}

std::string serialize(const ControlAction& action) {
  std::string path;
  switch (action.kind) {
    case ActionKind::DigitalWrite:
      path = fmt::format("/digital/{}/{}", action.pin.value(), action.value.value());
      break;
    case ActionKind::AnalogWrite:
      path = fmt::format("/analog/{}/{}", action.pin.value(), action.value.value());
      break;
    case ActionKind::DigitalRead:
      path = fmt::format("/digital/{}", action.pin.value());
      break;
    case ActionKind::SensorRead:
      path = "/sensor";
      break;
    case ActionKind::Status:
      path = "/";
      break;
  }
  return fmt::format("GET {} HTTP/1.1", path);
}

ControlResponse error_response(const device::DeviceState& state, int http_status,
                               std::string_view message) {
  return {http_status, with_envelope({{"message", message}}, state)};
}

Execution execute(const ControlAction& action, const device::DeviceState& state) {
  try {
    switch (action.kind) {
      case ActionKind::DigitalWrite: {
        const int pin = action.pin.value();
        auto next = device::apply_digital(state, pin, action.value.value());
        const int level = next.digital_pins.at(pin);
        auto body = with_envelope(
            {{"message", fmt::format("Pin {} set to {}", pin, level)}, {"return_value", level}},
            next);
        return {std::move(next), {200, std::move(body)}};
      }
      case ActionKind::AnalogWrite: {
        const int pin = action.pin.value();
        auto next = device::apply_pwm(state, pin, action.value.value());
        const int duty = next.pwm_channels.at(pin);
        auto body = with_envelope(
            {{"message", fmt::format("Pin {} set to {}", pin, duty)}, {"return_value", duty}},
            next);
        return {std::move(next), {200, std::move(body)}};
      }
      case ActionKind::DigitalRead: {
        const int pin = action.pin.value();
        const auto it = state.digital_pins.find(pin);
        if (it == state.digital_pins.end()) {
          throw device::DeviceError(device::DeviceError::Kind::UnknownPin,
                                    fmt::format("unknown pin {}", pin));
        }
        return {state, {200, with_envelope({{"return_value", it->second}}, state)}};
      }
      case ActionKind::SensorRead: {
        if (!state.last_reading) {
          return {state, error_response(state, 503, "no sensor reading yet")};
        }
        return {state,
                {200, with_envelope({{"temperature", state.last_reading->temperature_c},
                                     {"humidity", state.last_reading->humidity_pct}},
                                    state)}};
      }
      case ActionKind::Status: {
        nlohmann::ordered_json variables = nlohmann::ordered_json::object();
        if (state.last_reading) {
          variables["temperature"] = state.last_reading->temperature_c;
          variables["humidity"] = state.last_reading->humidity_pct;
          variables["taken_at"] = format_iso8601(state.last_reading->taken_at);
        }
        nlohmann::ordered_json digital = nlohmann::ordered_json::object();
        for (const auto& [pin, level] : state.digital_pins) digital[std::to_string(pin)] = level;
        nlohmann::ordered_json pwm = nlohmann::ordered_json::object();
        for (const auto& [pin, duty] : state.pwm_channels) pwm[std::to_string(pin)] = duty;
        return {state, {200, with_envelope({{"variables", std::move(variables)},
                                            {"digital", std::move(digital)},
                                            {"pwm", std::move(pwm)}},
                                           state)}};
      }
    }
  } catch (const device::DeviceError& e) {
    return {state, error_response(state, 400, e.what())};
  }
  return {state, error_response(state, 400, "unsupported action")};
}

std::string_view reason_phrase(int status) {
  switch (status) {
    case 200: return "OK";
    case 400: return "Bad Request";
    case 404: return "Not Found";
    case 405: return "Method Not Allowed";
    case 500: return "Internal Server Error";
    case 503: return "Service Unavailable";
    default: return "Unknown";
  }
}

std::string render_http(const HttpReply& reply) {
  return fmt::format(
      "HTTP/1.1 {} {}\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
      reply.status, reason_phrase(reply.status), reply.content_type, reply.body.size(),
      reply.body);
}

std::optional<std::string_view> request_line_of(std::string_view raw_request) {
  const std::size_t end = raw_request.find("\r\n");
  if (end == std::string_view::npos) return std::nullopt;
  return raw_request.substr(0, end);
}

HttpReply ControlPlane::handle(std::string_view request_line) {
  std::optional<ControlAction> action;
  std::optional<RouteError> route_error;
  try {
    action = route(request_line);
  } catch (const RouteError& e) {
    route_error = e;
  }

  return device_.apply([&](device::DeviceState& state) {
    ControlResponse response;
    if (action) {
      Execution exec = execute(*action, state);
      state = std::move(exec.state);
      response = std::move(exec.response);
    } else {
      response = error_response(state, route_error->http_status(), route_error->what());
    }
    HttpReply reply{response.http_status, "application/json", response.body.dump()};
    if (journal_enabled_) {
      journal_.push_back(JournalEntry{journal_.size() + 1, std::string(request_line),
                                      reply.status, reply.body});
    }
    return reply;
  });
}

std::string ControlPlane::handle_raw(std::string_view raw_request) {
  const auto line = request_line_of(raw_request);
  return render_http(handle(line ? *line : raw_request));
}

void ControlPlane::enable_journal(bool on) {
  device_.apply([&](device::DeviceState&) { journal_enabled_ = on; });
}

std::vector<JournalEntry> ControlPlane::journal() const {
  return device_.apply([&](device::DeviceState&) { return journal_; });
}

}  // namespace iotnode::control
