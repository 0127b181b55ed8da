#include "iotnode/wifi_at.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>

namespace iotnode::at {
namespace {

struct VerbEntry {
  Verb verb;
  std::string_view name;
};

constexpr std::array<VerbEntry, 8> kPlusVerbs{{
    {Verb::Rst, "RST"},
    {Verb::Cwmode, "CWMODE"},
    {Verb::Cwjap, "CWJAP"},
    {Verb::Cifsr, "CIFSR"},
    {Verb::Cipmux, "CIPMUX"},
    {Verb::Cipserver, "CIPSERVER"},
    {Verb::Cipsend, "CIPSEND"},
    {Verb::Cipclose, "CIPCLOSE"},
}};

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }

// Characters allowed in an unquoted argument.
bool is_bare_char(char c) {
  return c > ' ' && c < 0x7F && c != ',' && c != '"' && c != '\\';
}

bool needs_quotes(std::string_view arg) {
  if (arg.empty()) return true;
  for (char c : arg) {
    if (!is_bare_char(c)) return true;
  }
  return false;
}

std::string quote(std::string_view arg) {
  std::string out = "\"";
  for (char c : arg) {
    if (c == '"' || c == '\\' || c == ',') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

std::optional<int> to_int(std::string_view text) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    return std::nullopt;
  }
  return value;
}

StepResult fail(const LinkState& state, std::vector<std::string> lines = {}) {
  lines.emplace_back("ERROR");
  return {state, std::move(lines)};
}

LinkState booted(const LinkState& previous, Mode mode) {
  LinkState next;
  next.mode = mode;
  next.wifi_mode = previous.wifi_mode;  // CWMODE persists in flash
  return next;
}

}  // namespace

std::string_view verb_name(Verb verb) {
  if (verb == Verb::At) return "AT";
  for (const auto& entry : kPlusVerbs) {
    if (entry.verb == verb) return entry.name;
  }
  return "?";
}

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::Boot: return "BOOT";
    case Mode::FlashMode: return "FLASH_MODE";
    case Mode::Ready: return "READY";
    case Mode::StaJoined: return "STA_JOINED";
    case Mode::ServerListening: return "SERVER_LISTENING";
  }
  return "?";
}

AtCommand parse_at(std::string_view line) {
  if (line.size() < 2 || line.substr(line.size() - 2) != kCrLf) {
    throw ParseError(line.size(), "command line is not terminated by CR LF");
  }
  const std::string_view body = line.substr(0, line.size() - 2);
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] == '\r' || body[i] == '\n') {
      throw ParseError(i, fmt::format("stray line terminator at offset {}", i));
    }
  }

  if (body.empty() || body[0] != 'A') throw ParseError(0, "command must start with AT");
  if (body.size() < 2 || body[1] != 'T') throw ParseError(1, "command must start with AT");
  if (body.size() == 2) return AtCommand{Verb::At, {}};
  if (body[2] != '+') throw ParseError(2, "expected '+' after AT");

  std::size_t pos = 3;
  while (pos < body.size() && is_upper(body[pos])) ++pos;
  const std::string_view name = body.substr(3, pos - 3);
  AtCommand command;
  bool known = false;
  for (const auto& entry : kPlusVerbs) {
    if (entry.name == name) {
      command.verb = entry.verb;
      known = true;
      break;
    }
  }
  if (!known) throw ParseError(3, fmt::format("unknown verb '{}'", name));

  if (pos == body.size()) return command;
  if (body[pos] != '=') {
    throw ParseError(pos, fmt::format("unexpected character at offset {}", pos));
  }
  ++pos;

  while (true) {
    std::string arg;
    if (pos < body.size() && body[pos] == '"') {
      ++pos;
      bool closed = false;
      while (pos < body.size()) {
        const char c = body[pos];
        if (static_cast<unsigned char>(c) < 0x20 || c == 0x7F) {
          throw ParseError(pos, fmt::format("control character at offset {}", pos));
        }
        if (c == '\\') {
          if (pos + 1 >= body.size()) break;
          arg += body[pos + 1];
          pos += 2;
          continue;
        }
        if (c == '"') {
          closed = true;
          ++pos;
          break;
        }
        arg += c;
        ++pos;
      }
      if (!closed) throw ParseError(body.size(), "unterminated quoted argument");
    } else {
      const std::size_t begin = pos;
      while (pos < body.size() && is_bare_char(body[pos])) ++pos;
      if (pos == begin) {
        throw ParseError(pos, fmt::format("expected argument at offset {}", pos));
      }
      arg.assign(body.substr(begin, pos - begin));
    }
    command.args.push_back(std::move(arg));

    if (pos == body.size()) break;
    if (body[pos] != ',') {
      throw ParseError(pos, fmt::format("unexpected character at offset {}", pos));
    }
    ++pos;
  }
  return command;
}

std::string serialize(const AtCommand& command) {
  std::string out = "AT";
  if (command.verb != Verb::At) {
    out += '+';
    out += verb_name(command.verb);
    for (std::size_t i = 0; i < command.args.size(); ++i) {
      out += i == 0 ? '=' : ',';
      const auto& arg = command.args[i];
      out += (command.verb == Verb::Cwjap || needs_quotes(arg)) ? quote(arg) : arg;
    }
  }
  out += kCrLf;
  return out;
}

std::string Ipv4::to_string() const {
  return fmt::format("{}.{}.{}.{}", octets[0], octets[1], octets[2], octets[3]);
}

bool LinkState::session_open(int id) const {
  const auto it = sessions.find(id);
  return it != sessions.end() && it->second;
}

int LinkState::open_session_count() const {
  int n = 0;
  for (const auto& [id, open] : sessions) n += open ? 1 : 0;
  return n;
}

bool satisfies_invariants(const LinkState& state) {
  const bool joined = state.mode == Mode::StaJoined || state.mode == Mode::ServerListening;
  const bool listening = state.mode == Mode::ServerListening;
  if (!state.sessions.empty() && !listening) return false;
  if (state.station_ip.has_value() != joined) return false;
  if (state.ssid.has_value() != joined) return false;
  if (state.listen_port.has_value() != listening) return false;
  for (const auto& [id, open] : state.sessions) {
    if (id < 0 || id >= kMaxSessions) return false;
  }
  if (state.pending_send && !state.session_open(state.pending_send->session)) return false;
  return true;
}

StepResult at_step(const LinkState& state, const AtCommand& command, const LinkConfig& config) {
  const auto& args = command.args;

  if (state.mode == Mode::FlashMode) return fail(state);
  if (state.pending_send) return fail(state);
  if (state.mode == Mode::Boot && command.verb != Verb::Rst) return fail(state);

  switch (command.verb) {
    case Verb::At:
      if (!args.empty()) return fail(state);
      return {state, {"OK"}};

    case Verb::Rst: {
      if (!args.empty()) return fail(state);
      StepResult result{booted(state, Mode::Ready), {"OK"}};
      for (auto line : kBootBanner) result.lines.emplace_back(line);
      return result;
    }

    case Verb::Cwmode: {
      if (args.size() != 1) return fail(state);
      const auto mode = to_int(args[0]);
      if (!mode || *mode < 1 || *mode > 3) return fail(state);
      if (state.mode == Mode::ServerListening) return fail(state);
      // Dropping the station interface while joined is not modelled.
      if (state.mode == Mode::StaJoined && *mode == 2) return fail(state);
      LinkState next = state;
      next.wifi_mode = *mode;
      return {next, {"OK"}};
    }

    case Verb::Cwjap: {
      if (args.size() != 2 || args[0].empty()) return fail(state);
      if (state.mode != Mode::Ready && state.mode != Mode::StaJoined) return fail(state);
      if (state.wifi_mode == 2) return fail(state);
      if (!config.networks.empty()) {
        const auto it = config.networks.find(args[0]);
        if (it == config.networks.end()) return fail(state, {"+CWJAP:3"});
        if (it->second != args[1]) return fail(state, {"+CWJAP:2"});
      }
      LinkState next = state;
      next.mode = Mode::StaJoined;
      next.ssid = args[0];
      next.station_ip = config.dhcp_pool_start;
      return {next, {"WIFI CONNECTED", "WIFI GOT IP", "OK"}};
    }

    case Verb::Cifsr:
      if (!args.empty() || !state.station_ip) return fail(state);
      return {state, {fmt::format("+CIFSR:STAIP,\"{}\"", state.station_ip->to_string()), "OK"}};

    case Verb::Cipmux: {
      if (args.size() != 1) return fail(state);
      const auto mux = to_int(args[0]);
      if (!mux || (*mux != 0 && *mux != 1)) return fail(state);
      if (state.mode == Mode::ServerListening) return fail(state);
      LinkState next = state;
      next.mux = *mux == 1;
      return {next, {"OK"}};
    }

    case Verb::Cipserver: {
      if (args.empty() || args.size() > 2) return fail(state);
      const auto enable = to_int(args[0]);
      if (!enable || (*enable != 0 && *enable != 1)) return fail(state);
      if (*enable == 0) {
        if (args.size() != 1 || state.mode != Mode::ServerListening) return fail(state);
        LinkState next = state;
        next.mode = Mode::StaJoined;
        next.sessions.clear();
        next.listen_port.reset();
        return {next, {"OK"}};
      }
      if (state.mode != Mode::StaJoined || !state.mux) return fail(state);
      int port = kDefaultServerPort;
      if (args.size() == 2) {
        const auto p = to_int(args[1]);
        if (!p || *p < 1 || *p > 65535) return fail(state);
        port = *p;
      }
      LinkState next = state;
      next.mode = Mode::ServerListening;
      next.listen_port = static_cast<std::uint16_t>(port);
      return {next, {"OK"}};
    }

    case Verb::Cipsend: {
      if (args.size() != 2 || state.mode != Mode::ServerListening) return fail(state);
      const auto id = to_int(args[0]);
      const auto len = to_int(args[1]);
      if (!id || !len || !state.session_open(*id)) return fail(state);
      if (*len < 1 || static_cast<std::size_t>(*len) > kMaxSendLength) return fail(state);
      LinkState next = state;
      next.pending_send = PendingSend{*id, static_cast<std::size_t>(*len)};
      return {next, {"OK", ">"}};
    }

    case Verb::Cipclose: {
      if (args.size() != 1 || state.mode != Mode::ServerListening) return fail(state);
      const auto id = to_int(args[0]);
      if (!id || !state.session_open(*id)) return fail(state);
      LinkState next = state;
      next.sessions[*id] = false;
      return {next, {fmt::format("{},CLOSED", *id), "OK"}};
    }
  }
  return fail(state);
}

LinkState hard_reset(const LinkState& state, BootPins pins) {
  if (!pins.rstb_low) return state;
  return booted(state, pins.gpio0_low ? Mode::FlashMode : Mode::Ready);
}

std::string wrap_ipd(const LinkState& state, int session, std::string_view payload) {
  if (!state.session_open(session)) {
    throw SessionError(session, fmt::format("session {} is not open", session));
  }
  std::string out = fmt::format("+IPD,{},{}:", session, payload.size());
  out.append(payload);
  return out;
}

std::optional<IpdFrame> parse_ipd(std::string_view bytes) {
  constexpr std::string_view kPrefix = "+IPD,";
  const std::size_t prefix_len = std::min(bytes.size(), kPrefix.size());
  for (std::size_t i = 0; i < prefix_len; ++i) {
    if (bytes[i] != kPrefix[i]) throw ParseError(i, "expected +IPD header");
  }
  if (bytes.size() < kPrefix.size()) return std::nullopt;

  std::size_t pos = kPrefix.size();
  auto read_number = [&](char terminator) -> std::optional<std::size_t> {
    const std::size_t begin = pos;
    std::size_t value = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (pos - begin > 6) throw ParseError(pos, "+IPD number too long");
      ++pos;
    }
    if (pos == bytes.size()) return std::nullopt;
    if (pos == begin || bytes[pos] != terminator) {
      throw ParseError(pos, fmt::format("malformed +IPD header at offset {}", pos));
    }
    ++pos;
    return value;
  };

  const auto session = read_number(',');
  if (!session) return std::nullopt;
  const auto length = read_number(':');
  if (!length) return std::nullopt;
  if (bytes.size() - pos < *length) return std::nullopt;

  return IpdFrame{static_cast<int>(*session), std::string(bytes.substr(pos, *length)),
                  pos + *length};
}

SessionEvent open_session(const LinkState& state) {
  if (state.mode != Mode::ServerListening) {
    throw SessionError(-1, "server is not listening");
  }
  for (int id = 0; id < kMaxSessions; ++id) {
    if (!state.session_open(id)) {
      LinkState next = state;
      next.sessions[id] = true;
      return {next, id, fmt::format("{},CONNECT", id)};
    }
  }
  throw SessionError(-1, "all sessions are in use");
}

SessionEvent close_session(const LinkState& state, int session) {
  if (!state.session_open(session)) {
    throw SessionError(session, fmt::format("session {} is not open", session));
  }
  LinkState next = state;
  next.sessions[session] = false;
  if (next.pending_send && next.pending_send->session == session) next.pending_send.reset();
  return {next, session, fmt::format("{},CLOSED", session)};
}

SendResult deliver_payload(const LinkState& state, std::string_view payload) {
  if (!state.pending_send) return {state, {"ERROR"}, -1, {}};
  const PendingSend pending = *state.pending_send;
  LinkState next = state;
  next.pending_send.reset();
  if (payload.size() != pending.length || !state.session_open(pending.session)) {
    return {next, {"SEND FAIL"}, pending.session, {}};
  }
  return {next,
          {fmt::format("Recv {} bytes", payload.size()), "SEND OK"},
          pending.session,
          std::string(payload)};
}

}  // namespace iotnode::at
