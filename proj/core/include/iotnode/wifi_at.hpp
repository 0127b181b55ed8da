#pragma once

// ESP8266-style AT link layer: command grammar, the link state machine,
// RSTB/GPIO0 reset semantics and +IPD session framing.
//
// All functions are pure: they take a LinkState and return the next one.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace iotnode::at {

inline constexpr std::string_view kCrLf = "\r\n";
inline constexpr int kMaxSessions = 5;  // session ids 0..4
inline constexpr std::size_t kMaxSendLength = 2048;
inline constexpr std::uint16_t kDefaultServerPort = 80;

/// Lines the module prints while booting, ending with the `ready` marker.
inline constexpr std::array<std::string_view, 3> kBootBanner{
    "ets Jan  8 2013,rst cause:2, boot mode:(3,6)", "", "ready"};

enum class Verb { At, Rst, Cwmode, Cwjap, Cifsr, Cipmux, Cipserver, Cipsend, Cipclose };

std::string_view verb_name(Verb verb);

struct AtCommand {
  Verb verb = Verb::At;
  std::vector<std::string> args;

  friend bool operator==(const AtCommand&, const AtCommand&) = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : std::runtime_error(what), offset_(offset) {}
  /// Byte offset of the first illegal character.
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Parses one CR LF terminated command line. Quoted arguments may escape
/// `"`, `,` and `\` with a backslash.
AtCommand parse_at(std::string_view line);

/// `AT[+VERB[=args]]` followed by CR LF. CWJAP arguments are quoted.
std::string serialize(const AtCommand& command);

struct Ipv4 {
  std::array<std::uint8_t, 4> octets{};

  std::string to_string() const;
  friend bool operator==(const Ipv4&, const Ipv4&) = default;
};

enum class Mode { Boot, FlashMode, Ready, StaJoined, ServerListening };

std::string_view mode_name(Mode mode);

struct PendingSend {
  int session = 0;
  std::size_t length = 0;

  friend bool operator==(const PendingSend&, const PendingSend&) = default;
};

struct LinkState {
  Mode mode = Mode::Boot;
  int wifi_mode = 1;  // CWMODE: 1 station, 2 soft-AP, 3 both
  std::optional<std::string> ssid;
  std::optional<Ipv4> station_ip;
  bool mux = false;
  std::map<int, bool> sessions;  // id -> open
  std::optional<std::uint16_t> listen_port;
  std::optional<PendingSend> pending_send;  // CIPSEND awaiting its payload

  bool session_open(int id) const;
  int open_session_count() const;
  friend bool operator==(const LinkState&, const LinkState&) = default;
};

/// True when the state satisfies the LinkState invariants.
bool satisfies_invariants(const LinkState& state);

/// The access points the emulated radio can see.
struct LinkConfig {
  /// ssid -> password. Empty means any ssid/password pair is accepted.
  std::map<std::string, std::string> networks;
  /// Address the emulated DHCP server leases to the station.
  Ipv4 dhcp_pool_start{{192, 168, 2, 1}};
};

struct StepResult {
  LinkState state;
  std::vector<std::string> lines;
};

/// Executes one command. Success ends with `OK`; every failure yields a
/// trailing `ERROR` line and leaves the state unchanged.
StepResult at_step(const LinkState& state, const AtCommand& command,
                   const LinkConfig& config = {});

struct BootPins {
  bool rstb_low = false;
  bool gpio0_low = false;
};

/// Reset via the RSTB pin. GPIO0 held low selects FLASH mode; otherwise the
/// module boots to READY. Every session is closed. RSTB high is a no-op.
LinkState hard_reset(const LinkState& state, BootPins pins);

class SessionError : public std::runtime_error {
 public:
  SessionError(int session, const std::string& what)
      : std::runtime_error(what), session_(session) {}
  int session() const noexcept { return session_; }

 private:
  int session_;
};

/// `+IPD,<session>,<len>:<payload>`. Throws SessionError for a closed session.
std::string wrap_ipd(const LinkState& state, int session, std::string_view payload);

struct IpdFrame {
  int session = 0;
  std::string payload;
  std::size_t consumed = 0;  // bytes of input the frame occupied
};

/// Parses a complete `+IPD` frame at the start of `bytes`; nullopt when the
/// frame is still incomplete. Throws ParseError on malformed headers.
std::optional<IpdFrame> parse_ipd(std::string_view bytes);

struct SessionEvent {
  LinkState state;
  int session = -1;
  std::string line;  // `<id>,CONNECT` or `<id>,CLOSED`
};

/// A TCP client connected to the listening server: claims the lowest free id.
/// Throws SessionError when not listening or all ids are in use.
SessionEvent open_session(const LinkState& state);

/// The remote end closed the connection.
SessionEvent close_session(const LinkState& state, int session);

/// Delivers the payload announced by a pending CIPSEND.
struct SendResult {
  LinkState state;
  std::vector<std::string> lines;
  int session = -1;
  std::string data;  // bytes put on the wire; empty on failure
};
SendResult deliver_payload(const LinkState& state, std::string_view payload);

}  // namespace iotnode::at
