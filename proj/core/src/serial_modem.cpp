#include "iotnode/serial_modem.hpp"

namespace iotnode::at {

SerialModem::SerialModem(LinkConfig config) : config_(std::move(config)) {}

void SerialModem::emit(std::string_view line) {
  tx_.append(line);
  tx_.append(kCrLf);
  uart_bytes_ += line.size() + kCrLf.size();
}

void SerialModem::reset(BootPins pins) {
  if (!pins.rstb_low) return;
  state_ = hard_reset(state_, pins);
  rx_.clear();
  transmitted_.clear();
  if (state_.mode == Mode::Ready) {
    for (auto line : kBootBanner) emit(line);
  }
}

void SerialModem::write(std::string_view bytes) {
  rx_.append(bytes);
  uart_bytes_ += bytes.size();

  while (true) {
    if (state_.pending_send) {
      const std::size_t want = state_.pending_send->length;
      if (rx_.size() < want) return;
      SendResult sent = deliver_payload(state_, std::string_view(rx_).substr(0, want));
      rx_.erase(0, want);
      state_ = std::move(sent.state);
      if (!sent.data.empty()) transmitted_[sent.session] += sent.data;
      for (const auto& line : sent.lines) emit(line);
      continue;
    }

    const std::size_t end = rx_.find(kCrLf);
    if (end == std::string::npos) return;
    const std::string line = rx_.substr(0, end + kCrLf.size());
    rx_.erase(0, end + kCrLf.size());
    if (line == kCrLf) continue;

    try {
      StepResult step = at_step(state_, parse_at(line), config_);
      state_ = std::move(step.state);
      for (const auto& out : step.lines) emit(out);
    } catch (const ParseError&) {
      emit("ERROR");
    }
  }
}

std::string SerialModem::read() {
  std::string out;
  out.swap(tx_);
  return out;
}

int SerialModem::accept_client() {
  SessionEvent event = open_session(state_);
  state_ = std::move(event.state);
  emit(event.line);
  return event.session;
}

void SerialModem::receive(int session, std::string_view bytes) {
  const std::string frame = wrap_ipd(state_, session, bytes);
  tx_.append(frame);
  uart_bytes_ += frame.size();
}

void SerialModem::disconnect(int session) {
  SessionEvent event = close_session(state_, session);
  state_ = std::move(event.state);
  emit(event.line);
}

std::string SerialModem::take_transmitted(int session) {
  auto it = transmitted_.find(session);
  if (it == transmitted_.end()) return {};
  std::string out = std::move(it->second);
  transmitted_.erase(it);
  return out;
}

}  // namespace iotnode::at
