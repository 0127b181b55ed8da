#pragma once

// HTTP face of the telemetry store, ThingSpeak-compatible:
//
//   GET /update?api_key=<key>&field1=<v>...[&created_at=<iso>]
//       body: new entry_id, or `0` when rejected (always HTTP 200)
//   GET /channels/<id>/feeds?start=<iso>&end=<iso>&results=<n>
//   GET /channels/<id>/summary?field=<fid>[&start=<iso>&end=<iso>]

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "iotnode/net.hpp"
#include "iotnode/telemetry.hpp"

namespace iotnode::telemetry {

/// Header set on `/update` rejections: auth, rate-limited, no-fields or
/// invalid. The body stays `0` for compatibility.
inline constexpr std::string_view kRejectHeader = "X-Telemetry-Reject";
inline constexpr std::size_t kDefaultResults = 100;
inline constexpr std::size_t kMaxResults = 8000;

nlohmann::ordered_json channel_document(const Channel& channel,
                                        std::span<const TelemetryEntry> entries);
nlohmann::ordered_json feed_document(const Channel& channel,
                                     std::span<const TelemetryEntry> feed,
                                     std::int64_t last_entry_id);
nlohmann::ordered_json summary_document(const Channel& channel, int field,
                                        std::span<const TelemetryEntry> entries);

class TelemetryServer {
 public:
  explicit TelemetryServer(TelemetryStore& store);
  ~TelemetryServer();

  TelemetryServer(const TelemetryServer&) = delete;
  TelemetryServer& operator=(const TelemetryServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws net::BindError.
  std::uint16_t bind(const net::HostPort& address);

  /// Serves on the calling thread until stop().
  void listen();
  /// Serves on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace iotnode::telemetry
