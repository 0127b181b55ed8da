#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace iotnode {

/// UTC instant at one-second resolution; every timestamp in the system is UTC.
using Timestamp = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

/// Parses `YYYY-MM-DDTHH:MM:SS` with an optional `Z` or `+00:00` suffix.
/// A space is accepted in place of `T`. Throws std::invalid_argument.
Timestamp parse_iso8601(std::string_view text);

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_iso8601(Timestamp ts);

/// Formats a calendar day as `YYYY-MM-DD`.
std::string format_date(std::chrono::sys_days day);

}  // namespace iotnode
