#include "iotnode/time.hpp"

#include <charconv>
#include <stdexcept>

#include <fmt/format.h>

namespace iotnode {
namespace {

int read_digits(std::string_view text, std::size_t pos, std::size_t count) {
  if (pos + count > text.size()) {
    throw std::invalid_argument(fmt::format("timestamp '{}' is truncated", text));
  }
  int value = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    const char c = text[i];
    if (c < '0' || c > '9') {
      throw std::invalid_argument(
          fmt::format("timestamp '{}': expected digit at offset {}", text, i));
    }
    value = value * 10 + (c - '0');
  }
  return value;
}

void expect_char(std::string_view text, std::size_t pos, std::string_view allowed) {
  if (pos >= text.size() || allowed.find(text[pos]) == std::string_view::npos) {
    throw std::invalid_argument(
        fmt::format("timestamp '{}': unexpected character at offset {}", text, pos));
  }
}

}  // namespace

Timestamp parse_iso8601(std::string_view text) {
  using namespace std::chrono;
  const int y = read_digits(text, 0, 4);
  expect_char(text, 4, "-");
  const int mo = read_digits(text, 5, 2);
  expect_char(text, 7, "-");
  const int d = read_digits(text, 8, 2);
  expect_char(text, 10, "T ");
  const int h = read_digits(text, 11, 2);
  expect_char(text, 13, ":");
  const int mi = read_digits(text, 14, 2);
  expect_char(text, 16, ":");
  const int s = read_digits(text, 17, 2);

  const std::string_view rest = text.substr(19);
  if (!(rest.empty() || rest == "Z" || rest == "+00:00" || rest == "+0000")) {
    throw std::invalid_argument(
        fmt::format("timestamp '{}': only UTC offsets are accepted", text));
  }

  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) {
    throw std::invalid_argument(fmt::format("timestamp '{}' is out of range", text));
  }
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

std::string format_iso8601(Timestamp ts) {
  using namespace std::chrono;
  const auto day = floor<days>(ts);
  const year_month_day ymd{day};
  const hh_mm_ss hms{ts - day};
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                     hms.hours().count(), hms.minutes().count(), hms.seconds().count());
}

std::string format_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  return fmt::format("{:04}-{:02}-{:02}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

}  // namespace iotnode
