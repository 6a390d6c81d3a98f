#pragma once

#include <charconv>
#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "bankxai/error.hpp"

namespace bankxai {

// A UTC instant with one-second resolution. Inputs without an offset are
// taken as UTC; a date with no time part is UTC midnight.
struct Timestamp {
  std::chrono::sys_seconds value{};

  std::chrono::year_month_day date() const {
    return std::chrono::year_month_day{std::chrono::floor<std::chrono::days>(value)};
  }
  int year() const { return static_cast<int>(date().year()); }
  unsigned month() const { return static_cast<unsigned>(date().month()); }
  unsigned day() const { return static_cast<unsigned>(date().day()); }

  friend bool operator==(const Timestamp&, const Timestamp&) = default;
  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

namespace detail {

inline bool read_fixed(std::string_view text, std::size_t pos, std::size_t width, int& out) {
  if (pos + width > text.size()) return false;
  for (std::size_t i = pos; i < pos + width; ++i) {
    if (text[i] < '0' || text[i] > '9') return false;
  }
  auto res = std::from_chars(text.data() + pos, text.data() + pos + width, out);
  return res.ec == std::errc{};
}

}  // namespace detail

// Accepts YYYY-MM-DD, optionally followed by [T| ]HH:MM[:SS[.frac]] and an
// optional Z or +HH:MM / -HH:MM offset. Fractional seconds are truncated.
inline std::optional<Timestamp> try_parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  int y = 0, mo = 0, d = 0;
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  if (!detail::read_fixed(text, 0, 4, y) || !detail::read_fixed(text, 5, 2, mo) ||
      !detail::read_fixed(text, 8, 2, d)) {
    return std::nullopt;
  }
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;

  int hh = 0, mm = 0, ss = 0;
  std::size_t pos = 10;
  if (pos < text.size() && (text[pos] == 'T' || text[pos] == ' ')) {
    if (!detail::read_fixed(text, pos + 1, 2, hh) || pos + 3 >= text.size() ||
        text[pos + 3] != ':' || !detail::read_fixed(text, pos + 4, 2, mm)) {
      return std::nullopt;
    }
    pos += 6;
    if (pos < text.size() && text[pos] == ':') {
      if (!detail::read_fixed(text, pos + 1, 2, ss)) return std::nullopt;
      pos += 3;
      if (pos < text.size() && text[pos] == '.') {
        ++pos;
        std::size_t digits = 0;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
          ++pos;
          ++digits;
        }
        if (digits == 0) return std::nullopt;
      }
    }
    if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
  }

  int offset_minutes = 0;
  if (pos < text.size()) {
    if (text[pos] == 'Z' && pos + 1 == text.size()) {
      pos += 1;
    } else if ((text[pos] == '+' || text[pos] == '-') && pos + 6 == text.size() &&
               text[pos + 3] == ':') {
      int oh = 0, om = 0;
      if (!detail::read_fixed(text, pos + 1, 2, oh) || !detail::read_fixed(text, pos + 4, 2, om)) {
        return std::nullopt;
      }
      offset_minutes = (oh * 60 + om) * (text[pos] == '-' ? -1 : 1);
      pos += 6;
    } else {
      return std::nullopt;
    }
  }
  if (pos != text.size()) return std::nullopt;

  sys_seconds local = sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss};
  return Timestamp{local - minutes{offset_minutes}};
}

inline Timestamp parse_timestamp(std::string_view text) {
  if (auto ts = try_parse_timestamp(text)) return *ts;
  throw Error(ErrorKind::kValidation, "unparseable date '" + std::string(text) + "'");
}

// Wire-format rendering: 2018-09-01T00:00:00 (UTC, no offset suffix).
inline std::string format_timestamp(const Timestamp& ts) {
  using namespace std::chrono;
  const auto days_part = floor<days>(ts.value);
  const year_month_day ymd{days_part};
  const hh_mm_ss<seconds> tod{ts.value - days_part};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                static_cast<int>(tod.seconds().count()));
  return buf;
}

inline std::string format_date(const Timestamp& ts) {
  return format_timestamp(ts).substr(0, 10);
}

}  // namespace bankxai
