/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pissm {

/// One hour on the UTC grid, stored as whole hours since 1970-01-01T00:00Z.
/// The whole pipeline runs on this grid; sub-hourly instants never occur.
struct HourStamp {
  std::int64_t hours = 0;

  friend constexpr bool operator==(HourStamp a, HourStamp b) { return a.hours == b.hours; }
  friend constexpr auto operator<=>(HourStamp a, HourStamp b) { return a.hours <=> b.hours; }
  constexpr HourStamp operator+(std::int64_t h) const { return {hours + h}; }
  constexpr std::int64_t operator-(HourStamp o) const { return hours - o.hours; }
};

struct CivilTime {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31
  int hour = 0;   // 0..23
};

namespace detail {

// Days since 1970-01-01 for a proleptic Gregorian date (Hinnant's algorithm).
constexpr std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);             // [0, 399]
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;  // [0, 365]
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;            // [0, 146096]
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

constexpr void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yr = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yr + (m <= 2));
}

constexpr bool is_leap(int y) {
  return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

}  // namespace detail

constexpr HourStamp from_civil(const CivilTime& c) {
  return {detail::days_from_civil(c.year, c.month, c.day) * 24 + c.hour};
}

constexpr CivilTime to_civil(HourStamp t) {
  std::int64_t days = t.hours / 24;
  int hour = static_cast<int>(t.hours % 24);
  if (hour < 0) {
    hour += 24;
    days -= 1;
  }
  CivilTime c;
  detail::civil_from_days(days, c.year, c.month, c.day);
  c.hour = hour;
  return c;
}

constexpr int year_of(HourStamp t) { return to_civil(t).year; }
constexpr int month_of(HourStamp t) { return to_civil(t).month; }
constexpr int hour_of_day(HourStamp t) { return to_civil(t).hour; }

/// 1-based day of year (1..366).
constexpr int day_of_year(HourStamp t) {
  const CivilTime c = to_civil(t);
  return static_cast<int>(detail::days_from_civil(c.year, c.month, c.day) -
                          detail::days_from_civil(c.year, 1, 1)) +
         1;
}

inline std::string format_iso8601(HourStamp t) {
  const CivilTime c = to_civil(t);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:00:00Z", c.year, c.month, c.day, c.hour);
  return buf;
}

/// Accepts "YYYY-MM-DDTHH:MM:SSZ", "YYYY-MM-DD HH:MM", "YYYY-MM-DDTHH", and
/// the NASA POWER key form "YYYYMMDDHH". Minutes/seconds must be zero.
inline HourStamp parse_timestamp(std::string_view s) {
  auto fail = [&] { throw std::invalid_argument("unparseable timestamp: " + std::string(s)); };
  auto digits = [&](std::size_t pos, std::size_t n) {
    int v = 0;
    if (pos + n > s.size()) fail();
    for (std::size_t i = 0; i < n; ++i) {
      const char ch = s[pos + i];
      if (ch < '0' || ch > '9') fail();
      v = v * 10 + (ch - '0');
    }
    return v;
  };

  CivilTime c;
  if (s.size() == 10 && s.find_first_not_of("0123456789") == std::string_view::npos) {
    c.year = digits(0, 4);
    c.month = digits(4, 2);
    c.day = digits(6, 2);
    c.hour = digits(8, 2);
  } else {
    if (s.size() < 13) fail();
    c.year = digits(0, 4);
    if (s[4] != '-' || s[7] != '-') fail();
    c.month = digits(5, 2);
    c.day = digits(8, 2);
    if (s[10] != 'T' && s[10] != ' ') fail();
    c.hour = digits(11, 2);
    std::size_t pos = 13;
    if (pos < s.size() && s[pos] == ':') {
      if (digits(pos + 1, 2) != 0) fail();  // minutes
      pos += 3;
      if (pos < s.size() && s[pos] == ':') {
        if (digits(pos + 1, 2) != 0) fail();  // seconds
        pos += 3;
      }
    }
    if (pos < s.size() && s[pos] == 'Z') ++pos;
    if (pos != s.size()) fail();
  }
  if (c.month < 1 || c.month > 12 || c.day < 1 || c.day > 31 || c.hour > 23) fail();
  return from_civil(c);
}

}  // namespace pissm
