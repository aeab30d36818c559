/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "pissm/time.hpp"

namespace pissm::solar {

inline constexpr double kDegPerHour = 15.0;
/// Upper clip for the clearness index; the stabilizing epsilon alone does
/// not bound the ratio at dawn/dusk when the clear-sky baseline is tiny.
inline constexpr double kKtClip = 1.2;

constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Site and clear-sky model configuration.
struct SiteConfig {
  double latitude = 14.7;            ///< degrees north
  double longitude = 33.2;           ///< degrees east
  double timezone_meridian = 30.0;   ///< degrees east of the civil time zone
  double solar_constant = 1361.0;    ///< W/m²
  double transmission_coeff = 0.75;  ///< clear-sky transmission, in (0, 1]
  double kt_epsilon = 1e-6;          ///< denominator guard for the clearness index
  bool apply_equation_of_time = false;

  void validate() const {
    if (latitude < -90.0 || latitude > 90.0)
      throw std::domain_error("latitude out of [-90, 90]");
    if (longitude < -180.0 || longitude > 180.0)
      throw std::domain_error("longitude out of [-180, 180]");
    if (transmission_coeff <= 0.0 || transmission_coeff > 1.0)
      throw std::domain_error("transmission_coeff out of (0, 1]");
    if (kt_epsilon <= 0.0) throw std::domain_error("kt_epsilon must be > 0");
  }
};

/// Astronomical state of one timestamp at one site.
struct SolarState {
  double declination = 0.0;    ///< degrees
  double hour_angle = 0.0;     ///< degrees
  double zenith_angle = 0.0;   ///< degrees, in [0, 180]
  double elevation_angle = 0.0;///< degrees, 90 - zenith
  double clear_sky_ghi = 0.0;  ///< W/m²
  bool is_night = false;       ///< zenith >= 90° or clear-sky GHI <= 0
};

/// Solar declination in degrees for a day of year in 1..366.
///
/// The degree argument is reduced mod 360 before the sine so that the
/// equinox at d = 81 lands on sin(0) exactly.
inline double declination(int day_of_year) {
  if (day_of_year < 1 || day_of_year > 366)
    throw std::domain_error("day_of_year out of 1..366");
  double arg = 360.0 * (284.0 + day_of_year) / 365.0;
  arg = std::fmod(arg, 360.0);
  return 23.45 * std::sin(deg2rad(arg));
}

/// Spencer's equation-of-time series, minutes.
inline double equation_of_time_minutes(int day_of_year) {
  const double b = 2.0 * std::numbers::pi * (day_of_year - 1) / 365.0;
  return 229.18 * (0.000075 + 0.001868 * std::cos(b) - 0.032077 * std::sin(b) -
                   0.014615 * std::cos(2 * b) - 0.04089 * std::sin(2 * b));
}

namespace detail {

inline double normalize_degrees(double deg) {
  deg = std::fmod(deg, 360.0);
  if (deg <= -180.0) deg += 360.0;
  if (deg > 180.0) deg -= 360.0;
  return deg;
}

}  // namespace detail

/// Hour angle in degrees from decimal solar time, normalized to (-180, 180].
inline double hour_angle_from_solar_time(double solar_time_hours) {
  return detail::normalize_degrees(kDegPerHour * (solar_time_hours - 12.0));
}

/// Hour angle in degrees for a UTC timestamp.
///
/// Solar time is local civil time corrected by the site's offset from its
/// time-zone meridian; the equation of time is off by default and folded in
/// when the site asks for it.
inline double hour_angle(HourStamp t, const SiteConfig& site) {
  const double civil_hour =
      static_cast<double>(hour_of_day(t)) + site.timezone_meridian / kDegPerHour;
  double solar_time =
      civil_hour + (site.longitude - site.timezone_meridian) / kDegPerHour;
  if (site.apply_equation_of_time)
    solar_time += equation_of_time_minutes(day_of_year(t)) / 60.0;
  return hour_angle_from_solar_time(solar_time);
}

/// Solar zenith angle in degrees; all arguments in degrees.
inline double zenith_angle(double latitude_deg, double declination_deg,
                           double hour_angle_deg) {
  if (latitude_deg < -90.0 || latitude_deg > 90.0)
    throw std::domain_error("latitude out of [-90, 90]");
  const double lat = deg2rad(latitude_deg);
  const double dec = deg2rad(declination_deg);
  const double ha = deg2rad(hour_angle_deg);
  // clamp guards arccos against rounding at |cos| ~ 1
  const double c = std::clamp(
      std::sin(lat) * std::sin(dec) + std::cos(lat) * std::cos(dec) * std::cos(ha),
      -1.0, 1.0);
  return rad2deg(std::acos(c));
}

/// Clear-sky GHI in W/m² from the solar elevation angle in degrees.
/// Zero when the sun is at or below the horizon.
inline double clear_sky_ghi(double elevation_deg, const SiteConfig& site) {
  if (elevation_deg <= 0.0) return 0.0;
  return site.solar_constant * site.transmission_coeff * std::sin(deg2rad(elevation_deg));
}

/// Clearness index: measured / (clear + epsilon), clipped to [0, kKtClip].
inline double clearness_index(double ghi_measured, double ghi_clear,
                              const SiteConfig& site) {
  if (ghi_measured < 0.0 || ghi_clear < 0.0)
    throw std::domain_error("irradiance must be nonnegative");
  const double kt = ghi_measured / (ghi_clear + site.kt_epsilon);
  return std::clamp(kt, 0.0, kKtClip);
}

/// (sin, cos) of 2*pi*t/period.
inline std::pair<double, double> cyclical_encode(double t, double period) {
  if (period <= 0.0) throw std::domain_error("period must be > 0");
  const double a = 2.0 * std::numbers::pi * t / period;
  return {std::sin(a), std::cos(a)};
}

/// Full astronomical state for a UTC timestamp at a site.
inline SolarState solar_state(HourStamp t, const SiteConfig& site) {
  SolarState s;
  s.declination = declination(day_of_year(t));
  s.hour_angle = hour_angle(t, site);
  s.zenith_angle = zenith_angle(site.latitude, s.declination, s.hour_angle);
  s.elevation_angle = 90.0 - s.zenith_angle;
  s.clear_sky_ghi = clear_sky_ghi(s.elevation_angle, site);
  s.is_night = s.zenith_angle >= 90.0 || s.clear_sky_ghi <= 0.0;
  return s;
}

}  // namespace pissm::solar
