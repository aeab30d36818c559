/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "pissm/pipeline.hpp"
#include "pissm/rng.hpp"
#include "pissm/solar.hpp"
#include "pissm/time.hpp"

namespace pissm::synthetic {

/// Noiseless clear-sky hours: GHI is exactly the deterministic clear-sky
/// curve, so irradiance is a pure function of solar geometry and a model
/// that reads the geometry features can fit it essentially perfectly.
inline std::vector<pipeline::RawRow> clear_sky_rows(
    HourStamp start, std::size_t n, const solar::SiteConfig& site) {
  std::vector<pipeline::RawRow> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const HourStamp t = start + static_cast<std::int64_t>(i);
    const solar::SolarState s = solar::solar_state(t, site);
    pipeline::RawRow r;
    r.time = t;
    r.ghi = s.clear_sky_ghi;
    r.dni = s.clear_sky_ghi * 0.8;
    r.dhi = s.clear_sky_ghi * 0.2;
    const double day_phase =
        2.0 * std::numbers::pi * (hour_of_day(t) - 9) / 24.0;
    r.t2m = 25.0 + 8.0 * std::sin(day_phase);
    r.rh2m = 40.0 - 10.0 * std::sin(day_phase);
    r.ws10m = 3.0;
    r.ps = 97.5;
    rows.push_back(r);
  }
  return rows;
}

struct CloudModel {
  double mean_kt = 0.72;   // long-run clearness
  double ar = 0.92;        // hour-to-hour persistence
  double sigma = 0.07;     // innovation scale
  double kt_floor = 0.05;  // heavy overcast
  double kt_ceil = 1.05;   // slight cloud-edge enhancement
};

/// Plausible weather: clear-sky curve modulated by an AR(1) cloudiness
/// process, with diurnal temperature/humidity cycles and mild noise on the
/// rest.  Fully determined by the seed.
inline std::vector<pipeline::RawRow> cloudy_rows(HourStamp start,
                                                 std::size_t n,
                                                 const solar::SiteConfig& site,
                                                 std::uint64_t seed,
                                                 const CloudModel& cm = {}) {
  std::vector<pipeline::RawRow> rows;
  rows.reserve(n);
  Rng rng(seed);
  double kt = cm.mean_kt;
  for (std::size_t i = 0; i < n; ++i) {
    const HourStamp t = start + static_cast<std::int64_t>(i);
    const solar::SolarState s = solar::solar_state(t, site);
    kt = cm.mean_kt + cm.ar * (kt - cm.mean_kt) + cm.sigma * rng.normal();
    kt = std::clamp(kt, cm.kt_floor, cm.kt_ceil);

    pipeline::RawRow r;
    r.time = t;
    const double ghi = s.clear_sky_ghi * kt;
    r.ghi = ghi;
    // beam collapses faster than diffuse as clouds thicken
    const double beam_frac = std::clamp(1.25 * kt - 0.25, 0.0, 0.85);
    r.dni = ghi * beam_frac;
    r.dhi = ghi * (1.0 - beam_frac);

    const double day_phase =
        2.0 * std::numbers::pi * (hour_of_day(t) - 9) / 24.0;
    const double season_phase =
        2.0 * std::numbers::pi * (day_of_year(t) - 15) / 365.25;
    r.t2m = 24.0 + 6.0 * std::sin(day_phase) + 5.0 * std::cos(season_phase) +
            0.4 * rng.normal();
    r.rh2m = std::clamp(45.0 - 12.0 * std::sin(day_phase) - 15.0 * (kt - 0.7) +
                            2.0 * rng.normal(),
                        3.0, 100.0);
    r.ws10m = std::max(0.2, 3.0 + 1.2 * std::sin(day_phase) + rng.normal());
    r.ps = 97.5 + 0.3 * std::cos(season_phase) + 0.05 * rng.normal();
    rows.push_back(r);
  }
  return rows;
}

}  // namespace pissm::synthetic
