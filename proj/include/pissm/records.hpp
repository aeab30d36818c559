/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pissm/bytes.hpp"
#include "pissm/hankel.hpp"
#include "pissm/time.hpp"

namespace pissm {

inline constexpr std::size_t kFeatureCount = 15;

/// Canonical input feature order.  Serialized datasets and model files
/// depend on it; GHI itself is the target and never an input.
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "dni",     "dhi",     "ghi_clear", "kt",       "sza",
    "t2m",     "rh2m",    "ws10m",     "ps",       "sin_month",
    "cos_month", "sin_day", "cos_day",  "sin_hour", "cos_hour"};

enum class Quality : std::uint8_t { observed = 0, interpolated = 1, missing = 2 };

/// One hourly observation row: raw meteorology plus derived physics fields.
struct MeteoRecord {
  HourStamp timestamp{0};
  double ghi = 0.0;    // W/m^2, the forecast target
  double dni = 0.0;    // W/m^2
  double dhi = 0.0;    // W/m^2
  double t2m = 0.0;    // deg C
  double rh2m = 0.0;   // %
  double ws10m = 0.0;  // m/s
  double ps = 0.0;     // kPa
  // derived
  double ghi_clear = 0.0;  // W/m^2
  double kt = 0.0;
  double sza = 0.0;  // degrees
  double sin_month = 0.0, cos_month = 1.0;
  double sin_day = 0.0, cos_day = 1.0;
  double sin_hour = 0.0, cos_hour = 1.0;
  bool is_night = false;
  Quality quality = Quality::observed;
};

inline std::array<double, kFeatureCount> feature_vector(const MeteoRecord& r) {
  return {r.dni,       r.dhi,     r.ghi_clear, r.kt,       r.sza,
          r.t2m,       r.rh2m,    r.ws10m,     r.ps,       r.sin_month,
          r.cos_month, r.sin_day, r.cos_day,   r.sin_hour, r.cos_hour};
}

/// Frozen normalization parameters: per-feature z-score for inputs, min-max
/// for the target.  Fit on the training split only, then applied everywhere.
struct NormStats {
  std::array<double, kFeatureCount> feature_mean{};
  std::array<double, kFeatureCount> feature_std{};
  double target_min = 0.0;
  double target_max = 1.0;
  std::string fitted_on = "train";

  void validate() const {
    for (double s : feature_std)
      if (!(s > 0.0)) throw std::domain_error("norm stats: non-positive std");
    if (!(target_max > target_min))
      throw std::domain_error("norm stats: target range empty");
  }

  double normalize_feature(std::size_t i, double x) const {
    return (x - feature_mean[i]) / feature_std[i];
  }
  double denormalize_feature(std::size_t i, double z) const {
    return z * feature_std[i] + feature_mean[i];
  }
  double normalize_target(double y) const {
    return (y - target_min) / (target_max - target_min);
  }
  double denormalize_target(double z) const {
    return z * (target_max - target_min) + target_min;
  }

  void write(ByteWriter& w) const {
    for (double m : feature_mean) w.put_f64(m);
    for (double s : feature_std) w.put_f64(s);
    w.put_f64(target_min);
    w.put_f64(target_max);
  }

  static NormStats read(ByteReader& r) {
    NormStats s;
    for (double& m : s.feature_mean) m = r.get_f64();
    for (double& v : s.feature_std) v = r.get_f64();
    s.target_min = r.get_f64();
    s.target_max = r.get_f64();
    s.fitted_on = "train";
    return s;
  }
};

/// Chronological split policy: the development era is divided 70/15/15 in
/// time order; the stress era is held out whole; listed years are dropped.
struct SplitSpec {
  double train_frac = 0.70;
  double val_frac = 0.15;
  double test_frac = 0.15;
  int dev_start_year = 2015;
  int dev_end_year = 2019;
  int stress_start_year = 2020;
  int stress_end_year = 2024;
  std::vector<int> excluded_years;

  void validate() const {
    if (train_frac <= 0.0 || val_frac <= 0.0 || test_frac <= 0.0)
      throw std::domain_error("split: fractions must be positive");
    const double sum = train_frac + val_frac + test_frac;
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::domain_error("split: fractions must sum to 1");
    if (dev_end_year < dev_start_year || stress_end_year < stress_start_year)
      throw std::domain_error("split: year range reversed");
  }

  bool year_excluded(int year) const {
    for (int y : excluded_years)
      if (y == year) return true;
    return false;
  }
};

/// One forecast step, fully materialized: the Hankel-unrolled input window,
/// the two gate scalars, and the normalized target.
struct TrainingSample {
  std::vector<float> hankel_input;  // (rows, subwindow * features) row-major
  float gate_sza = 0.0f;            // SZA at t+1, scaled to [0, 1]
  float gate_kt = 0.0f;             // KT at t, scaled to [0, 1]
  float target = 0.0f;              // normalized GHI at t+1
  float target_raw = 0.0f;          // W/m^2
  bool target_is_night = false;
  HourStamp target_time{0};
};

/// Compact sample storage: one normalized feature matrix for the whole
/// timeline plus per-sample metadata.  Hankel windows materialize on demand
/// (they overlap almost entirely, so storing them per sample would blow the
/// footprint up by the window size).
struct SampleSet {
  std::size_t window = 24;
  std::size_t subwindow = 5;
  std::vector<float> features;  // (n_records, kFeatureCount) row-major

  struct Meta {
    std::uint32_t end_index;  // feature row of the last observed hour t
    float gate_sza;
    float gate_kt;
    float target;
    float target_raw;
    bool target_is_night;
    HourStamp target_time;
  };
  std::vector<Meta> samples;

  std::size_t size() const { return samples.size(); }

  hankel::HankelSpec hankel_spec() const {
    return hankel::HankelSpec{window, subwindow, kFeatureCount};
  }

  std::size_t input_rows() const { return window - subwindow + 1; }
  std::size_t input_cols() const { return subwindow * kFeatureCount; }

  /// Writes sample i's (rows, cols) Hankel input into out.
  void unroll_input(std::size_t i, std::span<float> out) const {
    const Meta& m = samples.at(i);
    if (m.end_index + 1 < window || (m.end_index + 1) * kFeatureCount > features.size())
      throw std::out_of_range("sample set: window out of range");
    const std::size_t first = (m.end_index + 1 - window) * kFeatureCount;
    hankel::unroll_into(
        std::span<const float>(features.data() + first, window * kFeatureCount),
        hankel_spec(), out);
  }

  TrainingSample materialize(std::size_t i) const {
    const Meta& m = samples.at(i);
    TrainingSample s;
    s.hankel_input.resize(input_rows() * input_cols());
    unroll_input(i, s.hankel_input);
    s.gate_sza = m.gate_sza;
    s.gate_kt = m.gate_kt;
    s.target = m.target;
    s.target_raw = m.target_raw;
    s.target_is_night = m.target_is_night;
    s.target_time = m.target_time;
    return s;
  }
};

}  // namespace pissm
