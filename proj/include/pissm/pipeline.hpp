/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pissm/bytes.hpp"
#include "pissm/csv.hpp"
#include "pissm/net.hpp"
#include "pissm/records.hpp"
#include "pissm/solar.hpp"
#include "pissm/time.hpp"

namespace pissm::pipeline {

/// Sentinel used by upstream data products for absent hourly values.
inline constexpr double kMissingSentinel = -999.0;

/// One ingested hour before gridding: any field may be absent.
struct RawRow {
  HourStamp time{0};
  std::optional<double> ghi, dni, dhi, t2m, rh2m, ws10m, ps;
};

inline constexpr std::array<const char*, 8> kCsvHeader = {
    "timestamp", "ghi", "dni", "dhi", "t2m", "rh2m", "ws10m", "ps"};

namespace detail {

inline std::optional<double> parse_value(const std::string& field) {
  if (field.empty()) return std::nullopt;
  std::size_t used = 0;
  const double v = std::stod(field, &used);
  if (used != field.size())
    throw std::runtime_error("ingest: malformed number '" + field + "'");
  if (v == kMissingSentinel) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses the canonical hourly CSV.  The header must match the schema
/// exactly; a reordered or renamed column means the file is not ours and
/// silently remapping it would corrupt every feature downstream.
inline std::vector<RawRow> ingest_csv(std::istream& in) {
  const csv::Table t = csv::parse(in);
  if (t.header.size() != kCsvHeader.size())
    throw std::runtime_error("ingest: expected 8 columns, got " +
                             std::to_string(t.header.size()));
  for (std::size_t i = 0; i < kCsvHeader.size(); ++i)
    if (t.header[i] != kCsvHeader[i])
      throw std::runtime_error("ingest: column " + std::to_string(i) +
                               " is '" + t.header[i] + "', expected '" +
                               kCsvHeader[i] + "'");
  std::vector<RawRow> rows;
  rows.reserve(t.rows.size());
  for (const auto& fields : t.rows) {
    if (fields.size() != kCsvHeader.size())
      throw std::runtime_error("ingest: row has " +
                               std::to_string(fields.size()) + " fields");
    RawRow r;
    r.time = parse_timestamp(fields[0]);
    r.ghi = detail::parse_value(fields[1]);
    r.dni = detail::parse_value(fields[2]);
    r.dhi = detail::parse_value(fields[3]);
    r.t2m = detail::parse_value(fields[4]);
    r.rh2m = detail::parse_value(fields[5]);
    r.ws10m = detail::parse_value(fields[6]);
    r.ps = detail::parse_value(fields[7]);
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<RawRow> ingest_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingest: cannot open " + path);
  return ingest_csv(in);
}

/// Canonical CSV emission; missing fields become empty cells.
inline std::string to_csv(std::span<const RawRow> rows) {
  std::string out = "timestamp,ghi,dni,dhi,t2m,rh2m,ws10m,ps\n";
  auto cell = [](const std::optional<double>& v) -> std::string {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", *v);
    return buf;
  };
  for (const RawRow& r : rows) {
    out += format_iso8601(r.time);
    for (const auto* f : {&r.ghi, &r.dni, &r.dhi, &r.t2m, &r.rh2m, &r.ws10m,
                          &r.ps}) {
      out += ',';
      out += cell(*f);
    }
    out += '\n';
  }
  return out;
}

inline void write_csv(const std::string& path, std::span<const RawRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << to_csv(rows);
}

/// One hour on the continuous grid produced by clean_align.
struct AlignedRow {
  HourStamp time{0};
  std::optional<double> ghi, dni, dhi, t2m, rh2m, ws10m, ps;
  Quality quality = Quality::observed;
};

namespace detail {

using FieldPtr = std::optional<double> AlignedRow::*;

inline constexpr std::array<FieldPtr, 7> kFields = {
    &AlignedRow::ghi,  &AlignedRow::dni,   &AlignedRow::dhi, &AlignedRow::t2m,
    &AlignedRow::rh2m, &AlignedRow::ws10m, &AlignedRow::ps};

/// Fills interior runs of absent values no longer than max_gap by linear
/// interpolation between the bracketing observations.  Runs touching either
/// end of the grid have only one anchor and stay absent.
inline void interpolate_field(std::vector<AlignedRow>& rows, FieldPtr f,
                              std::size_t max_gap,
                              std::vector<bool>& filled_any) {
  const std::size_t n = rows.size();
  std::size_t i = 0;
  while (i < n) {
    if ((rows[i].*f).has_value()) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && !(rows[j].*f).has_value()) ++j;
    const std::size_t gap = j - i;
    if (i > 0 && j < n && gap <= max_gap) {
      const double lo = *(rows[i - 1].*f);
      const double hi = *(rows[j].*f);
      for (std::size_t k = i; k < j; ++k) {
        const double frac =
            static_cast<double>(k - i + 1) / static_cast<double>(gap + 1);
        rows[k].*f = lo + (hi - lo) * frac;
        filled_any[k] = true;
      }
    }
    i = j;
  }
}

}  // namespace detail

/// Sorts, deduplicates (first occurrence wins), expands to a continuous
/// hourly grid, drops negative irradiance as missing, and linearly
/// interpolates interior gaps of at most max_gap hours per field.  Rows with
/// any field still absent are flagged missing; rows that received any
/// interpolated value are flagged interpolated.
inline std::vector<AlignedRow> clean_align(std::vector<RawRow> rows,
                                           std::size_t max_gap = 3) {
  if (rows.empty()) return {};
  std::stable_sort(rows.begin(), rows.end(),
                   [](const RawRow& a, const RawRow& b) { return a.time < b.time; });

  const HourStamp first = rows.front().time;
  const HourStamp last = rows.back().time;
  const std::size_t n = static_cast<std::size_t>((last - first)) + 1;
  std::vector<AlignedRow> grid(n);
  for (std::size_t i = 0; i < n; ++i)
    grid[i].time = first + static_cast<std::int64_t>(i);

  std::vector<bool> seen(n, false);
  for (const RawRow& r : rows) {
    const std::size_t i = static_cast<std::size_t>(r.time - first);
    if (seen[i]) continue;
    seen[i] = true;
    AlignedRow& g = grid[i];
    g.ghi = r.ghi;
    g.dni = r.dni;
    g.dhi = r.dhi;
    g.t2m = r.t2m;
    g.rh2m = r.rh2m;
    g.ws10m = r.ws10m;
    g.ps = r.ps;
  }

  // A negative reading on any irradiance channel is sensor error, not data.
  for (AlignedRow& g : grid) {
    if (g.ghi && *g.ghi < 0.0) g.ghi.reset();
    if (g.dni && *g.dni < 0.0) g.dni.reset();
    if (g.dhi && *g.dhi < 0.0) g.dhi.reset();
  }

  std::vector<bool> filled(n, false);
  for (detail::FieldPtr f : detail::kFields)
    detail::interpolate_field(grid, f, max_gap, filled);

  for (std::size_t i = 0; i < n; ++i) {
    bool absent = false;
    for (detail::FieldPtr f : detail::kFields)
      if (!(grid[i].*f).has_value()) absent = true;
    grid[i].quality = absent          ? Quality::missing
                      : filled[i]     ? Quality::interpolated
                                      : Quality::observed;
  }
  return grid;
}

/// Zeroes measured irradiance on night records.  Values observed below the
/// horizon are sensor noise; the model must see exact zeros there.
inline void apply_night_mask(MeteoRecord& r) {
  if (!r.is_night) return;
  r.ghi = 0.0;
  r.dni = 0.0;
  r.dhi = 0.0;
}

/// Computes solar geometry, masks night irradiance, then derives the
/// clearness index from the masked GHI so night hours get kt = 0 instead of
/// a 0/0 artifact.  Cyclical encodings phase so the first hour, first day,
/// and first month of a period land on (sin, cos) = (0, 1).
inline std::vector<MeteoRecord> derive_features(
    const std::vector<AlignedRow>& rows, const solar::SiteConfig& site) {
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  std::vector<MeteoRecord> out;
  out.reserve(rows.size());
  for (const AlignedRow& a : rows) {
    MeteoRecord r;
    r.timestamp = a.time;
    r.quality = a.quality;
    r.ghi = a.ghi.value_or(kNaN);
    r.dni = a.dni.value_or(kNaN);
    r.dhi = a.dhi.value_or(kNaN);
    r.t2m = a.t2m.value_or(kNaN);
    r.rh2m = a.rh2m.value_or(kNaN);
    r.ws10m = a.ws10m.value_or(kNaN);
    r.ps = a.ps.value_or(kNaN);

    const solar::SolarState s = solar::solar_state(a.time, site);
    r.sza = s.zenith_angle;
    r.ghi_clear = s.clear_sky_ghi;
    r.is_night = s.is_night;

    apply_night_mask(r);
    r.kt = std::isnan(r.ghi) ? kNaN
                             : solar::clearness_index(r.ghi, r.ghi_clear, site);

    auto [sh, ch] = solar::cyclical_encode(hour_of_day(a.time), 24.0);
    r.sin_hour = sh;
    r.cos_hour = ch;
    auto [sm, cm] = solar::cyclical_encode(month_of(a.time) - 1, 12.0);
    r.sin_month = sm;
    r.cos_month = cm;
    // 365.25 amortizes leap years; day 1 maps to phase zero.
    auto [sd, cd] = solar::cyclical_encode(day_of_year(a.time) - 1, 365.25);
    r.sin_day = sd;
    r.cos_day = cd;

    out.push_back(r);
  }
  return out;
}

struct Splits {
  std::vector<MeteoRecord> train, val, test, stress;
};

/// Divides the development era 70/15/15 by record count in time order and
/// holds the stress era out whole.  Excluded years vanish from both eras.
/// Records outside either era are dropped.
inline Splits chronological_split(const std::vector<MeteoRecord>& records,
                                  const SplitSpec& spec) {
  spec.validate();
  std::vector<MeteoRecord> dev, stress;
  for (const MeteoRecord& r : records) {
    const int y = year_of(r.timestamp);
    if (spec.year_excluded(y)) continue;
    if (y >= spec.dev_start_year && y <= spec.dev_end_year)
      dev.push_back(r);
    else if (y >= spec.stress_start_year && y <= spec.stress_end_year)
      stress.push_back(r);
  }
  for (std::size_t i = 1; i < dev.size(); ++i)
    if (!(dev[i - 1].timestamp < dev[i].timestamp))
      throw std::invalid_argument("split: records must be in time order");

  const std::size_t n = dev.size();
  const auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * spec.train_frac));
  const auto n_val = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * spec.val_frac));

  Splits s;
  s.train.assign(dev.begin(), dev.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(dev.begin() + static_cast<std::ptrdiff_t>(n_train),
               dev.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(dev.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                dev.end());
  s.stress = std::move(stress);
  return s;
}

/// Fits normalization on the training split alone.  Validation, test, and
/// stress data never touch these statistics; the leakage test mutates them
/// and asserts the fit is bit-identical.
inline NormStats fit_norm_stats(const std::vector<MeteoRecord>& train) {
  NormStats st;
  st.fitted_on = "train";
  std::array<double, kFeatureCount> sum{};
  std::array<double, kFeatureCount> sumsq{};
  double count = 0.0;
  double tmin = std::numeric_limits<double>::infinity();
  double tmax = -std::numeric_limits<double>::infinity();
  for (const MeteoRecord& r : train) {
    if (r.quality == Quality::missing) continue;
    const auto f = feature_vector(r);
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      sum[i] += f[i];
      sumsq[i] += f[i] * f[i];
    }
    tmin = std::min(tmin, r.ghi);
    tmax = std::max(tmax, r.ghi);
    count += 1.0;
  }
  if (count == 0.0)
    throw std::invalid_argument("norm stats: no clean training records");
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    st.feature_mean[i] = sum[i] / count;
    const double var =
        std::max(0.0, sumsq[i] / count - st.feature_mean[i] * st.feature_mean[i]);
    // Constant features (population variance zero) get a floor instead of a
    // divide-by-zero; their z-scores collapse to zero, which is correct.
    st.feature_std[i] = std::max(std::sqrt(var), 1e-8);
  }
  st.target_min = tmin;
  st.target_max = tmax;
  if (!(st.target_max > st.target_min)) st.target_max = st.target_min + 1.0;
  return st;
}

/// Builds the compact sample store for one split.  Every record lands in the
/// normalized feature matrix; a sample exists for each position where the
/// trailing `window` hours and the target hour are all clean.
inline SampleSet build_samples(const std::vector<MeteoRecord>& records,
                               const NormStats& stats, std::size_t window = 24,
                               std::size_t subwindow = 5) {
  if (subwindow == 0 || subwindow > window)
    throw std::invalid_argument("samples: subwindow must be in [1, window]");
  stats.validate();

  SampleSet set;
  set.window = window;
  set.subwindow = subwindow;
  const std::size_t n = records.size();
  set.features.resize(n * kFeatureCount);
  for (std::size_t t = 0; t < n; ++t) {
    const auto f = feature_vector(records[t]);
    for (std::size_t i = 0; i < kFeatureCount; ++i)
      set.features[t * kFeatureCount + i] =
          static_cast<float>(stats.normalize_feature(i, f[i]));
  }

  std::size_t clean_run = 0;
  for (std::size_t t = 0; t < n; ++t) {
    clean_run = records[t].quality == Quality::missing ? 0 : clean_run + 1;
    if (t + 1 >= n) break;
    const MeteoRecord& next = records[t + 1];
    if (clean_run < window || next.quality == Quality::missing) continue;

    const net::GateInputs g = net::make_gate_inputs(next.sza, records[t].kt);
    SampleSet::Meta m;
    m.end_index = static_cast<std::uint32_t>(t);
    m.gate_sza = static_cast<float>(g.sza_scaled);
    m.gate_kt = static_cast<float>(g.kt_scaled);
    m.target = static_cast<float>(stats.normalize_target(next.ghi));
    m.target_raw = static_cast<float>(next.ghi);
    m.target_is_night = next.is_night;
    m.target_time = next.timestamp;
    set.samples.push_back(m);
  }
  return set;
}

inline constexpr std::uint16_t kDatasetFormatVersion = 1;

/// A fully prepared dataset: the split policy and normalization that
/// produced it travel with the samples so training and evaluation can never
/// drift from preparation.
struct PreparedDataset {
  SplitSpec split;
  NormStats stats;
  SampleSet train, val, test, stress;
};

namespace detail {

inline void write_split_spec(ByteWriter& w, const SplitSpec& s) {
  w.put_f64(s.train_frac);
  w.put_f64(s.val_frac);
  w.put_f64(s.test_frac);
  w.put_u32(static_cast<std::uint32_t>(s.dev_start_year));
  w.put_u32(static_cast<std::uint32_t>(s.dev_end_year));
  w.put_u32(static_cast<std::uint32_t>(s.stress_start_year));
  w.put_u32(static_cast<std::uint32_t>(s.stress_end_year));
  w.put_u32(static_cast<std::uint32_t>(s.excluded_years.size()));
  for (int y : s.excluded_years) w.put_u32(static_cast<std::uint32_t>(y));
}

inline SplitSpec read_split_spec(ByteReader& r) {
  SplitSpec s;
  s.train_frac = r.get_f64();
  s.val_frac = r.get_f64();
  s.test_frac = r.get_f64();
  s.dev_start_year = static_cast<int>(r.get_u32());
  s.dev_end_year = static_cast<int>(r.get_u32());
  s.stress_start_year = static_cast<int>(r.get_u32());
  s.stress_end_year = static_cast<int>(r.get_u32());
  const std::uint32_t n = r.get_u32();
  s.excluded_years.resize(n);
  for (std::uint32_t i = 0; i < n; ++i)
    s.excluded_years[i] = static_cast<int>(r.get_u32());
  return s;
}

inline void write_sample_set(ByteWriter& w, const SampleSet& s) {
  w.put_u32(static_cast<std::uint32_t>(s.window));
  w.put_u32(static_cast<std::uint32_t>(s.subwindow));
  w.put_u32(static_cast<std::uint32_t>(s.features.size() / kFeatureCount));
  for (float f : s.features) w.put_f32(f);
  w.put_u32(static_cast<std::uint32_t>(s.samples.size()));
  for (const SampleSet::Meta& m : s.samples) {
    w.put_u32(m.end_index);
    w.put_f32(m.gate_sza);
    w.put_f32(m.gate_kt);
    w.put_f32(m.target);
    w.put_f32(m.target_raw);
    w.put_u8(m.target_is_night ? 1 : 0);
    w.put_u32(static_cast<std::uint32_t>(m.target_time.hours &
                                         0xffffffffull));
    w.put_u32(static_cast<std::uint32_t>(
        (static_cast<std::uint64_t>(m.target_time.hours) >> 32) &
        0xffffffffull));
  }
}

inline SampleSet read_sample_set(ByteReader& r) {
  SampleSet s;
  s.window = r.get_u32();
  s.subwindow = r.get_u32();
  if (s.subwindow == 0 || s.subwindow > s.window)
    throw SerializationError("dataset: invalid hankel shape");
  const std::uint32_t n_records = r.get_u32();
  s.features.resize(static_cast<std::size_t>(n_records) * kFeatureCount);
  for (float& f : s.features) f = r.get_f32();
  const std::uint32_t n_samples = r.get_u32();
  s.samples.resize(n_samples);
  for (SampleSet::Meta& m : s.samples) {
    m.end_index = r.get_u32();
    if (m.end_index >= n_records || m.end_index + 1 < s.window)
      throw SerializationError("dataset: sample index out of range");
    m.gate_sza = r.get_f32();
    m.gate_kt = r.get_f32();
    m.target = r.get_f32();
    m.target_raw = r.get_f32();
    m.target_is_night = r.get_u8() != 0;
    const std::uint64_t lo = r.get_u32();
    const std::uint64_t hi = r.get_u32();
    m.target_time.hours = static_cast<std::int64_t>(lo | (hi << 32));
  }
  return s;
}

}  // namespace detail

inline std::vector<unsigned char> serialize_dataset(const PreparedDataset& d) {
  ByteWriter w;
  w.put_u8('P');
  w.put_u8('I');
  w.put_u8('S');
  w.put_u8('D');
  w.put_u16(kDatasetFormatVersion);
  detail::write_split_spec(w, d.split);
  d.stats.write(w);
  detail::write_sample_set(w, d.train);
  detail::write_sample_set(w, d.val);
  detail::write_sample_set(w, d.test);
  detail::write_sample_set(w, d.stress);
  w.put_crc_trailer();
  return w.take();
}

inline PreparedDataset deserialize_dataset(
    std::span<const unsigned char> bytes) {
  ByteReader r(bytes);
  r.check_crc_trailer();
  if (r.get_u8() != 'P' || r.get_u8() != 'I' || r.get_u8() != 'S' ||
      r.get_u8() != 'D')
    throw SerializationError("dataset: bad magic");
  const std::uint16_t version = r.get_u16();
  if (version != kDatasetFormatVersion)
    throw SerializationError("dataset: unsupported version " +
                             std::to_string(version));
  PreparedDataset d;
  d.split = detail::read_split_spec(r);
  d.split.validate();
  d.stats = NormStats::read(r);
  d.stats.validate();
  d.train = detail::read_sample_set(r);
  d.val = detail::read_sample_set(r);
  d.test = detail::read_sample_set(r);
  d.stress = detail::read_sample_set(r);
  if (r.remaining() != sizeof(std::uint32_t))
    throw SerializationError("dataset: trailing garbage");
  return d;
}

inline void save_dataset(const std::string& path, const PreparedDataset& d) {
  write_file_bytes(path, serialize_dataset(d));
}

inline PreparedDataset load_dataset(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return deserialize_dataset(bytes);
}

/// End-to-end preparation: grid the raw rows, derive physics features,
/// split, fit normalization on train, and build all four sample sets.
inline PreparedDataset prepare(std::vector<RawRow> raw,
                               const solar::SiteConfig& site,
                               const SplitSpec& split, std::size_t window = 24,
                               std::size_t subwindow = 5,
                               std::size_t max_gap = 3) {
  const auto aligned = clean_align(std::move(raw), max_gap);
  const auto records = derive_features(aligned, site);
  const Splits s = chronological_split(records, split);
  PreparedDataset d;
  d.split = split;
  d.stats = fit_norm_stats(s.train);
  d.train = build_samples(s.train, d.stats, window, subwindow);
  d.val = build_samples(s.val, d.stats, window, subwindow);
  d.test = build_samples(s.test, d.stats, window, subwindow);
  d.stress = build_samples(s.stress, d.stats, window, subwindow);
  return d;
}

}  // namespace pissm::pipeline
