/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <sstream>

#include "pissm/pipeline.hpp"
#include "pissm/rng.hpp"

using namespace pissm;
using pipeline::AlignedRow;
using pipeline::RawRow;

namespace {

HourStamp hs(int y, int mo, int d, int h) {
  return from_civil(CivilTime{y, mo, d, h});
}

RawRow full_row(HourStamp t, double ghi = 100.0) {
  RawRow r;
  r.time = t;
  r.ghi = ghi;
  r.dni = 50.0;
  r.dhi = 30.0;
  r.t2m = 25.0;
  r.rh2m = 40.0;
  r.ws10m = 3.0;
  r.ps = 101.0;
  return r;
}

/// Deterministic plausible weather starting at `start`, hourly.
std::vector<RawRow> synth_rows(HourStamp start, std::size_t n, uint64_t seed) {
  const solar::SiteConfig site;
  Rng rng(seed);
  std::vector<RawRow> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const HourStamp t = start + static_cast<std::int64_t>(i);
    const solar::SolarState s = solar::solar_state(t, site);
    RawRow r;
    r.time = t;
    const double cloud = 0.6 + 0.4 * rng.uniform();
    r.ghi = std::max(0.0, s.clear_sky_ghi * cloud);
    r.dni = *r.ghi * 0.7;
    r.dhi = *r.ghi * 0.3;
    r.t2m = 20.0 + 10.0 * rng.uniform();
    r.rh2m = 30.0 + 40.0 * rng.uniform();
    r.ws10m = 1.0 + 5.0 * rng.uniform();
    r.ps = 100.0 + rng.uniform();
    rows.push_back(r);
  }
  return rows;
}

const char* kHeader = "timestamp,ghi,dni,dhi,t2m,rh2m,ws10m,ps\n";

}  // namespace

TEST_CASE("csv ingest maps sentinels and blanks to missing", "[pipeline]") {
  std::istringstream in(std::string(kHeader) +
                        "2015-06-01T00:00:00Z,-999,50,30,25,40,3,101\n"
                        "2015-06-01T01:00:00Z,120,,30,25,40,3,101\n"
                        "2015-06-01T02:00:00Z,130,55,30,-999.0,40,3,101\n");
  const auto rows = pipeline::ingest_csv(in);
  REQUIRE(rows.size() == 3);
  CHECK_FALSE(rows[0].ghi.has_value());
  CHECK(rows[0].dni == 50.0);
  CHECK_FALSE(rows[1].dni.has_value());
  CHECK(rows[1].ghi == 120.0);
  CHECK_FALSE(rows[2].t2m.has_value());
  CHECK(rows[0].time == hs(2015, 6, 1, 0));
  CHECK(rows[2].time - rows[0].time == 2);
}

TEST_CASE("csv ingest rejects schema drift", "[pipeline]") {
  SECTION("renamed column") {
    std::istringstream in("timestamp,ghi,dni,dhi,temp,rh2m,ws10m,ps\n");
    CHECK_THROWS_AS(pipeline::ingest_csv(in), std::runtime_error);
  }
  SECTION("reordered columns") {
    std::istringstream in("timestamp,dni,ghi,dhi,t2m,rh2m,ws10m,ps\n");
    CHECK_THROWS_AS(pipeline::ingest_csv(in), std::runtime_error);
  }
  SECTION("missing column") {
    std::istringstream in("timestamp,ghi,dni,dhi,t2m,rh2m,ws10m\n");
    CHECK_THROWS_AS(pipeline::ingest_csv(in), std::runtime_error);
  }
  SECTION("short row") {
    std::istringstream in(std::string(kHeader) + "2015-06-01T00:00:00Z,1,2\n");
    CHECK_THROWS_AS(pipeline::ingest_csv(in), std::runtime_error);
  }
  SECTION("malformed number") {
    std::istringstream in(std::string(kHeader) +
                          "2015-06-01T00:00:00Z,12x,50,30,25,40,3,101\n");
    CHECK_THROWS_AS(pipeline::ingest_csv(in), std::runtime_error);
  }
}

TEST_CASE("clean_align sorts, deduplicates first-wins, grids hourly",
          "[pipeline]") {
  const HourStamp t0 = hs(2015, 6, 1, 0);
  std::vector<RawRow> rows;
  rows.push_back(full_row(t0 + 2, 300.0));
  rows.push_back(full_row(t0 + 0, 100.0));
  rows.push_back(full_row(t0 + 2, 999.0));  // duplicate, must lose
  rows.push_back(full_row(t0 + 5, 600.0));

  const auto grid = pipeline::clean_align(rows);
  REQUIRE(grid.size() == 6);
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK(grid[i].time == t0 + static_cast<std::int64_t>(i));
  CHECK(grid[0].ghi == 100.0);
  CHECK(grid[2].ghi == 300.0);
  CHECK(grid[5].ghi == 600.0);
  // hours 3..4 were never reported and the bracketing gap is 2 <= 3
  CHECK(grid[3].quality == Quality::interpolated);
  CHECK(grid[4].quality == Quality::interpolated);
  CHECK(grid[1].quality == Quality::interpolated);
}

TEST_CASE("clean_align interpolates short gaps linearly", "[pipeline]") {
  const HourStamp t0 = hs(2015, 6, 1, 0);
  std::vector<RawRow> rows;
  rows.push_back(full_row(t0 + 0, 100.0));
  RawRow mid = full_row(t0 + 1);
  mid.ghi.reset();
  rows.push_back(mid);
  rows.push_back(full_row(t0 + 2, 300.0));

  const auto grid = pipeline::clean_align(rows);
  REQUIRE(grid.size() == 3);
  REQUIRE(grid[1].ghi.has_value());
  CHECK(*grid[1].ghi == Catch::Approx(200.0).margin(1e-12));
  CHECK(grid[1].quality == Quality::interpolated);
  CHECK(grid[0].quality == Quality::observed);
  CHECK(grid[2].quality == Quality::observed);
}

TEST_CASE("clean_align leaves long gaps missing", "[pipeline]") {
  const HourStamp t0 = hs(2015, 6, 1, 0);

  SECTION("gap of four exceeds max_gap 3") {
    std::vector<RawRow> rows;
    rows.push_back(full_row(t0 + 0, 100.0));
    rows.push_back(full_row(t0 + 5, 200.0));
    const auto grid = pipeline::clean_align(rows);
    REQUIRE(grid.size() == 6);
    for (std::size_t i = 1; i <= 4; ++i) {
      CHECK_FALSE(grid[i].ghi.has_value());
      CHECK(grid[i].quality == Quality::missing);
    }
  }
  SECTION("ten hour outage stays missing") {
    std::vector<RawRow> rows;
    rows.push_back(full_row(t0 + 0, 100.0));
    rows.push_back(full_row(t0 + 11, 200.0));
    const auto grid = pipeline::clean_align(rows);
    REQUIRE(grid.size() == 12);
    for (std::size_t i = 1; i <= 10; ++i)
      CHECK(grid[i].quality == Quality::missing);
  }
  SECTION("boundary runs have one anchor and stay missing") {
    std::vector<RawRow> rows;
    RawRow head = full_row(t0 + 0);
    head.ghi.reset();
    rows.push_back(head);
    rows.push_back(full_row(t0 + 1, 100.0));
    const auto grid = pipeline::clean_align(rows);
    CHECK(grid[0].quality == Quality::missing);
    CHECK(grid[1].quality == Quality::observed);
  }
  SECTION("tunable max_gap") {
    std::vector<RawRow> rows;
    rows.push_back(full_row(t0 + 0, 100.0));
    rows.push_back(full_row(t0 + 5, 600.0));
    const auto grid = pipeline::clean_align(rows, 4);
    for (std::size_t i = 1; i <= 4; ++i) {
      REQUIRE(grid[i].ghi.has_value());
      CHECK(*grid[i].ghi ==
            Catch::Approx(100.0 + 100.0 * static_cast<double>(i)).margin(1e-9));
      CHECK(grid[i].quality == Quality::interpolated);
    }
  }
}

TEST_CASE("clean_align drops negative irradiance", "[pipeline]") {
  const HourStamp t0 = hs(2015, 6, 1, 0);

  SECTION("isolated negative becomes missing") {
    std::vector<RawRow> rows;
    rows.push_back(full_row(t0 + 0, -50.0));
    const auto grid = pipeline::clean_align(rows);
    REQUIRE(grid.size() == 1);
    CHECK_FALSE(grid[0].ghi.has_value());
    CHECK(grid[0].quality == Quality::missing);
  }
  SECTION("bracketed negative interpolates like a gap") {
    std::vector<RawRow> rows;
    rows.push_back(full_row(t0 + 0, 100.0));
    rows.push_back(full_row(t0 + 1, -50.0));
    rows.push_back(full_row(t0 + 2, 300.0));
    const auto grid = pipeline::clean_align(rows);
    CHECK(*grid[1].ghi == Catch::Approx(200.0).margin(1e-12));
    CHECK(grid[1].quality == Quality::interpolated);
  }
  SECTION("negative meteorology is legitimate") {
    std::vector<RawRow> rows;
    RawRow r = full_row(t0 + 0);
    r.t2m = -12.5;
    rows.push_back(r);
    const auto grid = pipeline::clean_align(rows);
    CHECK(grid[0].t2m == -12.5);
    CHECK(grid[0].quality == Quality::observed);
  }
}

TEST_CASE("derive_features zeroes night irradiance and its kt", "[pipeline]") {
  const solar::SiteConfig site;
  // Midnight UTC at a site two hours east of Greenwich is deep night.
  const HourStamp night_t = hs(2015, 6, 1, 0);
  REQUIRE(solar::solar_state(night_t, site).is_night);

  std::vector<AlignedRow> rows(1);
  rows[0].time = night_t;
  rows[0].ghi = 7.0;
  rows[0].dni = 3.0;
  rows[0].dhi = 4.0;
  rows[0].t2m = 20.0;
  rows[0].rh2m = 50.0;
  rows[0].ws10m = 2.0;
  rows[0].ps = 101.0;
  rows[0].quality = Quality::observed;

  const auto recs = pipeline::derive_features(rows, site);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].is_night);
  CHECK(recs[0].ghi == 0.0);
  CHECK(recs[0].dni == 0.0);
  CHECK(recs[0].dhi == 0.0);
  CHECK(recs[0].kt == 0.0);
  CHECK(recs[0].t2m == 20.0);
}

TEST_CASE("derived fixture has zero total night irradiance", "[pipeline]") {
  const solar::SiteConfig site;
  auto raw = synth_rows(hs(2015, 3, 1, 0), 240, 77);
  const auto recs = pipeline::derive_features(pipeline::clean_align(raw), site);
  double night_sum = 0.0;
  std::size_t nights = 0;
  for (const auto& r : recs)
    if (r.is_night) {
      night_sum += r.ghi + r.dni + r.dhi;
      CHECK(r.kt == 0.0);
      ++nights;
    }
  CHECK(nights > 0);
  CHECK(night_sum == 0.0);
}

TEST_CASE("derive_features cyclical phases start at (0, 1)", "[pipeline]") {
  const solar::SiteConfig site;
  std::vector<AlignedRow> rows(1);
  rows[0].time = hs(2015, 1, 1, 0);
  rows[0].ghi = 0.0;
  rows[0].dni = 0.0;
  rows[0].dhi = 0.0;
  rows[0].t2m = 10.0;
  rows[0].rh2m = 50.0;
  rows[0].ws10m = 2.0;
  rows[0].ps = 101.0;

  const auto recs = pipeline::derive_features(rows, site);
  CHECK(recs[0].sin_hour == 0.0);
  CHECK(recs[0].cos_hour == 1.0);
  CHECK(recs[0].sin_month == 0.0);
  CHECK(recs[0].cos_month == 1.0);
  CHECK(recs[0].sin_day == 0.0);
  CHECK(recs[0].cos_day == 1.0);

  std::vector<AlignedRow> noon = rows;
  noon[0].time = hs(2015, 7, 1, 12);
  const auto r12 = pipeline::derive_features(noon, site);
  CHECK(r12[0].sin_hour == Catch::Approx(0.0).margin(1e-12));
  CHECK(r12[0].cos_hour == Catch::Approx(-1.0).margin(1e-12));
}

TEST_CASE("clear conditions give clearness index near one", "[pipeline]") {
  const solar::SiteConfig site;
  const HourStamp day_t = hs(2015, 6, 1, 9);  // near local solar noon
  const solar::SolarState s = solar::solar_state(day_t, site);
  REQUIRE_FALSE(s.is_night);
  REQUIRE(s.clear_sky_ghi > 100.0);

  std::vector<AlignedRow> rows(1);
  rows[0].time = day_t;
  rows[0].ghi = s.clear_sky_ghi;
  rows[0].dni = 500.0;
  rows[0].dhi = 100.0;
  rows[0].t2m = 30.0;
  rows[0].rh2m = 20.0;
  rows[0].ws10m = 3.0;
  rows[0].ps = 101.0;

  const auto recs = pipeline::derive_features(rows, site);
  CHECK(recs[0].kt == Catch::Approx(1.0).margin(1e-6));

  rows[0].ghi = s.clear_sky_ghi * 10.0;
  const auto capped = pipeline::derive_features(rows, site);
  CHECK(capped[0].kt == solar::kKtClip);
}

TEST_CASE("chronological split divides the dev era 70/15/15 by count",
          "[pipeline]") {
  const solar::SiteConfig site;
  // 1000 dev-era records plus 100 stress-era records.  Eras are aligned
  // separately: gridding across the five year hole between them would turn
  // it into millions of missing rows.
  auto dev_recs = pipeline::derive_features(
      pipeline::clean_align(synth_rows(hs(2015, 1, 1, 0), 1000, 5)), site);
  auto stress_recs = pipeline::derive_features(
      pipeline::clean_align(synth_rows(hs(2020, 1, 1, 0), 100, 6)), site);
  std::vector<MeteoRecord> recs = dev_recs;
  recs.insert(recs.end(), stress_recs.begin(), stress_recs.end());

  SplitSpec spec;
  const auto s = pipeline::chronological_split(recs, spec);
  CHECK(s.train.size() == 700);
  CHECK(s.val.size() == 150);
  CHECK(s.test.size() == 150);
  CHECK(s.stress.size() == 100);

  CHECK(s.train.back().timestamp < s.val.front().timestamp);
  CHECK(s.val.back().timestamp < s.test.front().timestamp);
  CHECK(s.test.back().timestamp < s.stress.front().timestamp);
}

TEST_CASE("chronological split drops excluded and out-of-era years",
          "[pipeline]") {
  const solar::SiteConfig site;
  std::vector<MeteoRecord> recs;
  for (int year : {2013, 2015, 2016, 2017, 2020, 2026}) {
    auto r = pipeline::derive_features(
        pipeline::clean_align(synth_rows(hs(year, 1, 1, 0), 10, 9)), site);
    recs.insert(recs.end(), r.begin(), r.end());
  }
  SplitSpec spec;
  spec.excluded_years = {2016};
  const auto s = pipeline::chronological_split(recs, spec);
  // 2013 and 2026 are outside both eras, 2016 is excluded: 20 dev records.
  CHECK(s.train.size() + s.val.size() + s.test.size() == 20);
  CHECK(s.stress.size() == 10);
  for (const auto* split : {&s.train, &s.val, &s.test})
    for (const auto& r : *split) {
      const int y = year_of(r.timestamp);
      CHECK(y != 2016);
      CHECK((y >= 2015 && y <= 2019));
    }
  for (const auto& r : s.stress) CHECK(year_of(r.timestamp) == 2020);

  SECTION("disordered input is rejected") {
    // both swapped records are inside the dev era and survive filtering
    std::swap(recs[10], recs[30]);
    CHECK_THROWS_AS(pipeline::chronological_split(recs, spec),
                    std::invalid_argument);
  }
}

TEST_CASE("fit_norm_stats matches the population formula", "[pipeline]") {
  std::vector<MeteoRecord> train(3);
  for (std::size_t i = 0; i < 3; ++i) {
    auto& r = train[i];
    r.timestamp = hs(2015, 1, 1, static_cast<int>(i));
    r.t2m = static_cast<double>(i + 1);  // 1, 2, 3
    r.ghi = 250.0 * static_cast<double>(i);  // 0, 250, 500
    r.ps = 2.0;  // exactly constant
    r.quality = Quality::observed;
  }
  const NormStats st = pipeline::fit_norm_stats(train);

  const std::size_t t2m_idx = 5;
  const std::size_t ps_idx = 8;
  CHECK(st.feature_mean[t2m_idx] == 2.0);
  CHECK(st.feature_std[t2m_idx] ==
        Catch::Approx(std::sqrt(2.0 / 3.0)).margin(1e-15));
  CHECK(st.target_min == 0.0);
  CHECK(st.target_max == 500.0);
  // zero-variance feature hits the floor instead of dividing by zero
  CHECK(st.feature_std[ps_idx] == 1e-8);
  CHECK(st.fitted_on == "train");

  SECTION("missing-quality records do not contribute") {
    auto poisoned = train;
    MeteoRecord bad;
    bad.timestamp = hs(2015, 1, 1, 3);
    bad.t2m = std::numeric_limits<double>::quiet_NaN();
    bad.ghi = 1e9;
    bad.quality = Quality::missing;
    poisoned.push_back(bad);
    const NormStats st2 = pipeline::fit_norm_stats(poisoned);
    CHECK(st2.feature_mean[t2m_idx] == st.feature_mean[t2m_idx]);
    CHECK(st2.target_max == 500.0);
  }
  SECTION("no clean records is an error") {
    for (auto& r : train) r.quality = Quality::missing;
    CHECK_THROWS_AS(pipeline::fit_norm_stats(train), std::invalid_argument);
  }
}

TEST_CASE("normalization round trips", "[pipeline]") {
  const solar::SiteConfig site;
  auto recs = pipeline::derive_features(
      pipeline::clean_align(synth_rows(hs(2015, 4, 1, 0), 200, 13)), site);
  const NormStats st = pipeline::fit_norm_stats(recs);
  Rng rng(99);
  for (int k = 0; k < 200; ++k) {
    const std::size_t i = static_cast<std::size_t>(rng.below(kFeatureCount));
    const double x = rng.uniform(-500.0, 1500.0);
    CHECK(st.denormalize_feature(i, st.normalize_feature(i, x)) ==
          Catch::Approx(x).margin(1e-9));
    const double y = rng.uniform(0.0, 1200.0);
    CHECK(st.denormalize_target(st.normalize_target(y)) ==
          Catch::Approx(y).margin(1e-9));
  }
}

TEST_CASE("normalization is fitted on train alone", "[pipeline]") {
  const solar::SiteConfig site;
  SplitSpec spec;
  auto dev = synth_rows(hs(2015, 1, 1, 0), 1000, 21);
  auto stress = synth_rows(hs(2020, 1, 1, 0), 200, 22);

  auto stats_of = [&](std::vector<RawRow> dev_rows,
                      std::vector<RawRow> stress_rows) {
    auto recs = pipeline::derive_features(
        pipeline::clean_align(std::move(dev_rows)), site);
    auto srecs = pipeline::derive_features(
        pipeline::clean_align(std::move(stress_rows)), site);
    recs.insert(recs.end(), srecs.begin(), srecs.end());
    const auto s = pipeline::chronological_split(recs, spec);
    return pipeline::fit_norm_stats(s.train);
  };

  const NormStats base = stats_of(dev, stress);

  // Arbitrary value mutations confined to val/test/stress regions.
  auto dev_mut = dev;
  for (std::size_t i = 750; i < 1000; i += 7) {
    dev_mut[i].t2m = 1e6;
    dev_mut[i].ghi = 12345.0;
  }
  auto stress_mut = stress;
  for (auto& r : stress_mut) r.ws10m = -777.0 + 1000.0;

  const NormStats mutated = stats_of(dev_mut, stress_mut);

  CHECK(std::memcmp(base.feature_mean.data(), mutated.feature_mean.data(),
                    sizeof(base.feature_mean)) == 0);
  CHECK(std::memcmp(base.feature_std.data(), mutated.feature_std.data(),
                    sizeof(base.feature_std)) == 0);
  CHECK(base.target_min == mutated.target_min);
  CHECK(base.target_max == mutated.target_max);

  // A train-region mutation must move the statistics.
  auto dev_train_mut = dev;
  dev_train_mut[100].t2m = 1e6;
  const NormStats shifted = stats_of(dev_train_mut, stress);
  CHECK(shifted.feature_mean[5] != base.feature_mean[5]);
}

TEST_CASE("build_samples emits one sample per clean window", "[pipeline]") {
  const solar::SiteConfig site;
  auto recs = pipeline::derive_features(
      pipeline::clean_align(synth_rows(hs(2015, 5, 1, 0), 26, 31)), site);
  REQUIRE(recs.size() == 26);
  const NormStats st = pipeline::fit_norm_stats(recs);

  SECTION("26 contiguous clean hours give exactly 2 samples") {
    const SampleSet set = pipeline::build_samples(recs, st);
    REQUIRE(set.size() == 2);
    CHECK(set.samples[0].end_index == 23);
    CHECK(set.samples[1].end_index == 24);
    CHECK(set.input_rows() == 20);
    CHECK(set.input_cols() == 75);
    const TrainingSample s = set.materialize(0);
    CHECK(s.hankel_input.size() == 20 * 75);
    bool finite = true;
    for (float v : s.hankel_input) finite = finite && std::isfinite(v);
    CHECK(finite);
  }
  SECTION("gate scalars follow the physics schedule") {
    const SampleSet set = pipeline::build_samples(recs, st);
    for (std::size_t k = 0; k < set.size(); ++k) {
      const auto& m = set.samples[k];
      const MeteoRecord& last = recs[m.end_index];
      const MeteoRecord& next = recs[m.end_index + 1];
      CHECK(m.gate_sza == Catch::Approx(next.sza / 180.0).margin(1e-6));
      CHECK(m.gate_kt ==
            Catch::Approx(std::min(std::max(last.kt, 0.0), solar::kKtClip) /
                          solar::kKtClip)
                .margin(1e-6));
      CHECK(m.target_raw == Catch::Approx(next.ghi).margin(1e-3));
      CHECK(m.target ==
            Catch::Approx(st.normalize_target(next.ghi)).margin(1e-6));
      CHECK(m.target_is_night == next.is_night);
      CHECK(m.target_time == next.timestamp);
    }
  }
  SECTION("a missing hour knocks out every window that touches it") {
    auto holed = recs;
    holed[10].quality = Quality::missing;
    const SampleSet set = pipeline::build_samples(holed, st);
    CHECK(set.size() == 0);
  }
  SECTION("a missing target knocks out only its own sample") {
    auto holed = recs;
    holed[25].quality = Quality::missing;
    const SampleSet set = pipeline::build_samples(holed, st);
    REQUIRE(set.size() == 1);
    CHECK(set.samples[0].end_index == 23);
  }
  SECTION("interpolated hours still count as clean") {
    auto soft = recs;
    soft[12].quality = Quality::interpolated;
    const SampleSet set = pipeline::build_samples(soft, st);
    CHECK(set.size() == 2);
  }
  SECTION("shape validation") {
    CHECK_THROWS_AS(pipeline::build_samples(recs, st, 24, 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(pipeline::build_samples(recs, st, 24, 25),
                    std::invalid_argument);
  }
}

TEST_CASE("prepare spans the era boundary coherently", "[pipeline]") {
  const solar::SiteConfig site;
  SplitSpec spec;
  // 400 continuous hours across the dev/stress boundary: 168 hours of 2019
  // (split 117/25/26 by count) and 232 hours of 2020 (all stress).
  auto raw = synth_rows(hs(2019, 12, 25, 0), 400, 41);
  const pipeline::PreparedDataset d = pipeline::prepare(raw, site, spec);
  CHECK(d.train.size() == 117 - 24);
  CHECK(d.val.size() == 25 - 24);
  CHECK(d.test.size() == 26 - 24);
  CHECK(d.stress.size() == 232 - 24);
  d.stats.validate();

  bool all_finite = true;
  for (const auto* set : {&d.train, &d.val, &d.test, &d.stress})
    for (std::size_t i = 0; i < set->size(); ++i) {
      const TrainingSample s = set->materialize(i);
      for (float v : s.hankel_input)
        all_finite = all_finite && std::isfinite(v);
    }
  CHECK(all_finite);

  SECTION("holes knock out exactly the windows that touch them") {
    auto holed = raw;
    // Six missing hours split train's 117 records into runs of 50 and 61:
    // 26 samples survive before the hole and 37 after.
    for (std::size_t i = 50; i < 56; ++i) holed[i].ghi.reset();
    const auto d2 = pipeline::prepare(holed, site, spec);
    CHECK(d2.train.size() == 26 + 37);
    CHECK(d2.stress.size() == d.stress.size());
  }
}

TEST_CASE("prepared dataset round trips through bytes", "[pipeline]") {
  const solar::SiteConfig site;
  SplitSpec spec;
  spec.excluded_years = {2018};
  auto dev = synth_rows(hs(2015, 1, 1, 0), 400, 51);
  const pipeline::PreparedDataset d = pipeline::prepare(dev, site, spec);

  const auto bytes = pipeline::serialize_dataset(d);
  const pipeline::PreparedDataset q = pipeline::deserialize_dataset(bytes);

  CHECK(q.split.train_frac == d.split.train_frac);
  CHECK(q.split.dev_start_year == d.split.dev_start_year);
  CHECK(q.split.excluded_years == d.split.excluded_years);
  CHECK(std::memcmp(q.stats.feature_mean.data(), d.stats.feature_mean.data(),
                    sizeof(d.stats.feature_mean)) == 0);
  CHECK(std::memcmp(q.stats.feature_std.data(), d.stats.feature_std.data(),
                    sizeof(d.stats.feature_std)) == 0);
  CHECK(q.stats.target_min == d.stats.target_min);
  CHECK(q.stats.target_max == d.stats.target_max);

  auto check_set = [](const SampleSet& a, const SampleSet& b) {
    REQUIRE(a.window == b.window);
    REQUIRE(a.subwindow == b.subwindow);
    REQUIRE(a.features.size() == b.features.size());
    if (!a.features.empty())
      CHECK(std::memcmp(a.features.data(), b.features.data(),
                        a.features.size() * sizeof(float)) == 0);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.samples[i].end_index == b.samples[i].end_index);
      CHECK(a.samples[i].gate_sza == b.samples[i].gate_sza);
      CHECK(a.samples[i].gate_kt == b.samples[i].gate_kt);
      CHECK(a.samples[i].target == b.samples[i].target);
      CHECK(a.samples[i].target_raw == b.samples[i].target_raw);
      CHECK(a.samples[i].target_is_night == b.samples[i].target_is_night);
      CHECK(a.samples[i].target_time == b.samples[i].target_time);
    }
  };
  check_set(q.train, d.train);
  check_set(q.val, d.val);
  check_set(q.test, d.test);
  check_set(q.stress, d.stress);

  SECTION("file round trip") {
    const std::string path = "pissm_test_dataset.bin";
    pipeline::save_dataset(path, d);
    const auto r = pipeline::load_dataset(path);
    CHECK(r.train.size() == d.train.size());
    std::remove(path.c_str());
  }
  SECTION("corruption is detected") {
    auto bad = bytes;
    bad[bad.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(pipeline::deserialize_dataset(bad), SerializationError);
    auto trunc = bytes;
    trunc.resize(trunc.size() - 5);
    CHECK_THROWS_AS(pipeline::deserialize_dataset(trunc), SerializationError);
    auto magic = bytes;
    magic[0] = 'Q';
    CHECK_THROWS_AS(pipeline::deserialize_dataset(magic), SerializationError);
  }
}
