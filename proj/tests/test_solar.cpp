/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <catch_amalgamated.hpp>
#include <cmath>

#include "pissm/rng.hpp"
#include "pissm/solar.hpp"

using namespace pissm;
using namespace pissm::solar;
using Catch::Matchers::WithinAbs;

namespace {
SiteConfig paper_site() { return SiteConfig{}; }  // defaults are the study site
}  // namespace

TEST_CASE("declination endpoints and bounds") {
  CHECK(declination(81) == 0.0);  // equinox lands on sin(360 deg) exactly
  CHECK_THAT(declination(172), WithinAbs(23.449782846813658, 1e-12));
  CHECK_THAT(declination(356), WithinAbs(-23.44457137142844, 1e-12));
  for (int d = 1; d <= 366; ++d) REQUIRE(std::abs(declination(d)) <= 23.45);
  CHECK_THROWS_AS(declination(0), std::domain_error);
  CHECK_THROWS_AS(declination(367), std::domain_error);
}

TEST_CASE("hour angle from solar time") {
  CHECK(hour_angle_from_solar_time(12.0) == 0.0);
  CHECK_THAT(hour_angle_from_solar_time(18.0), WithinAbs(90.0, 1e-12));
  CHECK_THAT(hour_angle_from_solar_time(6.0), WithinAbs(-90.0, 1e-12));
  // normalized into (-180, 180]
  CHECK(hour_angle_from_solar_time(0.0) == 180.0);
  CHECK(hour_angle_from_solar_time(24.0) == 180.0);
  for (double t = -30.0; t <= 30.0; t += 0.37) {
    const double h = hour_angle_from_solar_time(t);
    REQUIRE(h > -180.0);
    REQUIRE(h <= 180.0);
  }
}

TEST_CASE("hour angle for UTC stamps at the study site") {
  SiteConfig site = paper_site();
  // solar time = UTC hour + longitude/15; 33.2 E puts solar noon at
  // 9.7867 UTC, so 10:00 UTC is 0.2133 solar hours past noon.
  const double h = hour_angle(from_civil({2014, 3, 22, 10}), site);
  CHECK_THAT(h, WithinAbs(15.0 * (10.0 + 33.2 / 15.0 - 12.0), 1e-9));
}

TEST_CASE("zenith angle") {
  CHECK_THAT(zenith_angle(14.7, 14.7, 0.0), WithinAbs(0.0, 1e-6));
  CHECK_THAT(zenith_angle(0.0, 0.0, 90.0), WithinAbs(90.0, 1e-9));
  CHECK_THAT(zenith_angle(14.7, 0.0, 0.0), WithinAbs(14.7, 1e-9));
  CHECK_THROWS_AS(zenith_angle(91.0, 0.0, 0.0), std::domain_error);

  SECTION("range and latitude/declination symmetry") {
    Rng rng(41);
    for (int i = 0; i < 2000; ++i) {
      const double lat = rng.uniform(-90.0, 90.0);
      const double dec = rng.uniform(-23.45, 23.45);
      const double ha = rng.uniform(-180.0, 180.0);
      const double z = zenith_angle(lat, dec, ha);
      REQUIRE(z >= 0.0);
      REQUIRE(z <= 180.0);
      // Eq 2 is symmetric in (L, delta); swapping must not change it.
      // Restrict the swap to |dec| <= 90 which always holds.
      REQUIRE_THAT(zenith_angle(dec, lat, ha), WithinAbs(z, 1e-9));
    }
  }
}

TEST_CASE("clear-sky irradiance") {
  SiteConfig site = paper_site();
  CHECK_THAT(clear_sky_ghi(90.0, site), WithinAbs(1020.75, 1e-9));
  CHECK(clear_sky_ghi(-5.0, site) == 0.0);
  CHECK(clear_sky_ghi(0.0, site) == 0.0);
  CHECK_THAT(clear_sky_ghi(30.0, site), WithinAbs(510.375, 1e-9));

  SECTION("monotone nondecreasing on [0, 90]") {
    double prev = 0.0;
    for (double a = 0.0; a <= 90.0; a += 0.25) {
      const double g = clear_sky_ghi(a, site);
      REQUIRE(g >= prev);
      prev = g;
    }
  }
}

TEST_CASE("clearness index") {
  SiteConfig site = paper_site();
  CHECK_THAT(clearness_index(800.0, 800.0, site), WithinAbs(1.0, 2e-9));
  CHECK(clearness_index(0.0, 500.0, site) == 0.0);
  CHECK_THAT(clearness_index(400.0, 800.0, site), WithinAbs(0.5, 1e-8));
  // dawn blow-up is clipped
  CHECK(clearness_index(50.0, 0.5, site) == kKtClip);
  CHECK_THROWS_AS(clearness_index(-1.0, 100.0, site), std::domain_error);
  CHECK_THROWS_AS(clearness_index(100.0, -1.0, site), std::domain_error);
}

TEST_CASE("cyclical encoding") {
  auto [s0, c0] = cyclical_encode(0.0, 24.0);
  CHECK_THAT(s0, WithinAbs(0.0, 1e-15));
  CHECK_THAT(c0, WithinAbs(1.0, 1e-15));
  auto [s12, c12] = cyclical_encode(12.0, 24.0);
  CHECK_THAT(s12, WithinAbs(0.0, 1e-12));
  CHECK_THAT(c12, WithinAbs(-1.0, 1e-12));

  auto [sa, ca] = cyclical_encode(23.0, 24.0);
  auto [sb, cb] = cyclical_encode(-1.0, 24.0);
  CHECK_THAT(sa, WithinAbs(sb, 1e-12));
  CHECK_THAT(ca, WithinAbs(cb, 1e-12));

  CHECK_THROWS_AS(cyclical_encode(1.0, 0.0), std::domain_error);

  SECTION("always on the unit circle") {
    Rng rng(17);
    for (int i = 0; i < 5000; ++i) {
      auto [s, c] = cyclical_encode(rng.uniform(-1000.0, 1000.0),
                                    rng.uniform(0.1, 400.0));
      REQUIRE_THAT(s * s + c * c, WithinAbs(1.0, 1e-12));
    }
  }
}

TEST_CASE("solar state composition and the night rule") {
  SiteConfig site = paper_site();

  SECTION("is_night matches its definition in both directions over a year") {
    const HourStamp start = from_civil({2014, 1, 1, 0});
    for (int h = 0; h < 24 * 365; ++h) {
      const SolarState s = solar_state(start + h, site);
      REQUIRE(s.zenith_angle >= 0.0);
      REQUIRE(s.zenith_angle <= 180.0);
      REQUIRE(s.clear_sky_ghi >= 0.0);
      const bool rule = s.zenith_angle >= 90.0 || s.clear_sky_ghi <= 0.0;
      REQUIRE(s.is_night == rule);
      if (s.is_night) REQUIRE((s.clear_sky_ghi == 0.0 || s.zenith_angle >= 90.0));
    }
  }

  SECTION("clear-sky follows the elevation composition") {
    // a 45-degree zenith gives I0 * Tc * sin(45 deg)
    CHECK_THAT(clear_sky_ghi(90.0 - 45.0, site), WithinAbs(721.7792468961683, 1e-9));
    // near the equinox the declination vanishes, so local solar noon puts
    // the zenith angle at the site latitude
    const double z = zenith_angle(site.latitude, declination(81), 0.0);
    CHECK_THAT(z, WithinAbs(site.latitude, 1e-9));
  }

  SECTION("night boundary is inclusive at 90 degrees") {
    const double clear = clear_sky_ghi(90.0 - 90.0, site);
    CHECK(clear == 0.0);  // alpha = 0 yields zero clear-sky
  }
}

TEST_CASE("site validation") {
  SiteConfig bad = paper_site();
  bad.transmission_coeff = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
  bad = paper_site();
  bad.latitude = 95.0;
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
  bad = paper_site();
  bad.kt_epsilon = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
  CHECK_NOTHROW(paper_site().validate());
}
