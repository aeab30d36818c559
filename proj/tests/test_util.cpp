/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <catch_amalgamated.hpp>

#include "pissm/bytes.hpp"
#include "pissm/rng.hpp"
#include "pissm/time.hpp"

using namespace pissm;

TEST_CASE("civil round trip over several decades") {
  // hourly would be slow; step by a prime number of hours to cover all
  // hours of day and month/year boundaries
  for (std::int64_t h = -200000; h < 600000; h += 4391) {
    const HourStamp t{h};
    REQUIRE(from_civil(to_civil(t)) == t);
  }
  const CivilTime c = to_civil(from_civil({2010, 1, 1, 0}));
  CHECK(c.year == 2010);
  CHECK(c.month == 1);
  CHECK(c.day == 1);
  CHECK(c.hour == 0);
}

TEST_CASE("day of year") {
  CHECK(day_of_year(from_civil({2010, 1, 1, 5})) == 1);
  CHECK(day_of_year(from_civil({2010, 12, 31, 23})) == 365);
  CHECK(day_of_year(from_civil({2012, 12, 31, 0})) == 366);  // leap
  CHECK(day_of_year(from_civil({2012, 3, 1, 0})) == 61);
}

TEST_CASE("timestamp parsing accepts the fixture and POWER forms") {
  const HourStamp want = from_civil({2014, 11, 16, 7});
  CHECK(parse_timestamp("2014-11-16T07:00:00Z") == want);
  CHECK(parse_timestamp("2014-11-16 07:00") == want);
  CHECK(parse_timestamp("2014-11-16T07") == want);
  CHECK(parse_timestamp("2014111607") == want);
  CHECK(format_iso8601(want) == "2014-11-16T07:00:00Z");
  CHECK_THROWS_AS(parse_timestamp("2014-11-16T07:30:00Z"), std::invalid_argument);
  CHECK_THROWS_AS(parse_timestamp("garbage"), std::invalid_argument);
  CHECK_THROWS_AS(parse_timestamp("2014-13-01T00"), std::invalid_argument);
}

TEST_CASE("rng streams are deterministic and sane") {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Rng r(7);
  double sum = 0.0, sumsq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sumsq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sumsq / n - 1.0) < 0.02);

  Rng u(9);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
  }
  for (int i = 0; i < 1000; ++i) REQUIRE(u.below(17) < 17);
}

TEST_CASE("byte writer/reader round trip with crc") {
  ByteWriter w;
  w.put_u16(0xbeef);
  w.put_u32(123456789u);
  w.put_i64(-42);
  w.put_f32(1.5f);
  w.put_f64(-2.25);
  w.put_string("hello");
  w.put_crc_trailer();

  auto bytes = w.take();
  ByteReader r(bytes);
  r.check_crc_trailer();
  CHECK(r.get_u16() == 0xbeef);
  CHECK(r.get_u32() == 123456789u);
  CHECK(r.get_i64() == -42);
  CHECK(r.get_f32() == 1.5f);
  CHECK(r.get_f64() == -2.25);
  CHECK(r.get_string() == "hello");

  SECTION("corruption is detected") {
    bytes[3] ^= 0x01;
    ByteReader bad(bytes);
    CHECK_THROWS_AS(bad.check_crc_trailer(), SerializationError);
  }

  SECTION("truncation is detected") {
    ByteReader short_r(std::span<const unsigned char>(bytes.data(), 2));
    CHECK_THROWS_AS(short_r.get_u32(), SerializationError);
  }
}

TEST_CASE("crc32 matches the zlib reference value") {
  const char* s = "123456789";
  CHECK(crc32(std::span(reinterpret_cast<const unsigned char*>(s), 9)) == 0xcbf43926u);
}
