/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <catch_amalgamated.hpp>

#include <atomic>
#include <filesystem>
#include <string>
#include <thread>

#include "pissm/power.hpp"

using namespace pissm;

namespace {

std::string canned_response() {
  nlohmann::json params;
  // Three hours; DNI absent for the middle one, T2M carries the fill value.
  params["ALLSKY_SFC_SW_DWN"] = {{"2015060100", 0.0},
                                 {"2015060101", 120.5},
                                 {"2015060102", 260.0}};
  params["ALLSKY_SFC_SW_DNI"] = {{"2015060100", 0.0},
                                 {"2015060102", 410.0}};
  params["ALLSKY_SFC_SW_DIFF"] = {{"2015060100", 0.0},
                                  {"2015060101", 60.0},
                                  {"2015060102", 90.0}};
  params["T2M"] = {{"2015060100", 24.5},
                   {"2015060101", -999.0},
                   {"2015060102", 27.0}};
  params["RH2M"] = {{"2015060100", 40.0},
                    {"2015060101", 38.0},
                    {"2015060102", 35.0}};
  params["WS10M"] = {{"2015060100", 2.0},
                     {"2015060101", 2.5},
                     {"2015060102", 3.0}};
  params["PS"] = {{"2015060100", 98.2},
                  {"2015060101", 98.3},
                  {"2015060102", 98.1}};
  nlohmann::json doc;
  doc["properties"]["parameter"] = params;
  return doc.dump();
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("pissm_power_test_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("power json parses into raw rows", "[power]") {
  const auto rows = power::parse_power_json(canned_response());
  REQUIRE(rows.size() == 3);

  const HourStamp t0 = from_civil(CivilTime{2015, 6, 1, 0});
  CHECK(rows[0].time == t0);
  CHECK(rows[1].time == t0 + 1);
  CHECK(rows[2].time == t0 + 2);

  CHECK(rows[1].ghi == 120.5);
  CHECK(rows[2].dni == 410.0);
  // absent key and -999 fill both surface as missing
  CHECK_FALSE(rows[1].dni.has_value());
  CHECK_FALSE(rows[1].t2m.has_value());
  CHECK(rows[0].t2m == 24.5);
  CHECK(rows[2].ps == 98.1);
}

TEST_CASE("power request path is fully specified", "[power]") {
  power::PowerQuery q;
  q.latitude = 14.7;
  q.longitude = 33.2;
  q.year = 2016;
  const std::string path = power::power_path(q);
  for (const char* p : power::kParameters)
    CHECK(path.find(p) != std::string::npos);
  CHECK(path.find("community=RE") != std::string::npos);
  CHECK(path.find("latitude=14.7000") != std::string::npos);
  CHECK(path.find("longitude=33.2000") != std::string::npos);
  CHECK(path.find("start=20160101") != std::string::npos);
  CHECK(path.find("end=20161231") != std::string::npos);
  CHECK(path.find("format=JSON") != std::string::npos);
  CHECK(path.find("time-standard=UTC") != std::string::npos);

  CHECK(power::cache_file_name(q) == "power_14.7000_33.2000_2016.json");
}

TEST_CASE("fetch hits the service once and then the cache", "[power]") {
  const std::string body = canned_response();
  std::atomic<int> hits{0};
  std::atomic<bool> params_ok{false};

  httplib::Server srv;
  srv.Get("/api/temporal/hourly/point",
          [&](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            params_ok = req.get_param_value("community") == "RE" &&
                        req.get_param_value("format") == "JSON" &&
                        req.get_param_value("parameters").find(
                            "ALLSKY_SFC_SW_DWN") != std::string::npos;
            res.set_content(body, "application/json");
          });
  const int port = srv.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();

  const std::string host = "http://127.0.0.1:" + std::to_string(port);
  TempDir cache;
  power::PowerQuery q;
  q.year = 2015;

  const auto first = power::fetch_power_year(q, cache.path.string(), host);
  CHECK(first.size() == 3);
  CHECK(hits == 1);
  CHECK(params_ok);
  CHECK(std::filesystem::exists(cache.path / power::cache_file_name(q)));

  const auto second = power::fetch_power_year(q, cache.path.string(), host);
  CHECK(second.size() == 3);
  CHECK(hits == 1);  // served from disk, no second request
  REQUIRE(second.size() == first.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(second[i].time == first[i].time);
    CHECK(second[i].ghi == first[i].ghi);
    CHECK(second[i].t2m == first[i].t2m);
  }

  // A different year is a different cache entry and a fresh request.
  power::PowerQuery q2 = q;
  q2.year = 2016;
  const auto third = power::fetch_power_year(q2, cache.path.string(), host);
  CHECK(hits == 2);
  CHECK(third.size() == 3);

  srv.stop();
  server_thread.join();
}

TEST_CASE("fetch reports transport failures", "[power]") {
  TempDir cache;
  power::PowerQuery q;
  // nothing listens on this port
  CHECK_THROWS_AS(
      power::fetch_power_year(q, cache.path.string(), "http://127.0.0.1:1"),
      std::runtime_error);
}
