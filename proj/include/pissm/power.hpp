/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "pissm/pipeline.hpp"
#include "pissm/time.hpp"

namespace pissm::power {

/// The seven hourly parameters the pipeline consumes, in CSV column order.
inline constexpr std::array<const char*, 7> kParameters = {
    "ALLSKY_SFC_SW_DWN", "ALLSKY_SFC_SW_DNI", "ALLSKY_SFC_SW_DIFF",
    "T2M",               "RH2M",              "WS10M",
    "PS"};

struct PowerQuery {
  double latitude = 14.7;
  double longitude = 33.2;
  int year = 2015;
};

inline std::string parameter_list() {
  std::string s;
  for (std::size_t i = 0; i < kParameters.size(); ++i) {
    if (i) s += ',';
    s += kParameters[i];
  }
  return s;
}

/// Request path for one calendar year of hourly data.
inline std::string power_path(const PowerQuery& q) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "/api/temporal/hourly/point?parameters=%s&community=RE"
                "&latitude=%.4f&longitude=%.4f&start=%d0101&end=%d1231"
                "&format=JSON&time-standard=UTC",
                parameter_list().c_str(), q.latitude, q.longitude, q.year,
                q.year);
  return buf;
}

inline constexpr const char* kDefaultHost = "https://power.larc.nasa.gov";

/// Cache file name, unique per (latitude, longitude, year).
inline std::string cache_file_name(const PowerQuery& q) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "power_%.4f_%.4f_%d.json", q.latitude,
                q.longitude, q.year);
  return buf;
}

/// Parses the hourly point response.  Each parameter carries a map keyed by
/// UTC timestamp "YYYYMMDDHH"; the union of keys becomes the row timeline and
/// the service's -999 fill value becomes an absent field.
inline std::vector<pipeline::RawRow> parse_power_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  const auto& params = doc.at("properties").at("parameter");

  std::map<HourStamp, pipeline::RawRow> rows;
  auto field_of = [](pipeline::RawRow& r,
                     std::size_t i) -> std::optional<double>& {
    switch (i) {
      case 0: return r.ghi;
      case 1: return r.dni;
      case 2: return r.dhi;
      case 3: return r.t2m;
      case 4: return r.rh2m;
      case 5: return r.ws10m;
      default: return r.ps;
    }
  };

  for (std::size_t i = 0; i < kParameters.size(); ++i) {
    if (!params.contains(kParameters[i])) continue;
    for (const auto& [key, value] : params.at(kParameters[i]).items()) {
      const HourStamp t = parse_timestamp(key);
      auto& row = rows[t];
      row.time = t;
      const double v = value.get<double>();
      if (v != pipeline::kMissingSentinel) field_of(row, i) = v;
    }
  }

  std::vector<pipeline::RawRow> out;
  out.reserve(rows.size());
  for (auto& [t, r] : rows) out.push_back(r);
  return out;
}

/// Fetches one year of hourly data, consulting a local disk cache first.
/// A successful download is cached verbatim so repeat runs are offline.
inline std::vector<pipeline::RawRow> fetch_power_year(
    const PowerQuery& q, const std::string& cache_dir,
    const std::string& host = kDefaultHost) {
  namespace fs = std::filesystem;
  const fs::path cache = fs::path(cache_dir) / cache_file_name(q);
  if (fs::exists(cache)) {
    std::ifstream in(cache, std::ios::binary);
    std::ostringstream body;
    body << in.rdbuf();
    return parse_power_json(body.str());
  }

  httplib::Client client(host);
  client.set_connection_timeout(30);
  client.set_read_timeout(120);
  const auto res = client.Get(power_path(q));
  if (!res)
    throw std::runtime_error("power: request to " + host + " failed: " +
                             httplib::to_string(res.error()));
  if (res->status != 200)
    throw std::runtime_error("power: HTTP " + std::to_string(res->status) +
                             " from " + host);
  auto rows = parse_power_json(res->body);

  fs::create_directories(cache_dir);
  std::ofstream out(cache, std::ios::binary);
  out << res->body;
  return rows;
}

}  // namespace pissm::power
