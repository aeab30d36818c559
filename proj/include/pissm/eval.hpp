/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pissm/autodiff.hpp"
#include "pissm/net.hpp"
#include "pissm/records.hpp"
#include "pissm/solar.hpp"
#include "pissm/tensor.hpp"
#include "pissm/time.hpp"

namespace pissm::eval {

namespace detail {

inline void check_pair(std::span<const double> pred,
                       std::span<const double> truth) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("metrics: length mismatch");
  if (pred.size() < 2)
    throw std::invalid_argument("metrics: need at least two points");
}

}  // namespace detail

inline double mse(std::span<const double> pred, std::span<const double> truth) {
  detail::check_pair(pred, truth);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - truth[i];
    acc += e * e;
  }
  return acc / static_cast<double>(pred.size());
}

inline double rmse(std::span<const double> pred,
                   std::span<const double> truth) {
  return std::sqrt(mse(pred, truth));
}

inline double mae(std::span<const double> pred, std::span<const double> truth) {
  detail::check_pair(pred, truth);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    acc += std::abs(pred[i] - truth[i]);
  return acc / static_cast<double>(pred.size());
}

/// Coefficient of determination, 1 - SSres/SStot.  Undefined when the truth
/// is constant (SStot = 0).
inline double r2(std::span<const double> pred, std::span<const double> truth) {
  detail::check_pair(pred, truth);
  double mean = 0.0;
  for (double y : truth) mean += y;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double r = pred[i] - truth[i];
    const double d = truth[i] - mean;
    ss_res += r * r;
    ss_tot += d * d;
  }
  if (ss_tot == 0.0)
    throw std::domain_error("r2 undefined for constant truth");
  return 1.0 - ss_res / ss_tot;
}

/// One scored forecast in physical units.
struct PredictionRow {
  HourStamp time{0};  // target hour t+1
  double truth = 0.0;
  double pred = 0.0;
  bool is_night = false;
};

/// Batched eval-mode inference over a sample set; outputs are the clamped
/// physical predictions, so they are nonnegative and exactly zero at night.
/// Per-sample arithmetic is independent of batch composition, hence the
/// batch size cannot change any value.
inline std::vector<PredictionRow> predict_set(const SampleSet& set,
                                              net::ModelParams& p,
                                              const NormStats& stats,
                                              std::size_t batch_size = 256) {
  if (batch_size == 0) throw std::invalid_argument("predict: empty batch");
  const std::size_t rows = set.input_rows();
  const std::size_t cols = set.input_cols();
  if (rows != p.config.hankel_rows() || cols != p.config.conv_in())
    throw std::invalid_argument("predict: sample/model shape mismatch");
  std::vector<PredictionRow> out;
  out.reserve(set.size());

  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    const std::size_t b = std::min(batch_size, set.size() - start);
    ad::Tensor<float> x({b, rows, cols});
    ad::Tensor<float> gs({b});
    ad::Tensor<float> gk({b});
    for (std::size_t k = 0; k < b; ++k) {
      const auto& m = set.samples[start + k];
      set.unroll_input(start + k,
                       std::span<float>(x.data.data() + k * rows * cols,
                                        rows * cols));
      gs.data[k] = m.gate_sza;
      gk.data[k] = m.gate_kt;
    }
    ad::Graph<float> g(0, /*grad_enabled=*/false);
    const auto pred = net::build_forward(g, p, std::move(x), std::move(gs),
                                         std::move(gk), /*training=*/false);
    const ad::Tensor<float>& y = g.value(pred);
    for (std::size_t k = 0; k < b; ++k) {
      const auto& m = set.samples[start + k];
      PredictionRow r;
      r.time = m.target_time;
      r.truth = m.target_raw;
      r.is_night = m.target_is_night;
      r.pred = m.target_is_night
                   ? 0.0
                   : std::max(0.0, stats.denormalize_target(
                                       static_cast<double>(y.data[k])));
      out.push_back(r);
    }
  }
  return out;
}

/// Counts physically impossible forecasts: strictly positive irradiance at
/// an hour the given site geometry says is night.
inline std::size_t night_audit(std::span<const PredictionRow> rows) {
  std::size_t count = 0;
  for (const auto& r : rows)
    if (r.is_night && r.pred > 0.0) ++count;
  return count;
}

/// Same audit with night resolved from first principles instead of stored
/// flags, for predictions that arrive without pipeline metadata.
inline std::size_t night_audit(std::span<const HourStamp> times,
                               std::span<const double> preds,
                               const solar::SiteConfig& site) {
  if (times.size() != preds.size())
    throw std::invalid_argument("audit: length mismatch");
  std::size_t count = 0;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (solar::solar_state(times[i], site).is_night && preds[i] > 0.0) ++count;
  return count;
}

constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

/// Metrics for one evaluation set.  Full-day numbers include the night
/// hours; the daytime-only block exists because all-zero night pairs
/// flatter R^2, and honest comparison needs both views.
struct EvalReport {
  std::string split;
  std::size_t n_samples = 0;
  double rmse = 0.0;
  double mae = 0.0;
  double r2 = kUndefined;
  std::size_t night_violation_count = 0;
  std::size_t n_day = 0;
  double rmse_day = kUndefined;
  double mae_day = kUndefined;
  double r2_day = kUndefined;
};

inline EvalReport evaluate(const std::string& split_name,
                           std::span<const PredictionRow> rows) {
  EvalReport rep;
  rep.split = split_name;
  rep.n_samples = rows.size();
  rep.night_violation_count = night_audit(rows);
  if (rows.size() < 2) return rep;

  std::vector<double> pred, truth, pred_day, truth_day;
  pred.reserve(rows.size());
  truth.reserve(rows.size());
  for (const auto& r : rows) {
    pred.push_back(r.pred);
    truth.push_back(r.truth);
    if (!r.is_night) {
      pred_day.push_back(r.pred);
      truth_day.push_back(r.truth);
    }
  }
  rep.rmse = rmse(pred, truth);
  rep.mae = mae(pred, truth);
  try {
    rep.r2 = r2(pred, truth);
  } catch (const std::domain_error&) {
  }
  rep.n_day = pred_day.size();
  if (rep.n_day >= 2) {
    rep.rmse_day = rmse(pred_day, truth_day);
    rep.mae_day = mae(pred_day, truth_day);
    try {
      rep.r2_day = r2(pred_day, truth_day);
    } catch (const std::domain_error&) {
    }
  }
  return rep;
}

struct YearEntry {
  int year = 0;
  bool has_samples = false;
  EvalReport report;
};

/// Per-year breakdown plus the pooled aggregate.  Pooling happens over the
/// raw rows of the populated years, so the aggregate RMSE is the
/// sample-weighted pooling of squared errors, never a mean of RMSEs.
struct StressReport {
  std::vector<YearEntry> per_year;
  EvalReport pooled;
};

/// Evaluates a sample set year by year.  Years listed in expected_years but
/// absent from the data are reported with has_samples = false and excluded
/// from the pooled aggregate.  Rows are ordered canonically by target time
/// first, so the stored sample order cannot influence any metric.
inline StressReport stress_test(const SampleSet& set, net::ModelParams& params,
                                const NormStats& stats,
                                std::span<const int> expected_years = {}) {
  std::vector<PredictionRow> rows = predict_set(set, params, stats);
  std::sort(rows.begin(), rows.end(),
            [](const PredictionRow& a, const PredictionRow& b) {
              return a.time < b.time;
            });

  std::map<int, std::vector<PredictionRow>> by_year;
  for (int y : expected_years) by_year[y];
  for (const auto& r : rows) by_year[year_of(r.time)].push_back(r);

  StressReport rep;
  for (const auto& [year, group] : by_year) {
    YearEntry e;
    e.year = year;
    e.has_samples = !group.empty();
    e.report = evaluate(std::to_string(year), group);
    rep.per_year.push_back(std::move(e));
  }
  rep.pooled = evaluate("stress", rows);
  return rep;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["split"] = r.split;
  j["n_samples"] = r.n_samples;
  j["rmse_w_m2"] = r.rmse;
  j["mae_w_m2"] = r.mae;
  j["r2"] = r.r2;
  j["night_violation_count"] = r.night_violation_count;
  j["daytime"] = {{"n_samples", r.n_day},
                  {"rmse_w_m2", r.rmse_day},
                  {"mae_w_m2", r.mae_day},
                  {"r2", r.r2_day}};
  return j;
}

inline nlohmann::json to_json(const StressReport& r) {
  nlohmann::json j;
  j["pooled"] = to_json(r.pooled);
  j["per_year"] = nlohmann::json::array();
  for (const auto& e : r.per_year) {
    nlohmann::json y = to_json(e.report);
    y["year"] = e.year;
    y["has_samples"] = e.has_samples;
    j["per_year"].push_back(std::move(y));
  }
  return j;
}

namespace detail {

inline std::string fmt_metric(double v) {
  if (std::isnan(v)) return "     n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%8.3f", v);
  return buf;
}

}  // namespace detail

/// Fixed-width human-readable table, one line per report.
inline std::string to_table(std::span<const EvalReport> reports) {
  std::string out =
      "split            n     rmse      mae       r2  night_viol   "
      "rmse_day    r2_day\n";
  for (const auto& r : reports) {
    char head[64];
    std::snprintf(head, sizeof(head), "%-12s %5zu ", r.split.c_str(),
                  r.n_samples);
    out += head;
    out += detail::fmt_metric(r.rmse) + " " + detail::fmt_metric(r.mae) + " " +
           detail::fmt_metric(r.r2);
    char mid[32];
    std::snprintf(mid, sizeof(mid), "  %10zu ", r.night_violation_count);
    out += mid;
    out += detail::fmt_metric(r.rmse_day) + "  " + detail::fmt_metric(r.r2_day);
    out += "\n";
  }
  return out;
}

/// Scored forecasts as CSV for external plotting.
inline std::string predictions_csv(std::span<const PredictionRow> rows) {
  std::string out = "timestamp,truth,prediction\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g\n",
                  format_iso8601(r.time).c_str(), r.truth, r.pred);
    out += buf;
  }
  return out;
}

inline void write_predictions_csv(const std::string& path,
                                  std::span<const PredictionRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << predictions_csv(rows);
}

}  // namespace pissm::eval
