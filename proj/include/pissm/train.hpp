/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pissm/net.hpp"
#include "pissm/records.hpp"
#include "pissm/rng.hpp"

namespace pissm::train {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  double lr = 0.001;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 15;
  double plateau_rel_threshold = 1e-4;
  double lr_floor = 1e-6;
  double grad_clip_norm = 1.0;
  double weight_decay = 1e-5;  // decoupled; zero disables
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t early_stop_patience = 30;
  std::uint64_t seed = 42;

  void validate() const {
    if (epochs == 0 || batch_size == 0)
      throw std::domain_error("train config: epochs and batch_size positive");
    if (lr <= 0.0 || grad_clip_norm <= 0.0 || adam_eps <= 0.0)
      throw std::domain_error("train config: lr, clip, eps must be positive");
    if (plateau_factor <= 0.0 || plateau_factor >= 1.0)
      throw std::domain_error("train config: plateau_factor outside (0, 1)");
    if (plateau_patience == 0 || early_stop_patience == 0)
      throw std::domain_error("train config: patience must be positive");
    if (weight_decay < 0.0 || plateau_rel_threshold < 0.0 || lr_floor < 0.0)
      throw std::domain_error("train config: negative rate");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 ||
        adam_beta2 >= 1.0)
      throw std::domain_error("train config: betas outside [0, 1)");
  }
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_rmse_physical = 0.0;  // W/m^2
  double lr = 0.0;                 // rate in effect during the epoch
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 while no epoch finished
  double wall_time_sec = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

/// Weight decay applies to weights only; layer norm parameters and every
/// bias vector are exempt.
inline bool decays(const std::string& tensor_name) {
  static const char* const kDecayed[] = {
      "conv_kernel", "ssm_theta", "ssm_b",     "ssm_c",     "ssm_d",
      "gate_sza_w",  "gate_kt_w", "fc_w",      "out_w"};
  for (const char* n : kDecayed)
    if (tensor_name == n) return true;
  return false;
}

/// First and second moment accumulators, kept in double so the update is
/// well conditioned even after the moments decay to tiny values.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t t = 0;

  static AdamState init(net::ModelParams& p) {
    AdamState s;
    for (auto& [name, tensor] : p.named_tensors()) {
      s.m.emplace_back(tensor->numel(), 0.0);
      s.v.emplace_back(tensor->numel(), 0.0);
    }
    return s;
  }
};

/// One Adam update over every gradient-bearing tensor.  Decoupled weight
/// decay shrinks the parameter by lr*wd before the moment update touches
/// it; the gradient itself is never modified.
inline void adam_step(net::ModelParams& p, AdamState& st,
                      const TrainConfig& c, double lr) {
  auto tensors = p.named_tensors();
  if (st.m.size() != tensors.size())
    throw std::invalid_argument("adam_step: state tensor count mismatch");
  ++st.t;
  const double bc1 = 1.0 - std::pow(c.adam_beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(c.adam_beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& [name, tensor] = tensors[i];
    if (!tensor->requires_grad) continue;
    for (float g : tensor->grad)
      if (!std::isfinite(g))
        throw std::runtime_error("adam_step: non-finite gradient in " + name);
    const bool wd = c.weight_decay > 0.0 && decays(name);
    std::vector<double>& m = st.m[i];
    std::vector<double>& v = st.v[i];
    for (std::size_t j = 0; j < tensor->numel(); ++j) {
      double w = static_cast<double>(tensor->data[j]);
      if (wd) w -= lr * c.weight_decay * w;
      const double g = static_cast<double>(tensor->grad[j]);
      m[j] = c.adam_beta1 * m[j] + (1.0 - c.adam_beta1) * g;
      v[j] = c.adam_beta2 * v[j] + (1.0 - c.adam_beta2) * g * g;
      w -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + c.adam_eps);
      tensor->data[j] = static_cast<float>(w);
    }
  }
}

/// Joint L2 clipping over all gradients.  Returns the pre-clip norm.
inline double clip_global_norm(net::ModelParams& p, double max_norm) {
  auto tensors = p.named_tensors();
  double sq = 0.0;
  for (auto& [name, t] : tensors)
    if (t->requires_grad)
      for (float g : t->grad) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    // deflate by one single-precision ulp factor so the bound still holds
    // after each scaled gradient rounds to float
    const double scale = max_norm / norm * (1.0 - 0x1p-23);
    double check = 0.0;
    for (auto& [name, t] : tensors)
      if (t->requires_grad)
        for (float& g : t->grad) {
          g = static_cast<float>(g * scale);
          check += static_cast<double>(g) * g;
        }
    if (std::sqrt(check) > max_norm + 1e-12)
      throw std::logic_error("clip_global_norm: bound violated after scaling");
  }
  return norm;
}

/// Halves the rate after `patience` consecutive epochs without a relative
/// improvement beyond the threshold.  The streak resets on improvement and
/// on each reduction.
struct PlateauScheduler {
  double lr;
  double factor;
  std::size_t patience;
  double rel_threshold;
  double floor;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stagnant = 0;

  PlateauScheduler(const TrainConfig& c)
      : lr(c.lr), factor(c.plateau_factor), patience(c.plateau_patience),
        rel_threshold(c.plateau_rel_threshold), floor(c.lr_floor) {}

  /// Records one epoch's validation loss; returns the rate for the next
  /// epoch.
  double observe(double val_loss) {
    if (val_loss < best * (1.0 - rel_threshold)) {
      best = val_loss;
      stagnant = 0;
    } else if (++stagnant >= patience) {
      if (lr > floor) lr = std::max(lr * factor, floor);  // never raises
      stagnant = 0;
    }
    return lr;
  }
};

struct ValMetrics {
  double mse = 0.0;             // normalized target space
  double rmse_physical = 0.0;   // W/m^2, after denormalize + clamps
};

/// Eval-mode metrics over a whole split, batched.
inline ValMetrics eval_split(const SampleSet& set, net::ModelParams& p,
                             const NormStats& stats,
                             std::size_t batch_size = 256) {
  if (set.size() == 0) throw std::invalid_argument("eval_split: empty split");
  const std::size_t rows = set.input_rows(), cols = set.input_cols();
  if (rows != p.config.hankel_rows() || cols != p.config.conv_in())
    throw std::invalid_argument("eval_split: sample/model shape mismatch");
  double mse_sum = 0.0, phys_sq_sum = 0.0;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    const std::size_t b = std::min(batch_size, set.size() - start);
    ad::Tensor<float> x({b, rows, cols});
    ad::Tensor<float> gs({b}), gk({b});
    for (std::size_t i = 0; i < b; ++i) {
      set.unroll_input(start + i,
                       std::span<float>(x.data.data() + i * rows * cols,
                                        rows * cols));
      gs.data[i] = set.samples[start + i].gate_sza;
      gk.data[i] = set.samples[start + i].gate_kt;
    }
    ad::Graph<float> g(0, /*grad_enabled=*/false);
    const auto& pred = g.value(net::build_forward(
        g, p, std::move(x), std::move(gs), std::move(gk), /*training=*/false));
    for (std::size_t i = 0; i < b; ++i) {
      const SampleSet::Meta& meta = set.samples[start + i];
      const double pn = static_cast<double>(pred.data[i]);
      const double dn = pn - static_cast<double>(meta.target);
      mse_sum += dn * dn;
      double phys = meta.target_is_night
                        ? 0.0
                        : std::max(0.0, stats.denormalize_target(pn));
      const double dp = phys - static_cast<double>(meta.target_raw);
      phys_sq_sum += dp * dp;
    }
  }
  const double n = static_cast<double>(set.size());
  return {mse_sum / n, std::sqrt(phys_sq_sum / n)};
}

/// Full training protocol: seeded shuffle, batched train-mode forward, MSE
/// loss, backward, global clip, Adam with decoupled decay; per epoch a
/// full-validation eval, plateau scheduling, best-checkpoint tracking, and
/// early stopping.  Returns the best-validation parameters.  A non-finite
/// loss or gradient aborts and returns the last good checkpoint.
inline std::pair<net::ModelParams, TrainHistory> train(
    const SampleSet& train_set, const SampleSet& val_set,
    const net::ModelConfig& mc, const TrainConfig& tc, const NormStats& stats,
    std::ostream* log = nullptr) {
  tc.validate();
  if (train_set.size() == 0 || val_set.size() == 0)
    throw std::invalid_argument("train: empty split");
  const auto t0 = std::chrono::steady_clock::now();

  net::ModelParams params = net::init_model(mc);
  params.enable_grads();
  AdamState adam = AdamState::init(params);
  Rng shuffle_rng(tc.seed);
  Rng mask_rng(tc.seed ^ 0xd1b54a32d192ed03ull);
  PlateauScheduler sched(tc);

  TrainHistory hist;
  net::ModelParams best = params;
  double best_val = std::numeric_limits<double>::infinity();
  double lr = tc.lr;

  const std::size_t rows = train_set.input_rows(), cols = train_set.input_cols();
  if (rows != mc.hankel_rows() || cols != mc.conv_in())
    throw std::invalid_argument("train: sample/model shape mismatch");
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += tc.batch_size) {
      const std::size_t b = std::min(tc.batch_size, order.size() - start);
      ad::Tensor<float> x({b, rows, cols});
      ad::Tensor<float> gs({b}), gk({b}), tgt({b});
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t s = order[start + i];
        train_set.unroll_input(
            s, std::span<float>(x.data.data() + i * rows * cols, rows * cols));
        gs.data[i] = train_set.samples[s].gate_sza;
        gk.data[i] = train_set.samples[s].gate_kt;
        tgt.data[i] = train_set.samples[s].target;
      }
      params.zero_grads();
      ad::Graph<float> g(mask_rng.next_u64());
      const ad::NodeId pred = net::build_forward(
          g, params, std::move(x), std::move(gs), std::move(gk),
          /*training=*/true);
      const ad::NodeId root = g.mse(pred, g.input(std::move(tgt)));
      const double loss = static_cast<double>(g.value(root).data[0]);
      if (!std::isfinite(loss)) {
        hist.aborted = true;
        hist.abort_reason = "non-finite training loss";
        break;
      }
      g.backward(root);
      try {
        clip_global_norm(params, tc.grad_clip_norm);
        adam_step(params, adam, tc, lr);
      } catch (const std::runtime_error& e) {
        hist.aborted = true;
        hist.abort_reason = e.what();
        break;
      }
      loss_sum += loss * static_cast<double>(b);
    }
    if (hist.aborted) break;

    EpochStats es;
    es.train_loss = loss_sum / static_cast<double>(train_set.size());
    const ValMetrics vm = eval_split(val_set, params, stats, tc.batch_size);
    es.val_loss = vm.mse;
    es.val_rmse_physical = vm.rmse_physical;
    es.lr = lr;
    hist.epochs.push_back(es);
    if (log)
      *log << "epoch " << epoch << " train " << es.train_loss << " val "
           << es.val_loss << " rmse " << es.val_rmse_physical << " lr " << lr
           << "\n";

    if (es.val_loss < best_val) {
      best_val = es.val_loss;
      best = params;
      hist.best_epoch = epoch;
    }
    lr = sched.observe(es.val_loss);
    if (hist.best_epoch != 0 && epoch - hist.best_epoch >= tc.early_stop_patience)
      break;
  }

  hist.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  // best_epoch == 0 means no epoch finished; best still holds the
  // initialization, the last good state there is.
  return {std::move(best), std::move(hist)};
}

/// Sidecar history file next to a checkpoint.
inline std::string history_csv(const TrainHistory& h) {
  std::string out = "epoch,train_loss,val_loss,val_rmse,lr\n";
  char line[192];
  for (std::size_t i = 0; i < h.epochs.size(); ++i) {
    const EpochStats& e = h.epochs[i];
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g,%.17g\n", i + 1,
                  e.train_loss, e.val_loss, e.val_rmse_physical, e.lr);
    out += line;
  }
  return out;
}

inline void write_history_csv(const std::string& path,
                              const TrainHistory& h) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  const std::string s = history_csv(h);
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace pissm::train
