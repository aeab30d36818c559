/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pissm/kernels.hpp"
#include "pissm/net.hpp"
#include "pissm/records.hpp"
#include "pissm/rng.hpp"
#include "pissm/solar.hpp"

namespace pissm::edge {

/// Translation units that override global operator new (the test harness
/// and the benchmark binary do) bump this counter so bench() can report
/// observed allocations.  Binaries without the override simply leave it at
/// zero and the benchmark reports instrumentation absent.
inline std::atomic<std::size_t> g_allocations{0};

/// Fixed-buffer single-sample inference engine.  Everything is sized at
/// construction from the model config; predict_step touches no allocator
/// and matches the reference graph bit for bit because it runs the same
/// kernel bodies in the same order on the same values.
class InferenceArena {
 public:
  InferenceArena(const net::ModelParams& params, const NormStats& stats)
      : config_(params.config), stats_(stats) {
    config_.validate();
    stats_.validate();
    const std::size_t rows = config_.hankel_rows();
    const std::size_t cin = config_.conv_in();
    const std::size_t h = config_.hidden;

    conv_k_ = params.conv_k.data;
    conv_b_ = params.conv_b.data;
    ssm_b_ = params.ssm_b.data;
    ssm_c_ = params.ssm_c.data;
    ssm_d_ = params.ssm_d.data;
    ln_g_ = params.ln_g.data;
    ln_b_ = params.ln_b.data;
    gate_sza_w_ = params.gate_sza_w.data;
    gate_sza_b_ = params.gate_sza_b.data;
    gate_kt_w_ = params.gate_kt_w.data;
    gate_kt_b_ = params.gate_kt_b.data;
    fc_w_ = params.fc_w.data;
    fc_b_ = params.fc_b.data;
    out_w_ = params.out_w.data;
    out_b_ = params.out_b.data;

    // ZOH discretization depends only on weights and the fixed step, so it
    // happens exactly once, with the same kernel the training graph uses.
    m_.resize(h);
    s_.resize(h);
    kernels::ssm_discretize(params.ssm_theta.data.data(), 1.0f,
                            static_cast<float*>(nullptr), m_.data(), s_.data(),
                            h);

    input_.resize(rows * cin);
    conv_out_.resize(rows * h);
    p_buf_.resize(rows * h);
    hs_.resize(rows * h);
    ssm_out_.resize(rows * h);
    ln_out_.resize(rows * h);
    gate_s_.resize(h);
    gate_k_.resize(h);
    gated_.resize(h);
    fc_out_.resize(h);
    out_buf_.resize(1);

    total_bytes_ = sizeof(*this);
    for (const auto* v :
         {&conv_k_, &conv_b_, &ssm_b_, &ssm_c_, &ssm_d_, &ln_g_, &ln_b_,
          &gate_sza_w_, &gate_sza_b_, &gate_kt_w_, &gate_kt_b_, &fc_w_,
          &fc_b_, &out_w_, &out_b_, &m_, &s_, &input_, &conv_out_, &p_buf_,
          &hs_, &ssm_out_, &ln_out_, &gate_s_, &gate_k_, &gated_, &fc_out_,
          &out_buf_})
      total_bytes_ += v->size() * sizeof(float);
  }

  static InferenceArena from_bytes(std::span<const unsigned char> bytes) {
    auto [params, stats] = net::deserialize(bytes);
    return InferenceArena(params, stats);
  }

  static InferenceArena load(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return from_bytes(bytes);
  }

  const net::ModelConfig& config() const { return config_; }
  const NormStats& stats() const { return stats_; }
  std::size_t total_bytes() const { return total_bytes_; }

  /// One forecast step in W/m².  Steady-state: zero dynamic allocation.
  double predict_step(std::span<const float> hankel_input,
                      const net::GateInputs& gi,
                      const solar::SolarState& solar_next) {
    const std::size_t rows = config_.hankel_rows();
    const std::size_t cin = config_.conv_in();
    const std::size_t h = config_.hidden;
    if (hankel_input.size() != rows * cin)
      throw std::invalid_argument("predict_step: input size mismatch");
    for (float v : hankel_input)
      if (!std::isfinite(v))
        throw std::invalid_argument("predict_step: non-finite input");
    if (!std::isfinite(gi.sza_scaled) || !std::isfinite(gi.kt_scaled))
      throw std::invalid_argument("predict_step: non-finite gate input");
    if (solar_next.is_night) return 0.0;

    std::copy(hankel_input.begin(), hankel_input.end(), input_.begin());
    kernels::conv1d_same3(input_.data(), conv_k_.data(), conv_b_.data(),
                          conv_out_.data(), rows, cin, h);
    kernels::relu(conv_out_.data(), conv_out_.data(), rows * h);

    kernels::gemm_nn(conv_out_.data(), ssm_b_.data(), p_buf_.data(), rows, h,
                     h, false);
    for (std::size_t t = 0; t < rows; ++t)
      for (std::size_t i = 0; i < h; ++i)
        hs_[t * h + i] = s_[i] * p_buf_[t * h + i];
    kernels::ssm_scan(hs_.data(), m_.data(), hs_.data(), rows, h);
    kernels::gemm_nn(hs_.data(), ssm_c_.data(), ssm_out_.data(), rows, h, h,
                     false);
    for (std::size_t t = 0; t < rows; ++t)
      for (std::size_t i = 0; i < h; ++i)
        ssm_out_[t * h + i] += ssm_d_[i] * conv_out_[t * h + i];

    kernels::layer_norm(ssm_out_.data(), ln_g_.data(), ln_b_.data(),
                        ln_out_.data(), static_cast<float*>(nullptr),
                        static_cast<float*>(nullptr), rows, h, 1e-5f);
    const float* h_last = ln_out_.data() + (rows - 1) * h;

    const float sza = static_cast<float>(gi.sza_scaled);
    const float kt = static_cast<float>(gi.kt_scaled);
    for (std::size_t i = 0; i < h; ++i)
      gate_s_[i] = sza * gate_sza_w_[i] + gate_sza_b_[i];
    kernels::sigmoid(gate_s_.data(), gate_s_.data(), h);
    for (std::size_t i = 0; i < h; ++i)
      gate_k_[i] = kt * gate_kt_w_[i] + gate_kt_b_[i];
    kernels::sigmoid(gate_k_.data(), gate_k_.data(), h);

    // two separate rounded products, same order as the reference graph
    for (std::size_t i = 0; i < h; ++i) gated_[i] = h_last[i] * gate_s_[i];
    for (std::size_t i = 0; i < h; ++i) gated_[i] = gated_[i] * gate_k_[i];

    for (std::size_t o = 0; o < h; ++o) fc_out_[o] = fc_b_[o];
    kernels::gemm_nn(gated_.data(), fc_w_.data(), fc_out_.data(), 1, h, h,
                     true);
    kernels::relu(fc_out_.data(), fc_out_.data(), h);

    out_buf_[0] = out_b_[0];
    kernels::gemm_nn(fc_out_.data(), out_w_.data(), out_buf_.data(), 1, h, 1,
                     true);
    const float y = out_buf_[0] > 0.0f ? out_buf_[0] : 0.0f;

    const double phys =
        stats_.denormalize_target(static_cast<double>(y));
    return phys > 0.0 ? phys : 0.0;
  }

 private:
  net::ModelConfig config_;
  NormStats stats_;
  std::vector<float> conv_k_, conv_b_;
  std::vector<float> ssm_b_, ssm_c_, ssm_d_;
  std::vector<float> ln_g_, ln_b_;
  std::vector<float> gate_sza_w_, gate_sza_b_, gate_kt_w_, gate_kt_b_;
  std::vector<float> fc_w_, fc_b_, out_w_, out_b_;
  std::vector<float> m_, s_;  // precomputed discretization
  std::vector<float> input_, conv_out_, p_buf_, hs_, ssm_out_, ln_out_;
  std::vector<float> gate_s_, gate_k_, gated_, fc_out_, out_buf_;
  std::size_t total_bytes_ = 0;
};

struct BenchResult {
  std::size_t iters = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t allocations = 0;
  bool instrumented = false;
};

/// Times n_iters single-step predictions on pregenerated random inputs.
/// The allocation figure is the change in g_allocations across the timed
/// loop; `instrumented` records whether this binary overrides operator new.
inline BenchResult bench(InferenceArena& arena, std::size_t n_iters,
                         std::uint64_t seed = 1,
                         bool allocator_instrumented = false) {
  if (n_iters == 0) throw std::invalid_argument("bench: zero iterations");
  const std::size_t n_inputs = std::min<std::size_t>(n_iters, 32);
  const std::size_t in_size =
      arena.config().hankel_rows() * arena.config().conv_in();

  Rng rng(seed);
  std::vector<std::vector<float>> inputs(n_inputs);
  std::vector<net::GateInputs> gates(n_inputs);
  for (std::size_t i = 0; i < n_inputs; ++i) {
    inputs[i].resize(in_size);
    for (float& v : inputs[i])
      v = static_cast<float>(rng.uniform(-2.0, 2.0));
    gates[i].sza_scaled = rng.uniform(0.0, 0.5);  // daytime zenith range
    gates[i].kt_scaled = rng.uniform(0.0, 1.0);
  }
  solar::SolarState day;
  day.is_night = false;

  std::vector<double> times_ms(n_iters);
  arena.predict_step(inputs[0], gates[0], day);  // warm caches

  const std::size_t alloc_before = g_allocations.load();
  for (std::size_t it = 0; it < n_iters; ++it) {
    const std::size_t k = it % n_inputs;
    const auto t0 = std::chrono::steady_clock::now();
    arena.predict_step(inputs[k], gates[k], day);
    const auto t1 = std::chrono::steady_clock::now();
    times_ms[it] =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  const std::size_t alloc_after = g_allocations.load();

  std::vector<double> sorted = times_ms;
  std::sort(sorted.begin(), sorted.end());
  BenchResult r;
  r.iters = n_iters;
  double sum = 0.0;
  for (double t : times_ms) sum += t;
  r.mean_ms = sum / static_cast<double>(n_iters);
  r.p50_ms = sorted[(n_iters - 1) / 2];
  r.p95_ms = sorted[std::min(n_iters - 1, (n_iters * 95 + 99) / 100)];
  r.allocations = alloc_after - alloc_before;
  r.instrumented = allocator_instrumented;
  return r;
}

}  // namespace pissm::edge
