/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pissm/autodiff.hpp"
#include "pissm/bytes.hpp"
#include "pissm/records.hpp"
#include "pissm/rng.hpp"
#include "pissm/solar.hpp"
#include "pissm/tensor.hpp"

namespace pissm::net {

struct ModelConfig {
  std::size_t features = kFeatureCount;  // 15
  std::size_t window = 24;
  std::size_t subwindow = 5;
  std::size_t conv_filters = 64;
  std::size_t hidden = 64;
  std::size_t fc_units = 64;
  double dropout_rate = 0.2;
  std::uint64_t seed = 42;

  std::size_t hankel_rows() const { return window - subwindow + 1; }
  std::size_t conv_in() const { return subwindow * features; }

  void validate() const {
    if (features == 0 || window == 0 || subwindow == 0 || subwindow > window)
      throw std::domain_error("model config: bad window geometry");
    if (conv_filters == 0 || hidden == 0 || fc_units == 0)
      throw std::domain_error("model config: zero-width layer");
    if (conv_filters != hidden)
      throw std::domain_error(
          "model config: conv_filters must equal hidden (diagonal skip "
          "couples them one to one)");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw std::domain_error("model config: dropout_rate outside [0, 1)");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// All trainable tensors.  The ssm input matrix is stored input-major
/// (ssm_b[j][i] couples channel j to state i) and the output matrix
/// state-major (ssm_c[i][o]), so the hot loops stream rows contiguously;
/// both are plain learned matrices, so the orientation is free.
struct ModelParams {
  ModelConfig config;
  ad::Tensor<float> conv_k, conv_b;
  ad::Tensor<float> ssm_theta, ssm_b, ssm_c, ssm_d;
  ad::Tensor<float> ln_g, ln_b;
  ad::Tensor<float> gate_sza_w, gate_sza_b, gate_kt_w, gate_kt_b;
  ad::Tensor<float> fc_w, fc_b;
  ad::Tensor<float> out_w, out_b;

  /// Canonical (name, tensor) order; serialization and the optimizer both
  /// follow it.
  std::vector<std::pair<std::string, ad::Tensor<float>*>> named_tensors() {
    return {{"conv_kernel", &conv_k},   {"conv_bias", &conv_b},
            {"ssm_theta", &ssm_theta},  {"ssm_b", &ssm_b},
            {"ssm_c", &ssm_c},          {"ssm_d", &ssm_d},
            {"ln_gain", &ln_g},         {"ln_bias", &ln_b},
            {"gate_sza_w", &gate_sza_w}, {"gate_sza_b", &gate_sza_b},
            {"gate_kt_w", &gate_kt_w},  {"gate_kt_b", &gate_kt_b},
            {"fc_w", &fc_w},            {"fc_b", &fc_b},
            {"out_w", &out_w},          {"out_b", &out_b}};
  }
  std::vector<std::pair<std::string, const ad::Tensor<float>*>> named_tensors() const {
    auto mut = const_cast<ModelParams*>(this)->named_tensors();
    std::vector<std::pair<std::string, const ad::Tensor<float>*>> out;
    out.reserve(mut.size());
    for (auto& [n, t] : mut) out.emplace_back(n, t);
    return out;
  }

  void enable_grads() {
    for (auto& [name, t] : named_tensors()) t->set_requires_grad();
  }
  void zero_grads() {
    for (auto& [name, t] : named_tensors())
      if (t->requires_grad) t->zero_grad();
  }
};

inline std::size_t count_params(const ModelParams& p) {
  std::size_t n = 0;
  for (const auto& [name, t] : p.named_tensors()) n += t->numel();
  return n;
}

/// Deterministic initialization: weights fan-in-scaled normal, biases zero,
/// layer norm at identity, state poles spread over subhour-to-multihour
/// timescales, skip at one.  Gate weights scale with the width of the
/// vector they modulate so both gates start near half-open.
inline ModelParams init_model(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  Rng rng(config.seed);
  const std::size_t ci = config.conv_in(), cf = config.conv_filters;
  const std::size_t h = config.hidden, fc = config.fc_units;

  const double conv_sd = 1.0 / std::sqrt(3.0 * static_cast<double>(ci));
  p.conv_k = ad::Tensor<float>::randn({3, ci, cf}, rng, conv_sd);
  p.conv_b = ad::Tensor<float>({cf});

  p.ssm_theta = ad::Tensor<float>({h});
  for (std::size_t i = 0; i < h; ++i)
    p.ssm_theta.data[i] = static_cast<float>(
        std::log(0.5 + static_cast<double>(i) / static_cast<double>(h)));
  const double ssm_sd = 1.0 / std::sqrt(static_cast<double>(h));
  p.ssm_b = ad::Tensor<float>::randn({h, h}, rng, ssm_sd);
  p.ssm_c = ad::Tensor<float>::randn({h, h}, rng, ssm_sd);
  p.ssm_d = ad::Tensor<float>::full({h}, 1.0f);

  p.ln_g = ad::Tensor<float>::full({h}, 1.0f);
  p.ln_b = ad::Tensor<float>({h});

  p.gate_sza_w = ad::Tensor<float>::randn({h}, rng, ssm_sd);
  p.gate_sza_b = ad::Tensor<float>({h});
  p.gate_kt_w = ad::Tensor<float>::randn({h}, rng, ssm_sd);
  p.gate_kt_b = ad::Tensor<float>({h});

  p.fc_w = ad::Tensor<float>::randn({h, fc}, rng, 1.0 / std::sqrt(static_cast<double>(h)));
  p.fc_b = ad::Tensor<float>({fc});
  p.out_w = ad::Tensor<float>::randn({fc, 1}, rng, 1.0 / std::sqrt(static_cast<double>(fc)));
  p.out_b = ad::Tensor<float>({1});
  return p;
}

/// Physics gate inputs, already scaled into [0, 1]: zenith angle at the
/// forecast hour over 180, clipped clearness index at the last observed
/// hour over its clip ceiling.
struct GateInputs {
  double sza_scaled = 0.0;
  double kt_scaled = 0.0;
};

inline GateInputs make_gate_inputs(double sza_deg_at_t1, double kt_at_t) {
  GateInputs g;
  g.sza_scaled = sza_deg_at_t1 / 180.0;
  g.kt_scaled = std::min(std::max(kt_at_t, 0.0), solar::kKtClip) / solar::kKtClip;
  return g;
}

/// Records the full forward graph on g for a batch.  batch_x is
/// (B, rows, conv_in); gate vectors are (B).  Returns the (B) prediction
/// node in normalized target space (nonnegative by the terminal ReLU).
inline ad::NodeId build_forward(ad::Graph<float>& g, ModelParams& p,
                                ad::Tensor<float> batch_x,
                                ad::Tensor<float> gate_sza,
                                ad::Tensor<float> gate_kt, bool training) {
  const ModelConfig& c = p.config;
  if (batch_x.rank() != 3 || batch_x.dim(1) != c.hankel_rows() ||
      batch_x.dim(2) != c.conv_in())
    throw std::invalid_argument("forward: batch shape mismatch " +
                                ad::shape_str(batch_x.shape));
  const std::size_t batch = batch_x.dim(0);
  if (gate_sza.numel() != batch || gate_kt.numel() != batch)
    throw std::invalid_argument("forward: gate vector size mismatch");

  ad::NodeId n = g.conv1d_same(g.input(std::move(batch_x)), g.param(p.conv_k),
                               g.param(p.conv_b));
  n = g.relu(n);
  n = g.dropout(n, c.dropout_rate, training);
  n = g.ssm(n, g.param(p.ssm_theta), g.param(p.ssm_b), g.param(p.ssm_c),
            g.param(p.ssm_d), 1.0f);
  n = g.layer_norm(n, g.param(p.ln_g), g.param(p.ln_b));
  n = g.last_step(n);
  const ad::NodeId gs = g.sigmoid(g.scalar_affine(
      g.input(std::move(gate_sza)), g.param(p.gate_sza_w), g.param(p.gate_sza_b)));
  const ad::NodeId gk = g.sigmoid(g.scalar_affine(
      g.input(std::move(gate_kt)), g.param(p.gate_kt_w), g.param(p.gate_kt_b)));
  n = g.hadamard(g.hadamard(n, gs), gk);
  n = g.relu(g.linear(n, g.param(p.fc_w), g.param(p.fc_b)));
  n = g.linear(n, g.param(p.out_w), g.param(p.out_b));
  return g.relu(g.squeeze_last(n));
}

/// Standalone gate application for a single feature vector (Eqs of the
/// gating block): out = h (*) sigmoid(w_sza s + b_sza) (*) sigmoid(w_kt k + b_kt).
inline std::vector<double> physics_gate(std::span<const double> h_last,
                                        const GateInputs& gi,
                                        const ModelParams& p) {
  const std::size_t h = p.config.hidden;
  if (h_last.size() != h)
    throw std::invalid_argument("physics_gate: vector size mismatch");
  std::vector<double> out(h);
  for (std::size_t i = 0; i < h; ++i) {
    const double g1 = 1.0 / (1.0 + std::exp(-(static_cast<double>(p.gate_sza_w.data[i]) * gi.sza_scaled +
                                              static_cast<double>(p.gate_sza_b.data[i]))));
    const double g2 = 1.0 / (1.0 + std::exp(-(static_cast<double>(p.gate_kt_w.data[i]) * gi.kt_scaled +
                                              static_cast<double>(p.gate_kt_b.data[i]))));
    out[i] = h_last[i] * g1 * g2;
  }
  return out;
}

/// Single-sample forward; returns the normalized prediction (>= 0).
/// Training mode draws dropout from dropout_seed; eval mode is pure.
inline double forward(const TrainingSample& s, ModelParams& p, bool training,
                      std::uint64_t dropout_seed = 0) {
  const ModelConfig& c = p.config;
  if (s.hankel_input.size() != c.hankel_rows() * c.conv_in())
    throw std::invalid_argument("forward: sample input size mismatch");
  ad::Graph<float> g(dropout_seed, /*grad_enabled=*/false);
  ad::Tensor<float> x({1, c.hankel_rows(), c.conv_in()});
  std::copy(s.hankel_input.begin(), s.hankel_input.end(), x.data.begin());
  const ad::NodeId pred =
      build_forward(g, p, std::move(x), ad::Tensor<float>({1}, {s.gate_sza}),
                    ad::Tensor<float>({1}, {s.gate_kt}), training);
  return static_cast<double>(g.value(pred).data[0]);
}

/// Physical-space prediction: denormalize, clamp at zero, then hard night
/// clamp from the forecast hour's solar state.  The gates alone cannot
/// produce exact zeros; this post-process realizes the nighttime guarantee.
inline double predict_physical(const TrainingSample& s, ModelParams& p,
                               const NormStats& stats, bool target_is_night) {
  if (target_is_night) return 0.0;
  const double y = stats.denormalize_target(forward(s, p, /*training=*/false));
  return y > 0.0 ? y : 0.0;
}

inline double predict_physical(const TrainingSample& s, ModelParams& p,
                               const NormStats& stats,
                               const solar::SolarState& at_forecast_hour) {
  return predict_physical(s, p, stats, at_forecast_hour.is_night);
}

inline constexpr std::uint16_t kModelFormatVersion = 1;

/// Model file layout: magic "PISM", version u16, flags u16, config block
/// (six u32), normalization block (32 f64), shape table, float32 payload,
/// trailing CRC32 over everything before it.
inline std::vector<unsigned char> serialize(const ModelParams& p,
                                            const NormStats& stats) {
  ByteWriter w;
  w.put_u8('P');
  w.put_u8('I');
  w.put_u8('S');
  w.put_u8('M');
  w.put_u16(kModelFormatVersion);
  w.put_u16(0);  // flags
  const ModelConfig& c = p.config;
  for (std::size_t v : {c.features, c.window, c.subwindow, c.conv_filters,
                        c.hidden, c.fc_units})
    w.put_u32(static_cast<std::uint32_t>(v));
  stats.write(w);
  const auto tensors = p.named_tensors();
  w.put_u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.put_string(name);
    w.put_u32(static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->shape) w.put_u32(static_cast<std::uint32_t>(d));
  }
  for (const auto& [name, t] : tensors)
    for (float v : t->data) w.put_f32(v);
  w.put_crc_trailer();
  return w.take();
}

inline std::pair<ModelParams, NormStats> deserialize(
    std::span<const unsigned char> bytes) {
  ByteReader r(bytes);
  r.check_crc_trailer();
  if (r.get_u8() != 'P' || r.get_u8() != 'I' || r.get_u8() != 'S' ||
      r.get_u8() != 'M')
    throw SerializationError("model file: bad magic");
  const std::uint16_t version = r.get_u16();
  if (version != kModelFormatVersion)
    throw SerializationError("model file: unsupported version " +
                             std::to_string(version));
  r.get_u16();  // flags, reserved
  ModelConfig c;
  c.features = r.get_u32();
  c.window = r.get_u32();
  c.subwindow = r.get_u32();
  c.conv_filters = r.get_u32();
  c.hidden = r.get_u32();
  c.fc_units = r.get_u32();
  c.validate();
  if (c.features != kFeatureCount)
    throw SerializationError("model file: unsupported feature count");
  NormStats stats = NormStats::read(r);
  stats.validate();

  ModelParams p = init_model(c);  // establishes expected tensor shapes
  auto tensors = p.named_tensors();
  const std::uint32_t count = r.get_u32();
  if (count != tensors.size())
    throw SerializationError("model file: unexpected tensor count");
  for (auto& [name, t] : tensors) {
    if (r.get_string() != name)
      throw SerializationError("model file: tensor order mismatch at " + name);
    const std::uint32_t rank = r.get_u32();
    if (rank != t->rank())
      throw SerializationError("model file: rank mismatch at " + name);
    for (std::size_t d : t->shape)
      if (r.get_u32() != d)
        throw SerializationError("model file: shape mismatch at " + name);
  }
  for (auto& [name, t] : tensors)
    for (float& v : t->data) v = r.get_f32();
  if (r.remaining() != sizeof(std::uint32_t))
    throw SerializationError("model file: trailing garbage");
  return {std::move(p), std::move(stats)};
}

inline void save_model(const std::string& path, const ModelParams& p,
                       const NormStats& stats) {
  write_file_bytes(path, serialize(p, stats));
}

inline std::pair<ModelParams, NormStats> load_model(const std::string& path) {
  const std::vector<unsigned char> bytes = read_file_bytes(path);
  return deserialize(bytes);
}

}  // namespace pissm::net
