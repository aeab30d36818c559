/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pissm/kernels.hpp"
#include "pissm/linalg.hpp"
#include "pissm/rng.hpp"

namespace pissm::ssm {

/// Continuous-time diagonal state space system
///
///   h'(t) = A h(t) + B x(t),   y(t) = C h(t) + D x(t)
///
/// with A = diag(a), a_i = -exp(theta_i).  The exponential parameterization
/// keeps every pole strictly in the left half plane for any real theta, so
/// discretization is well posed after every gradient step.  Matrices use
/// the plain math convention: (B x)_i = sum_j B[i][j] x_j.
struct SsmParams {
  std::vector<double> theta;
  linalg::Mat b_mat;
  linalg::Mat c_mat;
  std::vector<double> d_diag;
  double delta_t = 1.0;

  std::size_t state_dim() const { return theta.size(); }

  void validate() const {
    const std::size_t h = theta.size();
    if (h == 0) throw std::domain_error("ssm: empty theta");
    if (b_mat.rows != h || b_mat.cols != h || c_mat.rows != h ||
        c_mat.cols != h || d_diag.size() != h)
      throw std::domain_error("ssm: matrix shape mismatch");
    if (!(delta_t > 0.0)) throw std::domain_error("ssm: delta_t must be > 0");
    for (double t : theta)
      if (!std::isfinite(t)) throw std::domain_error("ssm: non-finite theta");
  }

  /// theta_i = log(0.5 + i/H) spreads decay timescales from ~2 hours down
  /// to ~40 minutes; B, C ~ normal(0, 1/sqrt(H)); D = 1; hourly grid.
  static SsmParams init(std::size_t h, Rng& rng) {
    SsmParams p;
    p.theta.resize(h);
    for (std::size_t i = 0; i < h; ++i)
      p.theta[i] = std::log(0.5 + static_cast<double>(i) / static_cast<double>(h));
    const double sd = 1.0 / std::sqrt(static_cast<double>(h));
    p.b_mat = linalg::Mat(h, h);
    p.c_mat = linalg::Mat(h, h);
    for (double& v : p.b_mat.a) v = rng.normal(0.0, sd);
    for (double& v : p.c_mat.a) v = rng.normal(0.0, sd);
    p.d_diag.assign(h, 1.0);
    p.delta_t = 1.0;
    return p;
  }
};

/// Zero-order-hold discretization of SsmParams: a_bar_i = exp(a_i dt) and
/// b_bar_scale_i = (exp(a_i dt) - 1) / a_i, so B_bar = diag(b_bar_scale) B.
struct DiscreteSsm {
  std::vector<double> a_bar;
  std::vector<double> b_bar_scale;
  linalg::Mat b_mat;
  linalg::Mat c_mat;
  std::vector<double> d_diag;

  std::size_t state_dim() const { return a_bar.size(); }
};

/// Allows dt = 0 (identity dynamics: a_bar = 1, scale = 0); callers wanting
/// the full invariant set run SsmParams::validate first.
inline DiscreteSsm discretize_diag(const SsmParams& p) {
  const std::size_t h = p.state_dim();
  DiscreteSsm d;
  d.a_bar.resize(h);
  d.b_bar_scale.resize(h);
  kernels::ssm_discretize(p.theta.data(), p.delta_t, static_cast<double*>(nullptr),
                          d.a_bar.data(), d.b_bar_scale.data(), h);
  d.b_mat = p.b_mat;
  d.c_mat = p.c_mat;
  d.d_diag = p.d_diag;
  return d;
}

/// Dense reference discretization: (exp(A dt), A^{-1}(exp(A dt) - I) B).
/// Verification only; throws SingularMatrixError for non-invertible A.
inline std::pair<linalg::Mat, linalg::Mat> discretize_dense(
    const linalg::Mat& a, const linalg::Mat& b, double dt) {
  if (!a.square() || a.rows != b.rows)
    throw std::invalid_argument("discretize_dense: shape mismatch");
  if (dt == 0.0)
    return {linalg::Mat::identity(a.rows), linalg::Mat(b.rows, b.cols)};
  const linalg::Mat a_bar = linalg::expm(linalg::scale(a, dt));
  const linalg::Mat m = linalg::sub(a_bar, linalg::Mat::identity(a.rows));
  // (e^{A dt} - I) A^{-1} commutes, so solve A X = (e^{A dt} - I) B
  return {a_bar, linalg::solve(a, linalg::matmul(m, b))};
}

/// Composition of affine maps h -> m (*) h + v, later map first argument:
/// (m, v) after (m', v') = (m m', m v' + v).
template <typename T>
inline void affine_compose(const T* m_later, const T* v_later,
                           const T* m_earlier, const T* v_earlier, T* m_out,
                           T* v_out, std::size_t h) {
  for (std::size_t i = 0; i < h; ++i) {
    v_out[i] = m_later[i] * v_earlier[i] + v_later[i];
    m_out[i] = m_later[i] * m_earlier[i];
  }
}

namespace detail {

/// u_t = b_bar_scale (*) (B x_t) for every step.
template <typename T>
void drive_inputs(const T* x, std::size_t tlen, std::size_t h, const T* s,
                  const T* b, T* u) {
  for (std::size_t t = 0; t < tlen; ++t) {
    const T* xt = x + t * h;
    T* ut = u + t * h;
    for (std::size_t i = 0; i < h; ++i) {
      T acc = T(0);
      const T* bi = b + i * h;
      for (std::size_t j = 0; j < h; ++j) acc += bi[j] * xt[j];
      ut[i] = s[i] * acc;
    }
  }
}

template <typename T>
void readout(const T* x, const T* hs, std::size_t tlen, std::size_t h,
             const T* c, const T* d, T* y) {
  for (std::size_t t = 0; t < tlen; ++t) {
    const T* ht = hs + t * h;
    const T* xt = x + t * h;
    T* yt = y + t * h;
    for (std::size_t o = 0; o < h; ++o) {
      T acc = T(0);
      const T* co = c + o * h;
      for (std::size_t i = 0; i < h; ++i) acc += co[i] * ht[i];
      yt[o] = acc + d[o] * xt[o];
    }
  }
}

/// Sequential recurrence h_t = a_bar (*) h_{t-1} + u_t.  h0 may be null
/// (zero initial state).
template <typename T>
void scan_core_seq(const T* x, std::size_t tlen, std::size_t h, const T* m,
                   const T* s, const T* b, const T* c, const T* d,
                   const T* h0, T* y) {
  std::vector<T> hs(tlen * h);
  drive_inputs(x, tlen, h, s, b, hs.data());
  if (h0)
    for (std::size_t i = 0; i < h; ++i) hs[i] += m[i] * h0[i];
  kernels::ssm_scan(hs.data(), m, hs.data(), tlen, h);
  readout(x, hs.data(), tlen, h, c, d, y);
}

/// Associative-scan realization: each step is the affine map
/// (m, u_t); an inclusive scan under affine_compose yields the map taking
/// h0 to h_t, evaluated as h_t = M_t (*) h0 + V_t.
template <typename T>
void scan_core_parallel(const T* x, std::size_t tlen, std::size_t h,
                        const T* m, const T* s, const T* b, const T* c,
                        const T* d, const T* h0, T* y) {
  std::vector<T> mm(tlen * h), vv(tlen * h);
  drive_inputs(x, tlen, h, s, b, vv.data());
  for (std::size_t t = 0; t < tlen; ++t)
    for (std::size_t i = 0; i < h; ++i) mm[t * h + i] = m[i];
  for (std::size_t offset = 1; offset < tlen; offset *= 2)
    for (std::size_t t = tlen; t-- > offset;)
      affine_compose(mm.data() + t * h, vv.data() + t * h,
                     mm.data() + (t - offset) * h, vv.data() + (t - offset) * h,
                     mm.data() + t * h, vv.data() + t * h, h);
  std::vector<T> hs(tlen * h);
  for (std::size_t t = 0; t < tlen; ++t)
    for (std::size_t i = 0; i < h; ++i)
      hs[t * h + i] = (h0 ? mm[t * h + i] * h0[i] : T(0)) + vv[t * h + i];
  readout(x, hs.data(), tlen, h, c, d, y);
}

}  // namespace detail

/// y_t = C h_t + D (*) x_t over the sequential recurrence.  x_seq is
/// row-major (tlen, H); returns (tlen, H).
inline std::vector<double> ssm_scan(const std::vector<double>& x_seq,
                                    std::size_t tlen, const DiscreteSsm& d,
                                    const std::vector<double>& h0 = {}) {
  const std::size_t h = d.state_dim();
  if (x_seq.size() != tlen * h)
    throw std::invalid_argument("ssm_scan: x_seq size mismatch");
  if (!h0.empty() && h0.size() != h)
    throw std::invalid_argument("ssm_scan: h0 size mismatch");
  std::vector<double> y(tlen * h);
  if (tlen == 0) return y;
  detail::scan_core_seq(x_seq.data(), tlen, h, d.a_bar.data(),
                        d.b_bar_scale.data(), d.b_mat.a.data(),
                        d.c_mat.a.data(), d.d_diag.data(),
                        h0.empty() ? nullptr : h0.data(), y.data());
  return y;
}

inline std::vector<double> ssm_scan_parallel(const std::vector<double>& x_seq,
                                             std::size_t tlen,
                                             const DiscreteSsm& d,
                                             const std::vector<double>& h0 = {}) {
  const std::size_t h = d.state_dim();
  if (x_seq.size() != tlen * h)
    throw std::invalid_argument("ssm_scan_parallel: x_seq size mismatch");
  if (!h0.empty() && h0.size() != h)
    throw std::invalid_argument("ssm_scan_parallel: h0 size mismatch");
  std::vector<double> y(tlen * h);
  if (tlen == 0) return y;
  detail::scan_core_parallel(x_seq.data(), tlen, h, d.a_bar.data(),
                             d.b_bar_scale.data(), d.b_mat.a.data(),
                             d.c_mat.a.data(), d.d_diag.data(),
                             h0.empty() ? nullptr : h0.data(), y.data());
  return y;
}

/// Direct numerical integration of the continuous system under a
/// zero-order hold (x held constant over each grid interval), RK4 at
/// substep delta_t / substeps.  Readout at grid points matches the discrete
/// recurrence exactly up to integrator error; this is the oracle the ZOH
/// algebra is tested against.
inline std::vector<double> ode_oracle(const SsmParams& p,
                                      const std::vector<double>& x_seq,
                                      std::size_t tlen,
                                      const std::vector<double>& h0 = {},
                                      int substeps = 64) {
  const std::size_t h = p.state_dim();
  if (x_seq.size() != tlen * h)
    throw std::invalid_argument("ode_oracle: x_seq size mismatch");
  if (substeps < 1) throw std::invalid_argument("ode_oracle: substeps < 1");
  std::vector<double> a(h);
  for (std::size_t i = 0; i < h; ++i) a[i] = -std::exp(p.theta[i]);
  std::vector<double> state(h, 0.0);
  if (!h0.empty()) {
    if (h0.size() != h) throw std::invalid_argument("ode_oracle: h0 size mismatch");
    state = h0;
  }
  const double dt = p.delta_t / substeps;
  std::vector<double> w(h), k1(h), k2(h), k3(h), k4(h), tmp(h);
  std::vector<double> y(tlen * h);
  for (std::size_t t = 0; t < tlen; ++t) {
    const double* xt = x_seq.data() + t * h;
    for (std::size_t i = 0; i < h; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < h; ++j) acc += p.b_mat(i, j) * xt[j];
      w[i] = acc;
    }
    auto deriv = [&](const std::vector<double>& s, std::vector<double>& out) {
      for (std::size_t i = 0; i < h; ++i) out[i] = a[i] * s[i] + w[i];
    };
    for (int step = 0; step < substeps; ++step) {
      deriv(state, k1);
      for (std::size_t i = 0; i < h; ++i) tmp[i] = state[i] + 0.5 * dt * k1[i];
      deriv(tmp, k2);
      for (std::size_t i = 0; i < h; ++i) tmp[i] = state[i] + 0.5 * dt * k2[i];
      deriv(tmp, k3);
      for (std::size_t i = 0; i < h; ++i) tmp[i] = state[i] + dt * k3[i];
      deriv(tmp, k4);
      for (std::size_t i = 0; i < h; ++i)
        state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    double* yt = y.data() + t * h;
    for (std::size_t o = 0; o < h; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < h; ++i) acc += p.c_mat(o, i) * state[i];
      yt[o] = acc + p.d_diag[o] * xt[o];
    }
  }
  return y;
}

}  // namespace pissm::ssm
