/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace pissm::kernels {

// Every routine here is the single arithmetic definition of its operation:
// both the differentiable reference path and the preallocated inference
// runtime call these same bodies.  They are deliberately non-inline so the
// compiler emits one instantiation per type and both callers execute
// byte-identical code, which is what makes reference/runtime outputs
// bit-exact.  Loop nests keep the innermost index contiguous in memory and
// avoid cross-iteration reductions so they vectorize without reassociation.

/// C (m x n) += / = A (m x k) * B (k x n), all row-major.
template <typename T>
[[gnu::noinline]] void gemm_nn(const T* a, const T* b, T* c, std::size_t m,
                               std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) ci[j] = T(0);
    const T* ai = a + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const T s = ai[l];
      const T* bl = b + l * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += s * bl[j];
    }
  }
}

/// out (n x m) = transpose of in (m x n).
template <typename T>
[[gnu::noinline]] void transpose(const T* in, T* out, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
}

/// Temporal convolution, kernel width 3, zero padding 1 (output length ==
/// input length).  x: (tlen, cin), k: (3, cin, cout), b: (cout), y: (tlen, cout).
template <typename T>
[[gnu::noinline]] void conv1d_same3(const T* x, const T* k, const T* b, T* y,
                                    std::size_t tlen, std::size_t cin,
                                    std::size_t cout) {
  for (std::size_t t = 0; t < tlen; ++t) {
    T* yt = y + t * cout;
    for (std::size_t o = 0; o < cout; ++o) yt[o] = b[o];
    for (std::size_t dt = 0; dt < 3; ++dt) {
      if (t + dt < 1 || t + dt - 1 >= tlen) continue;
      const T* xs = x + (t + dt - 1) * cin;
      const T* kd = k + dt * cin * cout;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T s = xs[ci];
        const T* kc = kd + ci * cout;
        for (std::size_t o = 0; o < cout; ++o) yt[o] += s * kc[o];
      }
    }
  }
}

/// Gradient of conv1d_same3.  kt is k transposed per tap to (3, cout, cin)
/// so the dx update streams contiguously; pass nullptr for any output that
/// is not needed.  All gradient buffers are accumulated into.
template <typename T>
[[gnu::noinline]] void conv1d_same3_bwd(const T* x, const T* kt, const T* dy,
                                        T* dx, T* dk, T* db, std::size_t tlen,
                                        std::size_t cin, std::size_t cout) {
  for (std::size_t t = 0; t < tlen; ++t) {
    const T* gy = dy + t * cout;
    if (db)
      for (std::size_t o = 0; o < cout; ++o) db[o] += gy[o];
    for (std::size_t dt = 0; dt < 3; ++dt) {
      if (t + dt < 1 || t + dt - 1 >= tlen) continue;
      const std::size_t ts = t + dt - 1;
      if (dk) {
        const T* xs = x + ts * cin;
        T* kd = dk + dt * cin * cout;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const T s = xs[ci];
          T* kc = kd + ci * cout;
          for (std::size_t o = 0; o < cout; ++o) kc[o] += s * gy[o];
        }
      }
      if (dx) {
        T* gx = dx + ts * cin;
        const T* kd = kt + dt * cout * cin;
        for (std::size_t o = 0; o < cout; ++o) {
          const T s = gy[o];
          const T* ko = kd + o * cin;
          for (std::size_t ci = 0; ci < cin; ++ci) gx[ci] += s * ko[ci];
        }
      }
    }
  }
}

template <typename T>
[[gnu::noinline]] void relu(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
[[gnu::noinline]] void sigmoid(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
}

/// Row-wise layer normalization over the trailing dimension h.
/// save_mean / save_rstd hold one entry per row for the backward pass and
/// may be nullptr in inference contexts.
template <typename T>
[[gnu::noinline]] void layer_norm(const T* x, const T* gain, const T* bias,
                                  T* y, T* save_mean, T* save_rstd,
                                  std::size_t rows, std::size_t h, T eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * h;
    T* yr = y + r * h;
    T mean = T(0);
    for (std::size_t i = 0; i < h; ++i) mean += xr[i];
    mean /= static_cast<T>(h);
    T var = T(0);
    for (std::size_t i = 0; i < h; ++i) {
      const T d = xr[i] - mean;
      var += d * d;
    }
    var /= static_cast<T>(h);
    const T rstd = T(1) / std::sqrt(var + eps);
    for (std::size_t i = 0; i < h; ++i)
      yr[i] = (xr[i] - mean) * rstd * gain[i] + bias[i];
    if (save_mean) save_mean[r] = mean;
    if (save_rstd) save_rstd[r] = rstd;
  }
}

template <typename T>
[[gnu::noinline]] void layer_norm_bwd(const T* x, const T* gain,
                                      const T* save_mean, const T* save_rstd,
                                      const T* dy, T* dx, T* dgain, T* dbias,
                                      std::size_t rows, std::size_t h) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * h;
    const T* gy = dy + r * h;
    const T mean = save_mean[r];
    const T rstd = save_rstd[r];
    T sum_g = T(0);
    T sum_gx = T(0);
    for (std::size_t i = 0; i < h; ++i) {
      const T xhat = (xr[i] - mean) * rstd;
      const T g = gy[i] * gain[i];
      sum_g += g;
      sum_gx += g * xhat;
      if (dgain) dgain[i] += gy[i] * xhat;
      if (dbias) dbias[i] += gy[i];
    }
    if (dx) {
      T* gx = dx + r * h;
      const T inv_h = T(1) / static_cast<T>(h);
      for (std::size_t i = 0; i < h; ++i) {
        const T xhat = (xr[i] - mean) * rstd;
        const T g = gy[i] * gain[i];
        gx[i] += rstd * (g - inv_h * sum_g - xhat * inv_h * sum_gx);
      }
    }
  }
}

/// Discretize the diagonal continuous system a_i = -exp(theta_i) with step
/// dt: m_i = exp(a_i dt) and the input scale s_i = (m_i - 1) / a_i.  The
/// closed form for s loses precision as |a dt| -> 0, so below 1e-4 a cubic
/// series is used instead.
template <typename T>
[[gnu::noinline]] void ssm_discretize(const T* theta, T dt, T* a, T* m, T* s,
                                      std::size_t h) {
  for (std::size_t i = 0; i < h; ++i) {
    const T ai = -std::exp(theta[i]);
    const T ad = ai * dt;
    const T mi = std::exp(ad);
    T si;
    if (std::abs(ad) < T(1e-4)) {
      si = dt * (T(1) + ad / T(2) + ad * ad / T(6) + ad * ad * ad / T(24));
    } else {
      si = (mi - T(1)) / ai;
    }
    if (a) a[i] = ai;
    m[i] = mi;
    s[i] = si;
  }
}

/// d s_i / d a_i matching ssm_discretize's branch choice.
template <typename T>
inline T ssm_dscale_da(T a, T m, T dt) {
  const T ad = a * dt;
  if (std::abs(ad) < T(1e-4)) {
    return dt * dt * (T(0.5) + ad / T(3) + ad * ad / T(8) + ad * ad * ad / T(30));
  }
  return (dt * m * a - (m - T(1))) / (a * a);
}

/// Diagonal linear recurrence hs_t = m (*) hs_{t-1} + u_t with hs_{-1} = 0.
/// u and hs may alias (the scan is then in place).
template <typename T>
[[gnu::noinline]] void ssm_scan(const T* u, const T* m, T* hs, std::size_t tlen,
                                std::size_t h) {
  for (std::size_t i = 0; i < h; ++i) hs[i] = u[i];
  for (std::size_t t = 1; t < tlen; ++t) {
    const T* ut = u + t * h;
    const T* hp = hs + (t - 1) * h;
    T* ht = hs + t * h;
    for (std::size_t i = 0; i < h; ++i) ht[i] = m[i] * hp[i] + ut[i];
  }
}

/// Adjoint of ssm_scan, run in place over the incoming state gradients:
/// lambda_t = dhs_t + m (*) lambda_{t+1}.
template <typename T>
[[gnu::noinline]] void ssm_scan_adjoint(T* dhs, const T* m, std::size_t tlen,
                                        std::size_t h) {
  for (std::size_t t = tlen - 1; t-- > 0;) {
    T* gt = dhs + t * h;
    const T* gn = dhs + (t + 1) * h;
    for (std::size_t i = 0; i < h; ++i) gt[i] += m[i] * gn[i];
  }
}

}  // namespace pissm::kernels
