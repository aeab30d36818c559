/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace pissm::hankel {

/// Geometry of the overlapping-subwindow embedding.
struct HankelSpec {
  std::size_t window = 24;     ///< n, input rows
  std::size_t subwindow = 5;   ///< k, rows per output block
  std::size_t features = 15;   ///< F, columns of the input matrix

  void validate() const {
    if (subwindow < 1 || subwindow > window)
      throw std::invalid_argument("hankel: need 1 <= subwindow <= window");
    if (features < 1) throw std::invalid_argument("hankel: features must be >= 1");
  }
};

/// Number of overlapping subwindows: n - k + 1.
inline std::size_t row_count(std::size_t window, std::size_t subwindow) {
  if (subwindow > window) throw std::invalid_argument("hankel: subwindow > window");
  return window - subwindow + 1;
}

/// Unrolls a (window x features) row-major matrix into the
/// (row_count x subwindow*features) Hankel state matrix.
///
/// Output row i is the concatenation of input rows i .. i+k-1 in
/// chronological order, each timestep's features contiguous. This
/// time-major layout is load-bearing: serialized models bake it into the
/// first convolution's kernel ordering.
template <typename T>
void unroll_into(std::span<const T> x, const HankelSpec& spec, std::span<T> out) {
  spec.validate();
  const std::size_t n = spec.window, k = spec.subwindow, f = spec.features;
  const std::size_t m = n - k + 1;
  if (x.size() != n * f) throw std::invalid_argument("hankel: input shape mismatch");
  if (out.size() != m * k * f) throw std::invalid_argument("hankel: output shape mismatch");
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * k * f;
    for (std::size_t j = 0; j < k; ++j) {
      const T* src = x.data() + (i + j) * f;
      for (std::size_t c = 0; c < f; ++c) row[j * f + c] = src[c];
    }
  }
}

template <typename T>
std::vector<T> unroll(std::span<const T> x, const HankelSpec& spec) {
  spec.validate();
  const std::size_t m = row_count(spec.window, spec.subwindow);
  std::vector<T> out(m * spec.subwindow * spec.features);
  unroll_into<T>(x, spec, out);
  return out;
}

}  // namespace pissm::hankel
