/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pissm/rng.hpp"

namespace pissm::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

/// Dense row-major tensor. Parameters carry a same-shape gradient
/// accumulator; intermediate graph values use the node-local gradient
/// storage inside the tape instead.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), T(0)) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_numel(shape))
      throw std::invalid_argument("tensor: data does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  static Tensor full(Shape s, T v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  static Tensor randn(Shape s, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = static_cast<T>(rng.normal(0.0, stddev));
    return t;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  void set_requires_grad(bool on = true) {
    requires_grad = on;
    if (on) grad.assign(data.size(), T(0));
  }

  void zero_grad() { grad.assign(data.size(), T(0)); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

}  // namespace pissm::ad
