// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstring>
#include <span>
#include <vector>

#include "gtr/error.hpp"
#include "gtr/rng.hpp"

namespace gtr {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 matrices.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
  Matrix(int r, int c, std::vector<double> data) : rows(r), cols(c), a(std::move(data)) {
    if (a.size() != static_cast<std::size_t>(r) * c) throw DimensionError("Matrix: data size mismatch");
  }

  static Matrix zeros(int r, int c) { return Matrix(r, c); }

  static Matrix row_vector(std::span<const double> v) {
    Matrix m(1, static_cast<int>(v.size()));
    std::copy(v.begin(), v.end(), m.a.begin());
    return m;
  }

  static Matrix randn(int r, int c, Rng& rng, double stddev = 1.0) {
    Matrix m(r, c);
    for (double& x : m.a) x = rng.normal(0.0, stddev);
    return m;
  }

  double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }

  std::span<double> row_span(int r) { return {row(r), static_cast<std::size_t>(cols)}; }
  std::span<const double> row_span(int r) const { return {row(r), static_cast<std::size_t>(cols)}; }

  std::size_t size() const { return a.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double v) { std::fill(a.begin(), a.end(), v); }
};

inline double dot(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double sqnorm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw DimensionError("axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// y = W x  with W (out x in), x (in), y (out).
inline void matvec(const Matrix& w, std::span<const double> x, std::span<double> y) {
  if (static_cast<int>(x.size()) != w.cols || static_cast<int>(y.size()) != w.rows)
    throw DimensionError("matvec: shape mismatch");
  for (int r = 0; r < w.rows; ++r) y[r] = dot(w.row_span(r), x);
}

inline bool all_finite(std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace gtr
