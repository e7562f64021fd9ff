// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/kernels.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "gtr/manifold.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gtr::kernels {

namespace {
std::atomic<int> g_threads{0};

void exp_o_row(const Matrix& tangent, double c, Matrix& out, int i) {
  const double sc = std::sqrt(c);
  const double r = std::sqrt(sqnorm(tangent.row_span(i)));
  const double f = manifold::sinhc(r / sc);
  for (int j = 0; j < tangent.cols; ++j) out.at(i, j) = f * tangent.at(i, j);
}

double sqdist_one(std::span<const double> e_sp, double e_time, const Matrix& cand_sp,
                  std::span<const double> cand_time, double c, int j) {
  const double d2 = -2.0 * c + 2.0 * e_time * cand_time[j] - 2.0 * dot(e_sp, cand_sp.row_span(j));
  return std::max(d2, 0.0);
}

int nearest_centroid(const Matrix& points, const Matrix& centroids, int i) {
  int best = 0;
  double best_d = std::numeric_limits<double>::max();
  for (int cidx = 0; cidx < centroids.rows; ++cidx) {
    double d = 0.0;
    for (int j = 0; j < points.cols; ++j) {
      const double diff = points.at(i, j) - centroids.at(cidx, j);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = cidx;
    }
  }
  return best;
}

}  // namespace

void set_threads(int n) {
  g_threads.store(n < 0 ? 0 : n);
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

int threads() { return g_threads.load(); }

bool parallel_enabled() {
#ifdef _OPENMP
  return g_threads.load() != 1;
#else
  return false;
#endif
}

void exp_o_rows_serial(const Matrix& tangent, double c, Matrix& out) {
  for (int i = 0; i < tangent.rows; ++i) exp_o_row(tangent, c, out, i);
}

void exp_o_rows_parallel(const Matrix& tangent, double c, Matrix& out) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int i = 0; i < tangent.rows; ++i) exp_o_row(tangent, c, out, i);
#else
  exp_o_rows_serial(tangent, c, out);
#endif
}

Matrix exp_o_rows(const Matrix& tangent, double c) {
  Matrix out(tangent.rows, tangent.cols);
  if (parallel_enabled() && tangent.rows > 64) {
    exp_o_rows_parallel(tangent, c, out);
  } else {
    exp_o_rows_serial(tangent, c, out);
  }
  return out;
}

void sqdist_row_serial(std::span<const double> e_sp, double e_time, const Matrix& cand_sp,
                       std::span<const double> cand_time, double c, std::span<double> out) {
  for (int j = 0; j < cand_sp.rows; ++j)
    out[j] = sqdist_one(e_sp, e_time, cand_sp, cand_time, c, j);
}

void sqdist_row_parallel(std::span<const double> e_sp, double e_time, const Matrix& cand_sp,
                         std::span<const double> cand_time, double c, std::span<double> out) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int j = 0; j < cand_sp.rows; ++j)
    out[j] = sqdist_one(e_sp, e_time, cand_sp, cand_time, c, j);
#else
  sqdist_row_serial(e_sp, e_time, cand_sp, cand_time, c, out);
#endif
}

std::vector<double> sqdist_row(std::span<const double> e_sp, double e_time, const Matrix& cand_sp,
                               std::span<const double> cand_time, double c) {
  std::vector<double> out(cand_sp.rows);
  if (parallel_enabled() && cand_sp.rows > 512) {
    sqdist_row_parallel(e_sp, e_time, cand_sp, cand_time, c, out);
  } else {
    sqdist_row_serial(e_sp, e_time, cand_sp, cand_time, c, out);
  }
  return out;
}

void kmeans_assign_serial(const Matrix& points, const Matrix& centroids, std::span<int> assign) {
  for (int i = 0; i < points.rows; ++i) assign[i] = nearest_centroid(points, centroids, i);
}

void kmeans_assign_parallel(const Matrix& points, const Matrix& centroids, std::span<int> assign) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int i = 0; i < points.rows; ++i) assign[i] = nearest_centroid(points, centroids, i);
#else
  kmeans_assign_serial(points, centroids, assign);
#endif
}

}  // namespace gtr::kernels
