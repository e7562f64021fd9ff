// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel inner loops shared across modules. Every kernel has a serial
// reference implementation and an OpenMP variant; the serial form is the
// oracle in tests and the benchmark compares the two. Dispatching entry
// points pick the OpenMP path when more than one thread is configured.
//
// All kernels write each output element from exactly one iteration, so the
// parallel results are bitwise identical to the serial ones.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gtr/linalg.hpp"

namespace gtr::kernels {

// Process-wide worker count. 0 leaves the OpenMP default; 1 forces serial.
void set_threads(int n);
int threads();
bool parallel_enabled();

// Hyperboloid materialization of tangent rows: out[i] = spatial(exp_o(v_i)).
void exp_o_rows_serial(const Matrix& tangent, double c, Matrix& out);
void exp_o_rows_parallel(const Matrix& tangent, double c, Matrix& out);
Matrix exp_o_rows(const Matrix& tangent, double c);

// Squared Lorentz distances from one point (spatial rep) to candidate rows.
void sqdist_row_serial(std::span<const double> e_sp, double e_time, const Matrix& cand_sp,
                       std::span<const double> cand_time, double c, std::span<double> out);
void sqdist_row_parallel(std::span<const double> e_sp, double e_time, const Matrix& cand_sp,
                         std::span<const double> cand_time, double c, std::span<double> out);
std::vector<double> sqdist_row(std::span<const double> e_sp, double e_time, const Matrix& cand_sp,
                               std::span<const double> cand_time, double c);

// Nearest-centroid assignment (k-means inner step).
void kmeans_assign_serial(const Matrix& points, const Matrix& centroids, std::span<int> assign);
void kmeans_assign_parallel(const Matrix& points, const Matrix& centroids, std::span<int> assign);

// Runs fn(i) for i in [0, n) across the configured workers.
template <typename Fn>
void parallel_for(int n, Fn&& fn);

}  // namespace gtr::kernels

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gtr::kernels {

template <typename Fn>
void parallel_for(int n, Fn&& fn) {
#ifdef _OPENMP
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
#endif
  for (int i = 0; i < n; ++i) fn(i);
}

}  // namespace gtr::kernels
