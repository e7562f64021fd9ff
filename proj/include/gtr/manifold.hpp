// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Lorentz-model hyperbolic geometry kernel.
//
// Points live on the upper hyperboloid  <x,x>_L = -c, x0 > 0  embedded in
// R^{n+1} with the time coordinate first. Tangent vectors are taken at the
// origin o = (sqrt(c), 0, ..., 0) and stored by their n spatial coordinates
// (the time coordinate of a tangent vector at o is identically zero).
//
// All functions are pure; none touch shared mutable state.

#pragma once

#include <span>
#include <vector>

#include "gtr/linalg.hpp"

namespace gtr::manifold {

struct LorentzPoint {
  std::vector<double> coords;  // length n+1, coords[0] is the time coordinate

  LorentzPoint() = default;
  explicit LorentzPoint(std::vector<double> c) : coords(std::move(c)) {}

  int spatial_dim() const { return static_cast<int>(coords.size()) - 1; }
  std::span<const double> spatial() const { return {coords.data() + 1, coords.size() - 1}; }
};

struct TangentVector {
  std::vector<double> spatial;  // length n

  TangentVector() = default;
  explicit TangentVector(std::vector<double> s) : spatial(std::move(s)) {}
  static TangentVector zero(int n) { return TangentVector(std::vector<double>(n, 0.0)); }

  int dim() const { return static_cast<int>(spatial.size()); }
  double norm() const { return std::sqrt(sqnorm(spatial)); }
};

// One angle per 2x2 block acting on consecutive spatial coordinate pairs;
// for odd n the last spatial coordinate is left fixed.
struct RotationParams {
  std::vector<double> angles;  // length floor(n/2), radians

  RotationParams() = default;
  explicit RotationParams(std::vector<double> a) : angles(std::move(a)) {}
  static RotationParams identity(int n) { return RotationParams(std::vector<double>(n / 2, 0.0)); }
};

// Origin of the hyperboloid at curvature parameter c.
LorentzPoint origin(int n, double c = 1.0);

// -x0*y0 + sum_i xi*yi. Throws DimensionError on length mismatch or length < 2.
double lorentz_inner(std::span<const double> x, std::span<const double> y);

// True when |<x,x>_L + c| <= tol and x0 > 0.
bool on_manifold(const LorentzPoint& x, double c = 1.0, double tol = 1e-6);

// Squared Lorentz distance  -2c - 2<x,y>_L  (clamped at zero against
// floating-point drift). Throws NumericError when an input is off-manifold
// beyond tolerance.
double sq_lorentz_dist(const LorentzPoint& x, const LorentzPoint& y, double c = 1.0);

// Exponential map at the origin. Exact at v = 0.
LorentzPoint exp_o(const TangentVector& v, double c = 1.0);

// Logarithmic map at the origin; inverse of exp_o on the manifold.
// Throws NumericError when the arccosh argument is below 1 - 1e-6.
TangentVector log_o(const LorentzPoint& x, double c = 1.0);

// Keeps the spatial coordinates of `raw` (length n+1, index 0 ignored) and
// recomputes the time coordinate; output is exactly on-manifold.
LorentzPoint project_to_hyperboloid(std::span<const double> raw, double c = 1.0);
LorentzPoint project_spatial(std::span<const double> spatial, double c = 1.0);

// Stereographic isometry between the Lorentz model and the Poincare ball.
std::vector<double> lorentz_to_poincare(const LorentzPoint& x, double c = 1.0);
LorentzPoint poincare_to_lorentz(std::span<const double> p, double c = 1.0);

// Mobius addition: maps both points to the Poincare ball, applies the
// gyrovector addition there, and maps back. Result is re-projected onto the
// hyperboloid; throws NumericError only if a NaN appears.
LorentzPoint mobius_add(const LorentzPoint& x, const LorentzPoint& y, double c = 1.0);

// Mobius addition directly on Poincare-ball vectors.
std::vector<double> mobius_add_poincare(std::span<const double> x, std::span<const double> y,
                                        double c = 1.0);

// Block-diagonal rotation of the spatial coordinates (a Lorentz isometry).
LorentzPoint rotate(const LorentzPoint& p, const RotationParams& r, double c = 1.0);

// Applies `weights` (n_out x n_in) to the spatial coordinates and recomputes
// the time coordinate.
LorentzPoint lorentz_linear(const LorentzPoint& x, const Matrix& weights, double c = 1.0);

// sinh(z)/z and asinh(z)/z with series fallbacks near zero.
double sinhc(double z);
double asinhc(double z);

}  // namespace gtr::manifold
