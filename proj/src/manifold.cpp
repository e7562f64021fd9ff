// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/manifold.hpp"

#include <algorithm>
#include <cmath>

#include "gtr/error.hpp"

namespace gtr::manifold {

namespace {
constexpr double kSmallNorm = 1e-7;    // below this, exp/log use series forms
constexpr double kAcoshClamp = 1e-12;  // arccosh arguments clamped to >= 1 + this
}  // namespace

double sinhc(double z) {
  if (std::abs(z) < 1e-4) {
    const double z2 = z * z;
    return 1.0 + z2 / 6.0 + z2 * z2 / 120.0;
  }
  return std::sinh(z) / z;
}

double asinhc(double z) {
  if (std::abs(z) < 1e-4) {
    const double z2 = z * z;
    return 1.0 - z2 / 6.0 + 3.0 * z2 * z2 / 40.0;
  }
  return std::asinh(z) / z;
}

LorentzPoint origin(int n, double c) {
  std::vector<double> coords(n + 1, 0.0);
  coords[0] = std::sqrt(c);
  return LorentzPoint(std::move(coords));
}

double lorentz_inner(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("lorentz_inner: length mismatch");
  if (x.size() < 2) throw DimensionError("lorentz_inner: need at least 2 coordinates");
  double s = -x[0] * y[0];
  for (std::size_t i = 1; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

bool on_manifold(const LorentzPoint& x, double c, double tol) {
  if (x.coords.size() < 2 || x.coords[0] <= 0.0) return false;
  return std::abs(lorentz_inner(x.coords, x.coords) + c) <= tol;
}

double sq_lorentz_dist(const LorentzPoint& x, const LorentzPoint& y, double c) {
  if (!on_manifold(x, c) || !on_manifold(y, c))
    throw NumericError("sq_lorentz_dist: input off the hyperboloid");
  const double d2 = -2.0 * c - 2.0 * lorentz_inner(x.coords, y.coords);
  return std::max(d2, 0.0);
}

LorentzPoint exp_o(const TangentVector& v, double c) {
  if (!all_finite(v.spatial)) throw NumericError("exp_o: non-finite input");
  const double sc = std::sqrt(c);
  const double r = v.norm();
  std::vector<double> coords(v.dim() + 1);
  coords[0] = sc * std::cosh(r / sc);
  const double f = sinhc(r / sc);  // sqrt(c)*sinh(r/sqrt(c))/r, series-safe at r=0
  for (int i = 0; i < v.dim(); ++i) coords[i + 1] = f * v.spatial[i];
  return LorentzPoint(std::move(coords));
}

TangentVector log_o(const LorentzPoint& x, double c) {
  const double sc = std::sqrt(c);
  const double arg = x.coords[0] / sc;  // equals -<o,x>_L / c
  if (arg < 1.0 - 1e-6) throw NumericError("log_o: arccosh argument below domain");
  const int n = x.spatial_dim();
  const double s = std::sqrt(sqnorm(x.spatial()));
  TangentVector v = TangentVector::zero(n);
  if (s < kSmallNorm) {
    // theta ~ s to O(s^3); the first-order map is exact at this scale.
    std::copy(x.spatial().begin(), x.spatial().end(), v.spatial.begin());
    return v;
  }
  const double theta = sc * std::acosh(std::max(arg, 1.0 + kAcoshClamp));
  const double f = theta / s;
  for (int i = 0; i < n; ++i) v.spatial[i] = f * x.coords[i + 1];
  return v;
}

LorentzPoint project_spatial(std::span<const double> spatial, double c) {
  if (!all_finite(spatial)) throw NumericError("project_to_hyperboloid: non-finite input");
  std::vector<double> coords(spatial.size() + 1);
  coords[0] = std::sqrt(c + sqnorm(spatial));
  std::copy(spatial.begin(), spatial.end(), coords.begin() + 1);
  return LorentzPoint(std::move(coords));
}

LorentzPoint project_to_hyperboloid(std::span<const double> raw, double c) {
  if (raw.size() < 2) throw DimensionError("project_to_hyperboloid: need at least 2 coordinates");
  return project_spatial(raw.subspan(1), c);
}

std::vector<double> lorentz_to_poincare(const LorentzPoint& x, double c) {
  const double sc = std::sqrt(c);
  const double denom = x.coords[0] + sc;
  std::vector<double> p(x.spatial_dim());
  for (int i = 0; i < x.spatial_dim(); ++i) p[i] = x.coords[i + 1] / denom;
  return p;
}

LorentzPoint poincare_to_lorentz(std::span<const double> p, double c) {
  const double sc = std::sqrt(c);
  double nsq = c * sqnorm(p);
  std::vector<double> coords(p.size() + 1);
  const double denom = 1.0 - nsq;
  coords[0] = sc * (1.0 + nsq) / denom;
  for (std::size_t i = 0; i < p.size(); ++i) coords[i + 1] = 2.0 * sc * p[i] / denom;
  return LorentzPoint(std::move(coords));
}

std::vector<double> mobius_add_poincare(std::span<const double> x, std::span<const double> y,
                                        double c) {
  if (x.size() != y.size()) throw DimensionError("mobius_add: dimension mismatch");
  const double xy = dot(x, y);
  const double nx = sqnorm(x);
  const double ny = sqnorm(y);
  const double ax = 1.0 + 2.0 * c * xy + c * ny;
  const double ay = 1.0 - c * nx;
  const double den = 1.0 + 2.0 * c * xy + c * c * nx * ny;
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = (ax * x[i] + ay * y[i]) / den;
  return z;
}

namespace {
// Rescales a Poincare vector strictly inside the ball when numeric drift
// pushed it onto or past the boundary.
void clamp_into_ball(std::vector<double>& p, double c) {
  const double nsq = c * sqnorm(p);
  if (nsq >= 1.0) {
    const double scale = std::sqrt((1.0 - 1e-12) / nsq);
    for (double& v : p) v *= scale;
  }
}
}  // namespace

LorentzPoint mobius_add(const LorentzPoint& x, const LorentzPoint& y, double c) {
  std::vector<double> px = lorentz_to_poincare(x, c);
  std::vector<double> py = lorentz_to_poincare(y, c);
  std::vector<double> pz = mobius_add_poincare(px, py, c);
  if (!all_finite(pz)) throw NumericError("mobius_add: NaN in gyrovector addition");
  clamp_into_ball(pz, c);
  LorentzPoint z = poincare_to_lorentz(pz, c);
  if (!all_finite(z.coords)) throw NumericError("mobius_add: NaN in ball-to-hyperboloid map");
  return project_spatial(z.spatial(), c);
}

LorentzPoint rotate(const LorentzPoint& p, const RotationParams& r, double c) {
  const int n = p.spatial_dim();
  std::vector<double> spatial(p.spatial().begin(), p.spatial().end());
  const int blocks = std::min(static_cast<int>(r.angles.size()), n / 2);
  for (int b = 0; b < blocks; ++b) {
    const double cs = std::cos(r.angles[b]);
    const double sn = std::sin(r.angles[b]);
    const double u = spatial[2 * b];
    const double v = spatial[2 * b + 1];
    spatial[2 * b] = cs * u - sn * v;
    spatial[2 * b + 1] = sn * u + cs * v;
  }
  return project_spatial(spatial, c);
}

LorentzPoint lorentz_linear(const LorentzPoint& x, const Matrix& weights, double c) {
  if (weights.cols != x.spatial_dim()) throw DimensionError("lorentz_linear: shape mismatch");
  std::vector<double> out(weights.rows);
  matvec(weights, x.spatial(), out);
  return project_spatial(out, c);
}

}  // namespace gtr::manifold
