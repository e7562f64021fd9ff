// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>

#include "gtr/error.hpp"

namespace gtr::geo {

// Latitude/longitude (degrees) to a unit vector on the sphere.
// Inputs must satisfy lat in [-90, 90], lon in [-180, 180].
inline std::array<double, 3> sphere_map(double lat, double lon) {
  if (!(lat >= -90.0 && lat <= 90.0)) throw DataError("sphere_map: latitude out of range");
  if (!(lon >= -180.0 && lon <= 180.0)) throw DataError("sphere_map: longitude out of range");
  constexpr double kDeg = 0.017453292519943295;  // pi / 180
  const double phi = lat * kDeg;
  const double lam = lon * kDeg;
  return {std::cos(phi) * std::cos(lam), std::cos(phi) * std::sin(lam), std::sin(phi)};
}

// Wraps a longitude into [-180, 180].
inline double wrap_lon(double lon) {
  double x = std::fmod(lon + 180.0, 360.0);
  if (x < 0.0) x += 360.0;
  return x - 180.0;
}

// Great-circle angle between two unit vectors, numerically stable near 0 and pi.
inline double arc_distance(const std::array<double, 3>& u, const std::array<double, 3>& v) {
  const double d = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
  const double cx = u[1] * v[2] - u[2] * v[1];
  const double cy = u[2] * v[0] - u[0] * v[2];
  const double cz = u[0] * v[1] - u[1] * v[0];
  return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), d);
}

}  // namespace gtr::geo
