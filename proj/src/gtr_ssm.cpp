// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/gtr_ssm.hpp"

#include <cmath>
#include <string>

#include "gtr/error.hpp"

namespace gtr::gtr_ssm {

namespace {
double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

std::vector<double> a_diag(int d) {
  std::vector<double> a(d);
  for (int i = 0; i < d; ++i) a[i] = -std::log(static_cast<double>(i + 1));
  return a;
}

std::vector<double> step_size(std::span<const double> u_c, double gamma,
                              const SsmLayerWeights& w, int d) {
  std::vector<double> dt(d);
  for (int i = 0; i < d; ++i) {
    const double proj = dot(w.a_proj_w->row_span(i), u_c) + w.a_proj_b->a[i];
    dt[i] = softplus(proj * w.dt_weight->a[i] + w.dt_bias->a[i]) * gamma;
  }
  return dt;
}

Discretized discretize(std::span<const double> dt, std::span<const double> a) {
  if (dt.size() != a.size()) throw DimensionError("discretize: channel mismatch");
  Discretized out;
  out.a_bar.resize(dt.size());
  out.b_bar.resize(dt.size());
  for (std::size_t i = 0; i < dt.size(); ++i) {
    if (!(dt[i] > 0.0)) throw NumericError("discretize: step size must be positive");
    const double z = dt[i] * a[i];
    out.a_bar[i] = std::exp(z);
    if (std::abs(z) < 1e-4) {
      out.b_bar[i] = dt[i] * (1.0 + z / 2.0 + z * z / 6.0);
    } else {
      out.b_bar[i] = (std::exp(z) - 1.0) / a[i];
    }
  }
  return out;
}

std::vector<double> modulate_input(std::span<const double> b_bar, std::span<const double> u_c,
                                   const SsmLayerWeights& w, int d) {
  std::vector<double> out(d);
  for (int i = 0; i < d; ++i) {
    const double b = dot(w.b_proj_w->row_span(i), u_c) + w.b_proj_b->a[i];
    const double c = dot(w.c_proj_w->row_span(i), u_c) + w.c_proj_b->a[i];
    out[i] = b_bar[i] * b * sigmoid(c);
  }
  return out;
}

ScanResult scan(const ScanInputs& inputs, const SsmLayerWeights& w, double curvature) {
  const int L = inputs.log_q.rows;
  const int d = inputs.log_q.cols;
  if (L < 1) throw DimensionError("scan: empty sequence");
  if (inputs.u_c.rows != L || static_cast<int>(inputs.gamma.size()) != L)
    throw DimensionError("scan: misaligned inputs");
  const std::vector<double> a = a_diag(d);

  ScanResult res;
  res.outputs.reserve(L);
  res.h = Matrix(L, d);
  res.dt = Matrix(L, d);

  const manifold::LorentzPoint anchor_pt = manifold::exp_o(
      manifold::TangentVector(std::vector<double>(w.anchor->a)), curvature);
  manifold::LorentzPoint h_proj = manifold::mobius_add(
      manifold::exp_o(manifold::TangentVector::zero(d), curvature), anchor_pt, curvature);

  std::vector<double> h(d, 0.0);
  for (int t = 0; t < L; ++t) {
    const std::vector<double> dt = step_size(inputs.u_c.row_span(t), inputs.gamma[t], w, d);
    const Discretized disc = discretize(dt, a);
    const std::vector<double> b_mod = modulate_input(disc.b_bar, inputs.u_c.row_span(t), w, d);
    for (int i = 0; i < d; ++i) {
      h[i] = disc.a_bar[i] * h[i] + b_mod[i] * inputs.log_q.at(t, i);
      res.h.at(t, i) = h[i];
      res.dt.at(t, i) = dt[i];
    }
    if (!all_finite(h))
      throw NumericError("scan: non-finite state at step " + std::to_string(t));

    const manifold::LorentzPoint re_proj = manifold::mobius_add(
        manifold::exp_o(manifold::TangentVector(std::vector<double>(h)), curvature), anchor_pt,
        curvature);
    res.outputs.push_back(manifold::mobius_add(
        h_proj, manifold::lorentz_linear(re_proj, *w.out_w, curvature), curvature));
    h_proj = re_proj;
  }
  return res;
}

ScanResult stack(std::span<const SsmLayerWeights> layers,
                 const std::vector<manifold::LorentzPoint>& q, const Matrix& u_c,
                 const std::vector<double>& gamma, double curvature) {
  if (layers.empty()) throw ConfigError("stack: need at least one layer");
  const int L = static_cast<int>(q.size());
  const int d = q.empty() ? 0 : q[0].spatial_dim();

  ScanInputs in;
  in.u_c = u_c;
  in.gamma = gamma;
  in.log_q = Matrix(L, d);
  for (int t = 0; t < L; ++t) {
    const manifold::TangentVector v = manifold::log_o(q[t], curvature);
    std::copy(v.spatial.begin(), v.spatial.end(), in.log_q.row(t));
  }

  ScanResult res;
  for (std::size_t layer = 0; layer < layers.size(); ++layer) {
    res = scan(in, layers[layer], curvature);
    if (layer + 1 < layers.size()) {
      for (int t = 0; t < L; ++t) {
        const manifold::TangentVector v = manifold::log_o(res.outputs[t], curvature);
        std::copy(v.spatial.begin(), v.spatial.end(), in.log_q.row(t));
      }
    }
  }
  return res;
}

}  // namespace gtr::gtr_ssm
