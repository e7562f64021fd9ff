// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Context-driven selective state-space layer routed through the Euclidean
// tangent space: fixed diagonal state matrix A = -diag(log 1 .. log d),
// context-generated step sizes, zero-order-hold discretization with a series
// fallback near a = 0, selective input modulation, additive tangent-space
// recurrence with per-step re-projection onto the hyperboloid, and a
// Lorentz-linear residual output.

#pragma once

#include <span>
#include <vector>

#include "gtr/linalg.hpp"
#include "gtr/manifold.hpp"

namespace gtr::gtr_ssm {

// State coefficients -log(1..d): first channel 0, strictly decreasing.
std::vector<double> a_diag(int d);

// Trainable pieces of one layer (owned by the model's parameter store).
struct SsmLayerWeights {
  const Matrix* dt_weight;  // 1 x d
  const Matrix* dt_bias;    // 1 x d
  const Matrix* a_proj_w;   // d x ctx
  const Matrix* a_proj_b;   // 1 x d
  const Matrix* b_proj_w;   // d x ctx
  const Matrix* b_proj_b;   // 1 x d
  const Matrix* c_proj_w;   // d x ctx
  const Matrix* c_proj_b;   // 1 x d
  const Matrix* anchor;     // 1 x d tangent bias anchor
  const Matrix* out_w;      // d x d Lorentz-linear output matrix
};

// dt = softplus(A_proj(u_c) * dt_weight + dt_bias) * gamma, strictly positive.
// (The softplus enforces the positivity the ZOH discretization requires.)
std::vector<double> step_size(std::span<const double> u_c, double gamma,
                              const SsmLayerWeights& w, int d);

struct Discretized {
  std::vector<double> a_bar;  // in (0, 1]
  std::vector<double> b_bar;
};

// Per channel: a_bar = exp(dt*a); b_bar = (exp(dt*a) - 1)/a, with the cubic
// series below |dt*a| = 1e-4 (exact dt at a = 0). Throws NumericError when a
// step size is not positive.
Discretized discretize(std::span<const double> dt, std::span<const double> a);

// b_bar ⊙ B_proj(u_c) ⊙ sigmoid(C_proj(u_c)).
std::vector<double> modulate_input(std::span<const double> b_bar, std::span<const double> u_c,
                                   const SsmLayerWeights& w, int d);

struct ScanInputs {
  Matrix log_q;               // L x d tangent rows (log_o of the fused inputs)
  Matrix u_c;                 // L x ctx Euclidean context
  std::vector<double> gamma;  // L decay gates in (0, 1)
};

struct ScanResult {
  std::vector<manifold::LorentzPoint> outputs;  // per-step trajectory embedding
  Matrix h;                                     // L x d tangent states
  Matrix dt;                                    // L x d step sizes
};

// h_t = a_bar ⊙ h_{t-1} + b_bar ⊙ log_o(q_t) with h_0 = 0;
// H_t = exp_o(h_t) (+) exp_o(anchor); out_t = H_{t-1} (+) LorentzLinear(H_t).
// Linear in the sequence length. Throws NumericError (with the step index)
// if the state turns non-finite.
ScanResult scan(const ScanInputs& inputs, const SsmLayerWeights& w, double curvature = 1.0);

// Feeds each layer's outputs as the next layer's inputs (shared context).
// Returns the last layer's scan result.
ScanResult stack(std::span<const SsmLayerWeights> layers,
                 const std::vector<manifold::LorentzPoint>& q, const Matrix& u_c,
                 const std::vector<double>& gamma, double curvature = 1.0);

}  // namespace gtr::gtr_ssm
