// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Euclidean spatio-temporal channel: spherical multi-scale random Fourier
// features blended with RBF anchor responses for geography, multi-frequency
// sine/cosine features with a decay gate for time, and the causal
// cross-manifold attention that fuses the Euclidean context with the
// hyperbolic semantic vectors.
//
// Frequency matrices and anchors are fixed after fitting; the affine
// projections are trainable and passed in explicitly so the same functions
// serve the plain forward pass and tests.

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "gtr/geo.hpp"
#include "gtr/linalg.hpp"
#include "gtr/manifold.hpp"

namespace gtr::stchannel {

// Unit sphere embedding of one coordinate pair (strict range checks).
inline std::array<double, 3> sphere_map(double lat, double lon) {
  return geo::sphere_map(lat, lon);
}

struct GeoEncoderState {
  std::vector<Matrix> freqs;  // per scale: 3 x m Gaussian frequencies
  Matrix anchors;             // r x 3 unit rows
  double sigma = 1.0;         // kernel width, radians
  int top_k = 8;
  bool fitted = false;

  int raw_dim() const {
    int m = 0;
    for (const Matrix& w : freqs) m += 2 * w.cols;
    return m;
  }
  int anchor_count() const { return anchors.rows; }
};

// Samples the multi-scale frequency matrices (std ladder 1, 4, 16, ... per
// chord unit) from the run seed. Anchors must be fitted separately.
GeoEncoderState init_geo_encoder(int scales, int freqs_per_scale, std::uint64_t seed);

// k-means anchors on the unit-sphere images of the training check-ins;
// sigma is the median pairwise anchor arc distance.
void fit_anchors(GeoEncoderState& state, const Matrix& unit_points, int anchors, int top_k,
                 std::uint64_t seed);

// Non-learnable feature blocks (constants w.r.t. parameters).
Matrix rff_raw(const GeoEncoderState& state, const std::vector<std::pair<double, double>>& pts);
Matrix rbf_raw(const GeoEncoderState& state, const std::vector<std::pair<double, double>>& pts);

struct GeoWeights {
  const Matrix* rff_w;   // d_geo x raw_dim
  const Matrix* rff_b;   // 1 x d_geo
  const Matrix* rbf_w;   // d_geo x anchors
  const Matrix* rbf_b;   // 1 x d_geo
  const Matrix* gate_w;  // 2 x 2*d_geo
  const Matrix* gate_b;  // 1 x 2
  const Matrix* out_w;   // d_geo x d_geo
  const Matrix* out_b;   // 1 x d_geo
};

// Full geographic encoding per point; longitude wraps modulo 360.
// Throws ConfigError when anchors were never fitted.
Matrix encode_geo(const std::vector<std::pair<double, double>>& pts, const GeoEncoderState& state,
                  const GeoWeights& w);

struct TimeEncoderState {
  std::vector<double> omega;   // M strictly increasing frequencies, radians/hour
  double clip_hours = 168.0;   // time gaps clipped to one week

  int raw_dim() const { return 1 + 2 * static_cast<int>(omega.size()) + 7 + 24; }
};

// Log-spaced periods from `max_period_hours` down to `min_period_hours`
// turn into strictly increasing frequencies.
TimeEncoderState init_time_encoder(int freqs, double min_period_hours = 1.0,
                                   double max_period_hours = 168.0);

// [dt; sin(w dt); cos(w dt); onehot(dow, 7); onehot(hour, 24)] per step.
// Throws DataError when timestamps decrease.
Matrix time_raw(const TimeEncoderState& state, const std::vector<std::int64_t>& ts);

struct TimeWeights {
  const Matrix* w;     // d_time x raw_dim
  const Matrix* b;     // 1 x d_time
  const Matrix* gate;  // 1 x d_time
};

struct TimeEncoding {
  Matrix features;            // L x d_time
  std::vector<double> gamma;  // decay gate in (0, 1) per step
};

TimeEncoding encode_time(const std::vector<std::int64_t>& ts, const TimeEncoderState& state,
                         const TimeWeights& w);

struct AttentionWeights {
  int heads = 4;
  const Matrix* q_w;  // d x d        (queries from v_s)
  const Matrix* q_b;
  const Matrix* k_w;  // d x d_ctx    (keys/values from u_c)
  const Matrix* k_b;
  const Matrix* v_w;
  const Matrix* v_b;
  const Matrix* o_w;  // d x d
  const Matrix* o_b;
};

// Causally masked multi-head attention in the tangent space followed by the
// Mobius fusion q_t = exp_o(v_s) (+) exp_o(out_proj). Outputs are on-manifold.
std::vector<manifold::LorentzPoint> cross_manifold_attention(
    const std::vector<manifold::TangentVector>& v_s, const Matrix& u_c,
    const AttentionWeights& w, double curvature = 1.0);

// The attention core on plain matrices (rows = steps); exposed for reuse by
// the recorded forward pass and for oracle tests.
Matrix causal_multihead_attention(const Matrix& queries, const Matrix& keys, const Matrix& values,
                                  int heads);

}  // namespace gtr::stchannel
