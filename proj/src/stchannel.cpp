// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/stchannel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gtr/dataio.hpp"
#include "gtr/error.hpp"
#include "gtr/rng.hpp"

namespace gtr::stchannel {

GeoEncoderState init_geo_encoder(int scales, int freqs_per_scale, std::uint64_t seed) {
  if (scales < 1 || freqs_per_scale < 1) throw ConfigError("geo encoder needs scales, freqs >= 1");
  GeoEncoderState s;
  Rng rng = Rng(seed).fork(0x9e0);
  double std = 1.0;
  for (int sc = 0; sc < scales; ++sc) {
    s.freqs.push_back(Matrix::randn(3, freqs_per_scale, rng, std));
    std *= 4.0;
  }
  return s;
}

void fit_anchors(GeoEncoderState& state, const Matrix& unit_points, int anchors, int top_k,
                 std::uint64_t seed) {
  if (anchors < 1) throw ConfigError("fit_anchors: need at least one anchor");
  const dataio::KMeansResult km = dataio::kmeans(unit_points, anchors, seed);
  state.anchors = km.centroids;
  for (int i = 0; i < state.anchors.rows; ++i) {
    const double n = std::sqrt(sqnorm(state.anchors.row_span(i)));
    if (n > 1e-12) {
      for (int j = 0; j < 3; ++j) state.anchors.at(i, j) /= n;
    } else {
      state.anchors.at(i, 0) = 1.0;
      state.anchors.at(i, 1) = 0.0;
      state.anchors.at(i, 2) = 0.0;
    }
  }
  // Median pairwise arc distance sets the kernel width.
  std::vector<double> arcs;
  for (int i = 0; i < anchors; ++i) {
    for (int j = i + 1; j < anchors; ++j) {
      const std::array<double, 3> a{state.anchors.at(i, 0), state.anchors.at(i, 1),
                                    state.anchors.at(i, 2)};
      const std::array<double, 3> b{state.anchors.at(j, 0), state.anchors.at(j, 1),
                                    state.anchors.at(j, 2)};
      arcs.push_back(geo::arc_distance(a, b));
    }
  }
  if (arcs.empty()) {
    state.sigma = 1.0;
  } else {
    std::nth_element(arcs.begin(), arcs.begin() + arcs.size() / 2, arcs.end());
    state.sigma = std::max(arcs[arcs.size() / 2], 1e-6);
  }
  state.top_k = std::min(top_k, anchors);
  state.fitted = true;
}

namespace {

std::array<double, 3> unit_of(std::pair<double, double> pt) {
  return geo::sphere_map(pt.first, geo::wrap_lon(pt.second));
}

}  // namespace

Matrix rff_raw(const GeoEncoderState& state, const std::vector<std::pair<double, double>>& pts) {
  const int L = static_cast<int>(pts.size());
  Matrix out(L, state.raw_dim());
  for (int i = 0; i < L; ++i) {
    const auto u = unit_of(pts[i]);
    int col = 0;
    for (const Matrix& w : state.freqs) {
      for (int f = 0; f < w.cols; ++f) {
        const double t = w.at(0, f) * u[0] + w.at(1, f) * u[1] + w.at(2, f) * u[2];
        out.at(i, col + f) = std::cos(t);
        out.at(i, col + w.cols + f) = std::sin(t);
      }
      col += 2 * w.cols;
    }
  }
  return out;
}

Matrix rbf_raw(const GeoEncoderState& state, const std::vector<std::pair<double, double>>& pts) {
  if (!state.fitted) throw ConfigError("encode_geo: anchors not fitted");
  const int L = static_cast<int>(pts.size());
  const int r = state.anchor_count();
  Matrix out(L, r);
  std::vector<int> order(r);
  for (int i = 0; i < L; ++i) {
    const auto u = unit_of(pts[i]);
    for (int j = 0; j < r; ++j) {
      const std::array<double, 3> a{state.anchors.at(j, 0), state.anchors.at(j, 1),
                                    state.anchors.at(j, 2)};
      const double z = geo::arc_distance(u, a) / state.sigma;
      out.at(i, j) = std::exp(-z * z);
    }
    // Keep the top_k responses (ties resolved by anchor index), zero the rest.
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return out.at(i, a) > out.at(i, b); });
    for (int rank = state.top_k; rank < r; ++rank) out.at(i, order[rank]) = 0.0;
  }
  return out;
}

namespace {

Matrix affine_rows(const Matrix& x, const Matrix& w, const Matrix& b) {
  if (x.cols != w.cols || b.cols != w.rows) throw DimensionError("affine: shape mismatch");
  Matrix y(x.rows, w.rows);
  for (int i = 0; i < x.rows; ++i) {
    for (int r = 0; r < w.rows; ++r) y.at(i, r) = dot(x.row_span(i), w.row_span(r)) + b.a[r];
  }
  return y;
}

}  // namespace

Matrix encode_geo(const std::vector<std::pair<double, double>>& pts, const GeoEncoderState& state,
                  const GeoWeights& w) {
  if (!state.fitted) throw ConfigError("encode_geo: anchors not fitted");
  const Matrix rff = affine_rows(rff_raw(state, pts), *w.rff_w, *w.rff_b);
  const Matrix rbf = affine_rows(rbf_raw(state, pts), *w.rbf_w, *w.rbf_b);
  const int L = rff.rows;
  const int d = rff.cols;

  Matrix fused(L, d);
  for (int i = 0; i < L; ++i) {
    // Gate over the concatenated projections, softmax to two weights.
    double g0 = w.gate_b->a[0];
    double g1 = w.gate_b->a[1];
    for (int j = 0; j < d; ++j) {
      g0 += w.gate_w->at(0, j) * rff.at(i, j) + w.gate_w->at(0, d + j) * rbf.at(i, j);
      g1 += w.gate_w->at(1, j) * rff.at(i, j) + w.gate_w->at(1, d + j) * rbf.at(i, j);
    }
    const double mx = std::max(g0, g1);
    const double e0 = std::exp(g0 - mx);
    const double e1 = std::exp(g1 - mx);
    const double w1 = e0 / (e0 + e1);
    const double w2 = e1 / (e0 + e1);
    for (int j = 0; j < d; ++j) fused.at(i, j) = w1 * rff.at(i, j) + w2 * rbf.at(i, j);
  }
  return affine_rows(fused, *w.out_w, *w.out_b);
}

TimeEncoderState init_time_encoder(int freqs, double min_period_hours, double max_period_hours) {
  if (freqs < 1) throw ConfigError("time encoder needs at least one frequency");
  if (min_period_hours <= 0.0 || max_period_hours < min_period_hours)
    throw ConfigError("time encoder period range invalid");
  TimeEncoderState s;
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  for (int i = 0; i < freqs; ++i) {
    const double frac = (freqs == 1) ? 0.0 : static_cast<double>(i) / (freqs - 1);
    // Periods descend geometrically so the frequencies strictly increase.
    const double period = max_period_hours * std::pow(min_period_hours / max_period_hours, frac);
    s.omega.push_back(kTwoPi / period);
  }
  s.clip_hours = max_period_hours;
  return s;
}

Matrix time_raw(const TimeEncoderState& state, const std::vector<std::int64_t>& ts) {
  const int L = static_cast<int>(ts.size());
  const int M = static_cast<int>(state.omega.size());
  Matrix out(L, state.raw_dim());
  for (int i = 0; i < L; ++i) {
    if (i > 0 && ts[i] < ts[i - 1]) throw DataError("encode_time: timestamps decrease");
    double dt = (i == 0) ? 0.0 : static_cast<double>(ts[i] - ts[i - 1]) / 3600.0;
    dt = std::clamp(dt, 0.0, state.clip_hours);
    out.at(i, 0) = dt;
    for (int f = 0; f < M; ++f) {
      out.at(i, 1 + f) = std::sin(state.omega[f] * dt);
      out.at(i, 1 + M + f) = std::cos(state.omega[f] * dt);
    }
    out.at(i, 1 + 2 * M + dataio::day_of_week(ts[i])) = 1.0;
    out.at(i, 1 + 2 * M + 7 + dataio::hour_of_day(ts[i])) = 1.0;
  }
  return out;
}

TimeEncoding encode_time(const std::vector<std::int64_t>& ts, const TimeEncoderState& state,
                         const TimeWeights& w) {
  TimeEncoding enc;
  enc.features = affine_rows(time_raw(state, ts), *w.w, *w.b);
  enc.gamma.resize(ts.size());
  for (int i = 0; i < enc.features.rows; ++i) {
    const double z = dot(enc.features.row_span(i), w.gate->row_span(0));
    enc.gamma[i] = 1.0 / (1.0 + std::exp(-z));
  }
  return enc;
}

Matrix causal_multihead_attention(const Matrix& queries, const Matrix& keys, const Matrix& values,
                                  int heads) {
  const int L = queries.rows;
  const int d = queries.cols;
  if (keys.rows != L || values.rows != L || keys.cols != d || values.cols != d)
    throw DimensionError("attention: shape mismatch");
  if (heads < 1 || d % heads != 0) throw ConfigError("attention: heads must divide dim");
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix out(L, d);
  std::vector<double> scores;
  for (int h = 0; h < heads; ++h) {
    const int off = h * dh;
    for (int i = 0; i < L; ++i) {
      scores.assign(i + 1, 0.0);
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j <= i; ++j) {
        double s = 0.0;
        for (int x = 0; x < dh; ++x) s += queries.at(i, off + x) * keys.at(j, off + x);
        scores[j] = s * scale;
        mx = std::max(mx, scores[j]);
      }
      double z = 0.0;
      for (int j = 0; j <= i; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        z += scores[j];
      }
      for (int j = 0; j <= i; ++j) {
        const double p = scores[j] / z;
        for (int x = 0; x < dh; ++x) out.at(i, off + x) += p * values.at(j, off + x);
      }
    }
  }
  return out;
}

std::vector<manifold::LorentzPoint> cross_manifold_attention(
    const std::vector<manifold::TangentVector>& v_s, const Matrix& u_c,
    const AttentionWeights& w, double curvature) {
  const int L = static_cast<int>(v_s.size());
  if (u_c.rows != L) throw DimensionError("cross_manifold_attention: length mismatch");
  const int d = w.q_w->rows;

  Matrix vs(L, d);
  for (int i = 0; i < L; ++i) {
    if (v_s[i].dim() != d) throw DimensionError("cross_manifold_attention: tangent dim mismatch");
    std::copy(v_s[i].spatial.begin(), v_s[i].spatial.end(), vs.row(i));
  }
  const Matrix q = affine_rows(vs, *w.q_w, *w.q_b);
  const Matrix k = affine_rows(u_c, *w.k_w, *w.k_b);
  const Matrix v = affine_rows(u_c, *w.v_w, *w.v_b);
  const Matrix att = causal_multihead_attention(q, k, v, w.heads);
  const Matrix proj = affine_rows(att, *w.o_w, *w.o_b);

  std::vector<manifold::LorentzPoint> out;
  out.reserve(L);
  for (int i = 0; i < L; ++i) {
    const manifold::LorentzPoint semantic = manifold::exp_o(v_s[i], curvature);
    std::vector<double> row(proj.row(i), proj.row(i) + d);
    const manifold::LorentzPoint context =
        manifold::exp_o(manifold::TangentVector(std::move(row)), curvature);
    out.push_back(manifold::mobius_add(semantic, context, curvature));
  }
  return out;
}

}  // namespace gtr::stchannel
