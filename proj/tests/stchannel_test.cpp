// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/stchannel.hpp"

#include <doctest.h>

#include <cmath>

#include "gtr/error.hpp"
#include "testutil.hpp"

using namespace gtr;
using namespace gtr::stchannel;

namespace {

struct GeoFixture {
  GeoEncoderState state;
  Matrix rff_w, rff_b, rbf_w, rbf_b, gate_w, gate_b, out_w, out_b;

  explicit GeoFixture(int d_geo = 6, int anchors = 5, int top_k = 3, std::uint64_t seed = 11) {
    state = init_geo_encoder(2, 3, seed);  // raw dim 12
    Rng rng(seed);
    Matrix pts(40, 3);
    for (int i = 0; i < 40; ++i) {
      const auto u = sphere_map(rng.uniform(-60.0, 60.0), rng.uniform(-170.0, 170.0));
      for (int j = 0; j < 3; ++j) pts.at(i, j) = u[j];
    }
    fit_anchors(state, pts, anchors, top_k, seed);
    rff_w = Matrix::randn(d_geo, state.raw_dim(), rng, 0.3);
    rff_b = Matrix::randn(1, d_geo, rng, 0.1);
    rbf_w = Matrix::randn(d_geo, anchors, rng, 0.3);
    rbf_b = Matrix::randn(1, d_geo, rng, 0.1);
    gate_w = Matrix::randn(2, 2 * d_geo, rng, 0.3);
    gate_b = Matrix::randn(1, 2, rng, 0.1);
    out_w = Matrix::randn(d_geo, d_geo, rng, 0.3);
    out_b = Matrix::randn(1, d_geo, rng, 0.1);
  }

  GeoWeights weights() const {
    return GeoWeights{&rff_w, &rff_b, &rbf_w, &rbf_b, &gate_w, &gate_b, &out_w, &out_b};
  }
};

}  // namespace

TEST_CASE("sphere_map") {
  const auto a = sphere_map(0.0, 0.0);
  CHECK(a[0] == doctest::Approx(1.0));
  CHECK(a[1] == doctest::Approx(0.0));
  CHECK(a[2] == doctest::Approx(0.0));

  const auto pole = sphere_map(90.0, 123.0);
  CHECK(pole[2] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(pole[0]) < 1e-12);

  const auto nyc = sphere_map(40.7, -74.0);
  CHECK(std::abs(nyc[0] * nyc[0] + nyc[1] * nyc[1] + nyc[2] * nyc[2] - 1.0) < 1e-12);

  CHECK_THROWS_AS(sphere_map(95.0, 0.0), DataError);
  CHECK_THROWS_AS(sphere_map(0.0, 190.0), DataError);
}

TEST_CASE("encode_geo") {
  GeoFixture fx;

  SUBCASE("pure function: identical inputs, identical outputs") {
    const std::vector<std::pair<double, double>> pts = {{40.7, -74.0}, {40.7, -74.0}};
    const Matrix out = encode_geo(pts, fx.state, fx.weights());
    for (int j = 0; j < out.cols; ++j) CHECK(out.at(0, j) == out.at(1, j));
  }

  SUBCASE("longitude wrap invariance") {
    const Matrix a = encode_geo({{12.3, 45.6}}, fx.state, fx.weights());
    const Matrix b = encode_geo({{12.3, 45.6 + 360.0}}, fx.state, fx.weights());
    for (int j = 0; j < a.cols; ++j) CHECK(std::abs(a.at(0, j) - b.at(0, j)) < 1e-9);
  }

  SUBCASE("gate forced to the RFF branch") {
    GeoFixture forced;
    forced.gate_w.fill(0.0);
    forced.gate_b.a = {1000.0, -1000.0};
    const std::vector<std::pair<double, double>> pts = {{40.7, -74.0}, {-12.0, 30.0}};
    const Matrix out = encode_geo(pts, forced.state, forced.weights());
    // Oracle: out = affine(affine(rff_raw)) exactly.
    const Matrix rff = rff_raw(forced.state, pts);
    for (int i = 0; i < out.rows; ++i) {
      for (int r = 0; r < out.cols; ++r) {
        double proj = forced.rff_b.a[r];
        for (int j = 0; j < rff.cols; ++j) proj += forced.rff_w.at(r, j) * rff.at(i, j);
        (void)proj;
      }
    }
    Matrix rffp(out.rows, out.cols);
    for (int i = 0; i < out.rows; ++i) {
      for (int r = 0; r < out.cols; ++r) {
        double v = forced.rff_b.a[r];
        for (int j = 0; j < rff.cols; ++j) v += forced.rff_w.at(r, j) * rff.at(i, j);
        rffp.at(i, r) = v;
      }
    }
    for (int i = 0; i < out.rows; ++i) {
      for (int r = 0; r < out.cols; ++r) {
        double v = forced.out_b.a[r];
        for (int j = 0; j < out.cols; ++j) v += forced.out_w.at(r, j) * rffp.at(i, j);
        CHECK(out.at(i, r) == doctest::Approx(v).epsilon(1e-14));
      }
    }
  }

  SUBCASE("top_k = r matches the dense RBF oracle") {
    GeoFixture dense(6, 5, 5);
    const std::vector<std::pair<double, double>> pts = {{40.7, -74.0}, {41.0, -73.2}};
    const Matrix masked = rbf_raw(dense.state, pts);
    // Dense oracle: every response kept.
    for (int i = 0; i < masked.rows; ++i) {
      const auto u = sphere_map(pts[i].first, pts[i].second);
      for (int j = 0; j < 5; ++j) {
        const std::array<double, 3> anchor{dense.state.anchors.at(j, 0),
                                           dense.state.anchors.at(j, 1),
                                           dense.state.anchors.at(j, 2)};
        const double z = geo::arc_distance(u, anchor) / dense.state.sigma;
        CHECK(masked.at(i, j) == doctest::Approx(std::exp(-z * z)).epsilon(1e-14));
      }
    }
  }

  SUBCASE("raising top_k keeps the originally selected responses") {
    GeoFixture k2(6, 5, 2);
    GeoFixture k4(6, 5, 4);
    k4.state = k2.state;
    k4.state.top_k = 4;
    const std::vector<std::pair<double, double>> pts = {{40.7, -74.0}};
    const Matrix small = rbf_raw(k2.state, pts);
    const Matrix big = rbf_raw(k4.state, pts);
    for (int j = 0; j < 5; ++j) {
      if (small.at(0, j) != 0.0) CHECK(big.at(0, j) == small.at(0, j));
    }
  }

  SUBCASE("unfitted anchors raise") {
    GeoEncoderState raw = init_geo_encoder(2, 3, 1);
    GeoFixture fx2;
    CHECK_THROWS_AS(encode_geo({{0.0, 0.0}}, raw, fx2.weights()), ConfigError);
  }
}

TEST_CASE("encode_time") {
  const TimeEncoderState state = init_time_encoder(4);
  REQUIRE(state.omega.size() == 4);
  for (std::size_t i = 1; i < state.omega.size(); ++i) CHECK(state.omega[i] > state.omega[i - 1]);

  Rng rng(3);
  const int d_time = 5;
  Matrix w = Matrix::randn(d_time, state.raw_dim(), rng, 0.2);
  Matrix b = Matrix::randn(1, d_time, rng, 0.1);
  Matrix gate = Matrix::randn(1, d_time, rng, 0.5);
  const TimeWeights tw{&w, &b, &gate};

  const std::int64_t monday = 1333324800;
  const std::vector<std::int64_t> ts = {monday, monday + 3600, monday + 10 * 3600};

  SUBCASE("raw features: first step and calendar one-hots") {
    const Matrix raw = time_raw(state, ts);
    CHECK(raw.at(0, 0) == 0.0);
    for (int f = 0; f < 4; ++f) {
      CHECK(raw.at(0, 1 + f) == 0.0);        // sin(0)
      CHECK(raw.at(0, 1 + 4 + f) == 1.0);    // cos(0)
    }
    CHECK(raw.at(0, 1 + 8 + 0) == 1.0);      // Monday
    CHECK(raw.at(0, 1 + 8 + 7 + 0) == 1.0);  // hour 00
    CHECK(raw.at(1, 0) == doctest::Approx(1.0));
    CHECK(raw.at(1, 1 + 8 + 7 + 1) == 1.0);  // hour 01
  }

  SUBCASE("gamma strictly inside (0,1) and flips with the gate sign") {
    const TimeEncoding enc = encode_time(ts, state, tw);
    Matrix neg_gate = gate;
    for (double& x : neg_gate.a) x = -x;
    const TimeWeights flipped{&w, &b, &neg_gate};
    const TimeEncoding enc2 = encode_time(ts, state, flipped);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      CHECK(enc.gamma[i] > 0.0);
      CHECK(enc.gamma[i] < 1.0);
      CHECK(std::abs(enc.gamma[i] + enc2.gamma[i] - 1.0) < 1e-12);
    }
  }

  SUBCASE("time gaps clip at one week") {
    const std::vector<std::int64_t> far = {monday, monday + 400 * 3600};
    const Matrix raw = time_raw(state, far);
    CHECK(raw.at(1, 0) == 168.0);
  }

  SUBCASE("decreasing timestamps raise") {
    CHECK_THROWS_AS(time_raw(state, {monday, monday - 1}), DataError);
  }
}

TEST_CASE("causal attention core") {
  Rng rng(7);
  const int L = 4, d = 6;
  Matrix q = Matrix::randn(L, d, rng);
  Matrix k = Matrix::randn(L, d, rng);
  Matrix v = Matrix::randn(L, d, rng);

  SUBCASE("single step attends to itself") {
    Matrix q1(1, d, std::vector<double>(q.row(0), q.row(0) + d));
    Matrix k1(1, d, std::vector<double>(k.row(0), k.row(0) + d));
    Matrix v1(1, d, std::vector<double>(v.row(0), v.row(0) + d));
    const Matrix out = causal_multihead_attention(q1, k1, v1, 2);
    for (int j = 0; j < d; ++j) CHECK(out.at(0, j) == doctest::Approx(v1.at(0, j)).epsilon(1e-15));
  }

  SUBCASE("causal mask: future value rows cannot affect earlier outputs") {
    const Matrix base = causal_multihead_attention(q, k, v, 2);
    Matrix v2 = v;
    for (int j = 0; j < d; ++j) v2.at(L - 1, j) += 100.0;
    const Matrix perturbed = causal_multihead_attention(q, k, v2, 2);
    for (int i = 0; i < L - 1; ++i) {
      for (int j = 0; j < d; ++j) CHECK(base.at(i, j) == perturbed.at(i, j));
    }
  }

  SUBCASE("single-head matches a direct softmax oracle") {
    const Matrix out = causal_multihead_attention(q, k, v, 1);
    for (int i = 0; i < L; ++i) {
      std::vector<double> w(i + 1);
      double z = 0.0;
      for (int j = 0; j <= i; ++j) {
        w[j] = std::exp(dot(q.row_span(i), k.row_span(j)) / std::sqrt(6.0));
        z += w[j];
      }
      for (int j = 0; j < d; ++j) {
        double expect = 0.0;
        for (int t = 0; t <= i; ++t) expect += w[t] / z * v.at(t, j);
        CHECK(std::abs(out.at(i, j) - expect) < 1e-10);
      }
    }
  }
}

TEST_CASE("cross_manifold_attention fusion") {
  Rng rng(13);
  const int L = 3, d = 4, ctx = 5;
  std::vector<manifold::TangentVector> vs;
  for (int i = 0; i < L; ++i) vs.push_back(test::random_tangent(rng, d, 0.8));
  Matrix uc = Matrix::randn(L, ctx, rng, 0.5);

  Matrix qw = Matrix::randn(d, d, rng, 0.4), qb = Matrix::randn(1, d, rng, 0.1);
  Matrix kw = Matrix::randn(d, ctx, rng, 0.4), kb = Matrix::randn(1, d, rng, 0.1);
  Matrix vw = Matrix::randn(d, ctx, rng, 0.4), vb = Matrix::randn(1, d, rng, 0.1);
  Matrix ow = Matrix::randn(d, d, rng, 0.4), ob = Matrix::randn(1, d, rng, 0.1);
  AttentionWeights w{2, &qw, &qb, &kw, &kb, &vw, &vb, &ow, &ob};

  SUBCASE("outputs live on the hyperboloid") {
    const auto q_t = cross_manifold_attention(vs, uc, w);
    REQUIRE(q_t.size() == static_cast<std::size_t>(L));
    for (const auto& p : q_t) {
      CHECK(std::abs(manifold::lorentz_inner(p.coords, p.coords) + 1.0) < 1e-6);
    }
  }

  SUBCASE("zero out-projection reduces to exp_o(v_s)") {
    Matrix zw = Matrix::zeros(d, d), zb = Matrix::zeros(1, d);
    AttentionWeights w0{2, &qw, &qb, &kw, &kb, &vw, &vb, &zw, &zb};
    const auto q_t = cross_manifold_attention(vs, uc, w0);
    for (int i = 0; i < L; ++i) {
      const auto expect = manifold::exp_o(vs[i]);
      CHECK(test::max_abs_diff(q_t[i].coords, expect.coords) < 1e-10);
    }
  }

  SUBCASE("length mismatch raises") {
    Matrix bad = Matrix::randn(L + 1, ctx, rng);
    CHECK_THROWS_AS(cross_manifold_attention(vs, bad, w), DimensionError);
  }
}
