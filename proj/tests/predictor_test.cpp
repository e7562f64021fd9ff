// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/predictor.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gtr/error.hpp"
#include "gtr/kernels.hpp"
#include "testutil.hpp"

using namespace gtr;
using namespace gtr::predictor;

namespace {

std::vector<manifold::LorentzPoint> candidates_at_radii(const std::vector<double>& radii, int d) {
  std::vector<manifold::LorentzPoint> out;
  for (double r : radii) {
    manifold::TangentVector v = manifold::TangentVector::zero(d);
    v.spatial[0] = r;
    out.push_back(manifold::exp_o(v));
  }
  return out;
}

}  // namespace

TEST_CASE("score_hyperbolic") {
  Rng rng(3);
  const auto e = test::random_point(rng, 4, 1.5);

  SUBCASE("an identical candidate scores zero, the maximum") {
    auto cands = candidates_at_radii({0.5, 1.0}, 4);
    cands.push_back(e);
    const auto s = score_hyperbolic(e, cands, 1.0);
    CHECK(s[2] == 0.0);
    CHECK(s[2] > s[0]);
    CHECK(s[2] > s[1]);
  }

  SUBCASE("doubling tau halves scores and keeps the order") {
    const auto cands = candidates_at_radii({0.5, 1.0, 2.0}, 4);
    const auto s1 = score_hyperbolic(e, cands, 1.0);
    const auto s2 = score_hyperbolic(e, cands, 2.0);
    for (std::size_t j = 0; j < s1.size(); ++j)
      CHECK(s2[j] == doctest::Approx(s1[j] / 2.0).epsilon(1e-12));
    CHECK(std::distance(s1.begin(), std::max_element(s1.begin(), s1.end())) ==
          std::distance(s2.begin(), std::max_element(s2.begin(), s2.end())));
  }

  SUBCASE("candidates rank by geodesic radius from the query") {
    const auto o = manifold::origin(4);
    const auto cands = candidates_at_radii({2.0, 0.5, 1.0}, 4);
    const auto s = score_hyperbolic(o, cands, 1.0);
    CHECK(s[1] > s[2]);
    CHECK(s[2] > s[0]);
  }

  SUBCASE("matrix path agrees with the point path") {
    std::vector<manifold::LorentzPoint> cands;
    Matrix spatial(5, 4);
    std::vector<double> times(5);
    for (int i = 0; i < 5; ++i) {
      cands.push_back(test::random_point(rng, 4, 2.0));
      times[i] = cands.back().coords[0];
      for (int j = 0; j < 4; ++j) spatial.at(i, j) = cands.back().coords[j + 1];
    }
    const auto a = score_hyperbolic(e, cands, 0.7);
    const auto b = score_hyperbolic(e, spatial, times, 0.7);
    for (int j = 0; j < 5; ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-12));
  }

  SUBCASE("tau must be positive") {
    CHECK_THROWS_AS(score_hyperbolic(e, candidates_at_radii({1.0}, 4), 0.0), ConfigError);
  }
}

TEST_CASE("score_tangent") {
  Rng rng(7);
  Matrix w = Matrix::randn(3, 4, rng);
  Matrix b = Matrix::randn(1, 3, rng);

  SUBCASE("origin decodes to the bias vector exactly") {
    const auto s = score_tangent(manifold::origin(4), w, b);
    for (int j = 0; j < 3; ++j) CHECK(s[j] == b.a[j]);
  }

  SUBCASE("zero decoder gives zeros") {
    const auto s =
        score_tangent(test::random_point(rng, 4, 1.0), Matrix::zeros(3, 4), Matrix::zeros(1, 3));
    for (double v : s) CHECK(v == 0.0);
  }

  SUBCASE("matches an independent matrix-vector product") {
    const auto e = test::random_point(rng, 4, 1.5);
    const auto v = manifold::log_o(e);
    const auto s = score_tangent(e, w, b);
    for (int r = 0; r < 3; ++r) {
      double expect = b.a[r];
      for (int j = 0; j < 4; ++j) expect += w.at(r, j) * v.spatial[j];
      CHECK(s[r] == doctest::Approx(expect).epsilon(1e-14));
    }
  }
}

TEST_CASE("mix_scores") {
  const std::vector<double> tan = {2.0, 0.0};
  const std::vector<double> hyp = {0.0, 2.0};
  const auto near_tan = mix_scores(tan, hyp, 1.0 - 1e-12);
  CHECK(near_tan[0] == doctest::Approx(2.0));
  const auto near_hyp = mix_scores(tan, hyp, 1e-12);
  CHECK(near_hyp[1] == doctest::Approx(2.0));
  const auto mid = mix_scores(tan, hyp, 0.5);
  CHECK(mid[0] == 1.0);
  CHECK(mid[1] == 1.0);
  CHECK_THROWS_AS(mix_scores(tan, std::vector<double>{1.0}, 0.5), DimensionError);

  SUBCASE("a candidate that wins both pathways wins the mixture") {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> a(6), b(6);
      for (int j = 0; j < 6; ++j) {
        a[j] = rng.normal();
        b[j] = rng.normal();
      }
      const int winner = static_cast<int>(rng.below(6));
      a[winner] = 10.0;
      b[winner] = 10.0;
      const auto m = mix_scores(a, b, rng.uniform(0.01, 0.99));
      CHECK(std::distance(m.begin(), std::max_element(m.begin(), m.end())) == winner);
    }
  }
}

TEST_CASE("multitask_loss") {
  SUBCASE("uniform logits cost ln K per task") {
    const std::vector<double> poi(7, 0.3), cat(4, -1.0), reg(3, 2.0);
    const double loss = multitask_loss(poi, 2, cat, 0, reg, 1);
    CHECK(loss ==
          doctest::Approx(std::log(7.0) + std::log(4.0) + std::log(3.0)).epsilon(1e-12));
  }

  SUBCASE("peaked logits drive the loss to zero") {
    std::vector<double> poi(5, 0.0), cat(5, 0.0), reg(5, 0.0);
    poi[1] = cat[2] = reg[3] = 60.0;
    CHECK(multitask_loss(poi, 1, cat, 2, reg, 3) < 1e-12);
  }

  SUBCASE("scalar reference value") {
    const std::vector<double> logits = {1.0, 2.0, 3.0};
    CHECK(softmax_xent(logits, 2) == doctest::Approx(0.40760596444438).epsilon(1e-10));
  }

  SUBCASE("label out of range") {
    const std::vector<double> logits = {1.0, 2.0};
    CHECK_THROWS_AS(softmax_xent(logits, 5), DataError);
  }
}

TEST_CASE("rank_of tie breaking") {
  const std::vector<double> scores = {0.5, 0.9, 0.5, 0.1};
  CHECK(rank_of(scores, 1) == 1);
  CHECK(rank_of(scores, 0) == 2);  // tie with index 2 broken toward index 0
  CHECK(rank_of(scores, 2) == 3);
  CHECK(rank_of(scores, 3) == 4);
}

TEST_CASE("rank_metrics fixtures") {
  SUBCASE("rank 1 is perfect") {
    const auto rep = rank_metrics({1});
    for (double v : rep.ndcg) CHECK(v == 1.0);
    for (double v : rep.acc) CHECK(v == 1.0);
    CHECK(rep.mrr == 1.0);
  }

  SUBCASE("rank 3") {
    const auto rep = rank_metrics({3});
    CHECK(rep.ndcg[0] == 0.0);                                  // NDCG@1
    CHECK(rep.ndcg[1] == doctest::Approx(0.5).epsilon(1e-12));  // NDCG@5 = 1/log2(4)
    CHECK(rep.ndcg[2] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rep.acc[1] == 1.0);
    CHECK(rep.mrr == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  SUBCASE("ranks {1,2,4}") {
    const auto rep = rank_metrics({1, 2, 4});
    CHECK(rep.mrr == doctest::Approx(0.583333333333).epsilon(1e-9));
    CHECK(rep.acc[0] == doctest::Approx(1.0 / 3.0));
  }

  SUBCASE("NDCG nonincreasing in rank, nondecreasing in k") {
    for (int rank = 1; rank < 12; ++rank) {
      const auto a = rank_metrics({rank});
      const auto b = rank_metrics({rank + 1});
      for (std::size_t i = 0; i < a.ndcg.size(); ++i) CHECK(a.ndcg[i] >= b.ndcg[i]);
      for (std::size_t i = 1; i < a.ndcg.size(); ++i) CHECK(a.ndcg[i] >= a.ndcg[i - 1]);
    }
  }

  SUBCASE("empty queries raise") {
    CHECK_THROWS_AS(rank_metrics({}), DataError);
  }
}
