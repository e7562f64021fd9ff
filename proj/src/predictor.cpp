// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/predictor.hpp"

#include <algorithm>
#include <cmath>

#include "gtr/error.hpp"
#include "gtr/kernels.hpp"

namespace gtr::predictor {

std::vector<double> score_hyperbolic(const manifold::LorentzPoint& e, const Matrix& cand_spatial,
                                     std::span<const double> cand_time, double tau,
                                     double curvature) {
  if (!(tau > 0.0)) throw ConfigError("score_hyperbolic: tau must be positive");
  std::vector<double> d2 =
      kernels::sqdist_row(e.spatial(), e.coords[0], cand_spatial, cand_time, curvature);
  for (double& v : d2) v = -std::sqrt(std::max(v, 0.0)) / tau;
  return d2;
}

std::vector<double> score_hyperbolic(const manifold::LorentzPoint& e,
                                     const std::vector<manifold::LorentzPoint>& candidates,
                                     double tau, double curvature) {
  if (!(tau > 0.0)) throw ConfigError("score_hyperbolic: tau must be positive");
  std::vector<double> out(candidates.size());
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    out[j] = -std::sqrt(manifold::sq_lorentz_dist(e, candidates[j], curvature)) / tau;
  }
  return out;
}

std::vector<double> score_tangent(const manifold::LorentzPoint& e, const Matrix& dec_w,
                                  const Matrix& dec_b, double curvature) {
  const manifold::TangentVector v = manifold::log_o(e, curvature);
  if (dec_w.cols != v.dim() || dec_b.cols != dec_w.rows)
    throw DimensionError("score_tangent: decoder shape mismatch");
  std::vector<double> out(dec_w.rows);
  for (int r = 0; r < dec_w.rows; ++r) out[r] = dot(dec_w.row_span(r), v.spatial) + dec_b.a[r];
  return out;
}

std::vector<double> mix_scores(std::span<const double> s_tan, std::span<const double> s_hyp,
                               double alpha) {
  if (s_tan.size() != s_hyp.size()) throw DimensionError("mix_scores: length mismatch");
  std::vector<double> out(s_tan.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = alpha * s_tan[i] + (1.0 - alpha) * s_hyp[i];
  return out;
}

double softmax_xent(std::span<const double> logits, int label) {
  if (label < 0 || label >= static_cast<int>(logits.size()))
    throw DataError("softmax_xent: label out of range");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return -(logits[label] - mx - std::log(z));
}

double multitask_loss(std::span<const double> poi_scores, int poi_label,
                      std::span<const double> cat_scores, int cat_label,
                      std::span<const double> reg_scores, int reg_label) {
  return softmax_xent(poi_scores, poi_label) + softmax_xent(cat_scores, cat_label) +
         softmax_xent(reg_scores, reg_label);
}

int rank_of(std::span<const double> scores, int truth) {
  if (truth < 0 || truth >= static_cast<int>(scores.size()))
    throw DataError("rank_of: truth index out of range");
  int rank = 1;
  const double s = scores[truth];
  for (int j = 0; j < static_cast<int>(scores.size()); ++j) {
    if (scores[j] > s || (scores[j] == s && j < truth)) ++rank;
  }
  return rank;
}

MetricReport rank_metrics(const std::vector<int>& ranks, std::vector<int> ks) {
  if (ranks.empty()) throw DataError("rank_metrics: no queries");
  MetricReport rep;
  rep.ks = std::move(ks);
  rep.ndcg.assign(rep.ks.size(), 0.0);
  rep.acc.assign(rep.ks.size(), 0.0);
  rep.queries = ranks.size();
  for (int r : ranks) {
    rep.mrr += 1.0 / r;
    for (std::size_t i = 0; i < rep.ks.size(); ++i) {
      if (r <= rep.ks[i]) {
        rep.ndcg[i] += 1.0 / std::log2(static_cast<double>(r) + 1.0);
        rep.acc[i] += 1.0;
      }
    }
  }
  const double n = static_cast<double>(ranks.size());
  rep.mrr /= n;
  for (std::size_t i = 0; i < rep.ks.size(); ++i) {
    rep.ndcg[i] /= n;
    rep.acc[i] /= n;
  }
  return rep;
}

}  // namespace gtr::predictor
