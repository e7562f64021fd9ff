// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dual-pathway candidate scoring (hyperbolic distance + tangent decoder),
// the multi-task cross-entropy loss, and ranking metrics.

#pragma once

#include <span>
#include <vector>

#include "gtr/linalg.hpp"
#include "gtr/manifold.hpp"

namespace gtr::predictor {

// -sqrt(max(d_L^2(e, p_j), 0)) / tau per candidate. Candidates are given by
// their spatial rows plus precomputed time coordinates (see kernels).
// Throws ConfigError when tau <= 0.
std::vector<double> score_hyperbolic(const manifold::LorentzPoint& e, const Matrix& cand_spatial,
                                     std::span<const double> cand_time, double tau,
                                     double curvature = 1.0);
std::vector<double> score_hyperbolic(const manifold::LorentzPoint& e,
                                     const std::vector<manifold::LorentzPoint>& candidates,
                                     double tau, double curvature = 1.0);

// Linear decoder on log_o(e): logits = W log_o(e) + b.
std::vector<double> score_tangent(const manifold::LorentzPoint& e, const Matrix& dec_w,
                                  const Matrix& dec_b, double curvature = 1.0);

// alpha * s_tangent + (1 - alpha) * s_hyperbolic.
std::vector<double> mix_scores(std::span<const double> s_tan, std::span<const double> s_hyp,
                               double alpha);

// Softmax cross-entropy of one logit row against an integer label.
double softmax_xent(std::span<const double> logits, int label);

// Sum of the POI, category, and region cross-entropies.
double multitask_loss(std::span<const double> poi_scores, int poi_label,
                      std::span<const double> cat_scores, int cat_label,
                      std::span<const double> reg_scores, int reg_label);

// 1-based rank of `truth` under descending scores, ties broken by candidate
// index ascending.
int rank_of(std::span<const double> scores, int truth);

struct MetricReport {
  std::vector<int> ks;
  std::vector<double> ndcg;  // aligned with ks
  std::vector<double> acc;   // aligned with ks
  double mrr = 0.0;
  std::size_t queries = 0;
};

// Single-relevant-item convention: NDCG@k = 1/log2(rank+1) when rank <= k,
// else 0; ACC@k = [rank <= k]; MRR = mean reciprocal rank.
MetricReport rank_metrics(const std::vector<int>& ranks, std::vector<int> ks = {1, 5, 10});

}  // namespace gtr::predictor
