// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Relation-graph construction from check-ins and rotation-aligned
// contrastive pretraining of hyperbolic entity embeddings, plus the fused
// per-step semantic tangent vector.
//
// Entities are parameterized as tangent vectors at the origin and
// materialized on the hyperboloid through exp_o, so plain Euclidean
// optimizers keep every embedding exactly on-manifold.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gtr/dataio.hpp"
#include "gtr/linalg.hpp"
#include "gtr/manifold.hpp"
#include "gtr/params.hpp"
#include "gtr/tape.hpp"

namespace gtr::embeddings {

enum class EdgeType { kUserPoi = 0, kPoiPoi = 1, kCatCat = 2, kRegReg = 3 };
inline constexpr std::array<EdgeType, 4> kEdgeTypes = {EdgeType::kUserPoi, EdgeType::kPoiPoi,
                                                       EdgeType::kCatCat, EdgeType::kRegReg};
const char* edge_type_name(EdgeType t);

struct EdgeSet {
  EdgeType type = EdgeType::kUserPoi;
  std::vector<std::pair<int, int>> pairs;  // unique, sorted (source, target)
  std::vector<int> multiplicity;           // per pair
};

struct EdgeSets {
  std::array<EdgeSet, 4> by_type;
  EdgeSet& operator[](EdgeType t) { return by_type[static_cast<int>(t)]; }
  const EdgeSet& operator[](EdgeType t) const { return by_type[static_cast<int>(t)]; }
};

// User-POI edges for every visit, POI-POI edges for consecutive same-user
// visits within six hours, and the category/region transition edges those
// POI pairs induce. Repeated pairs are kept with multiplicity;
// self-transitions (identical endpoints) are skipped.
// Throws DataError on a trajectory whose timestamps decrease.
EdgeSets build_edges(const std::vector<dataio::Trajectory>& trajectories);

// Tangent-parameterized embedding tables with per-entity biases and one
// rotation per edge type.
struct EntityTables {
  double curvature = 1.0;
  Matrix user, poi, cat, reg;                         // count x dim tangent rows
  Matrix user_bias, poi_bias, cat_bias, reg_bias;     // count x 1
  std::array<Matrix, 4> rotation;                     // 1 x floor(dim/2) angles

  int dim() const { return user.cols; }
  const Matrix& table(EdgeType t, bool source) const;
  manifold::LorentzPoint materialize(const Matrix& table, int row) const;
};

EntityTables init_tables(int users, int pois, int cats, int regs, int dim, double curvature,
                         std::uint64_t seed, double init_std = 0.02);

// Edge score: -max(d_L^2(rotate(src), dst), 0) + b_src + b_dst.
double score_edge(const manifold::LorentzPoint& src, const manifold::LorentzPoint& dst,
                  const manifold::RotationParams& rot, double b_src, double b_dst,
                  double curvature = 1.0);

// Deterministic negative target for (edge_index, draw); never equals
// `exclude`. Throws ConfigError when count < 2.
int sample_negative(std::uint64_t seed, int epoch, EdgeType type, std::size_t edge_index,
                    int draw, int count, int exclude);

// Full contrastive loss over all edge types with `negatives` uniform negative
// samples per positive edge, weighted by edge multiplicity.
double contrastive_loss(const EdgeSets& edges, const EntityTables& tables, int negatives,
                        std::uint64_t seed, int epoch = 0);

// ParamStore slots for the pretraining parameters.
struct PretrainParamIds {
  int user, poi, cat, reg;
  int user_bias, poi_bias, cat_bias, reg_bias;
  int rot[4];
};

PretrainParamIds register_pretrain_params(ParamStore& ps, const EntityTables& tables);

// Records the full contrastive loss on `tape`; numerically identical to
// contrastive_loss evaluated on the same parameter values.
Tape::Id contrastive_loss_tape(Tape& tape, const EdgeSets& edges, const PretrainParamIds& ids,
                               const ParamStore& ps, int negatives, std::uint64_t seed, int epoch,
                               double curvature);

struct PretrainConfig {
  int epochs = 150;
  double lr = 0.05;
  int negatives = 5;
  std::uint64_t seed = 42;
  double init_std = 0.02;
  double clip_norm = 5.0;
  double curvature = 1.0;
  int dim = 64;
};

struct PretrainResult {
  EntityTables tables;
  std::vector<double> epoch_loss;
};

// Full-batch Adam on the contrastive loss. Deterministic under a fixed seed.
// Throws NumericError with the epoch index if the loss turns non-finite.
PretrainResult pretrain(const std::vector<dataio::Trajectory>& trajectories, int users, int pois,
                        int cats, int regs, const PretrainConfig& cfg);

struct FusionWeights {
  double alpha_u = 0.5;
  double alpha_p = 0.3;
  double alpha_c = 0.1;
  double alpha_r = 0.1;
};

// Per-step fused semantic tangent vector
//   v_s = a_u log_o(E_u) + a_p log_o(E_p) + a_c log_o(E_c) + a_r log_o(E_r).
// Throws DataError on an unresolvable entity index.
std::vector<manifold::TangentVector> fuse_semantics(const dataio::Trajectory& traj,
                                                    const EntityTables& tables,
                                                    const FusionWeights& w);

// Mean Poincare-ball radius of the materialized rows of a table.
double mean_poincare_radius(const Matrix& tangent_rows, double curvature);

// Serialization: binary container plus a mirror CSV (see docs/formats.md).
void save_tables(const EntityTables& tables, const std::string& bin_path,
                 const std::string& csv_path);
EntityTables load_tables(const std::string& bin_path);

}  // namespace gtr::embeddings
