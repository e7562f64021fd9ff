// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0
//
// The full next-POI model: fused hyperbolic semantics, the Euclidean
// spatio-temporal channel, cross-manifold attention, the stacked selective
// SSM layers, and the dual-pathway head.
//
// Two forward implementations exist deliberately: forward_plain is the fast
// inference path (used by evaluation and benchmarks), loss_tape records the
// same computation for reverse-mode training. Tests pin them against each
// other. Ablation flags substitute documented degenerate components.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gtr/config.hpp"
#include "gtr/dataio.hpp"
#include "gtr/embeddings.hpp"
#include "gtr/gtr_ssm.hpp"
#include "gtr/params.hpp"
#include "gtr/stchannel.hpp"
#include "gtr/tape.hpp"

namespace gtr::model {

enum class Task { kPoi = 0, kCat = 1, kReg = 2 };

struct LoadedCheckpoint;

struct Forward {
  // Per-step trajectory embeddings: spatial hyperboloid coordinates, or raw
  // vectors in flat-space mode.
  Matrix e_sp;
  std::vector<double> e_time;  // derived time coordinates (1s in flat mode)
  Matrix dt;                   // L x d step sizes; empty when the SSM is ablated
  std::vector<double> gamma;   // decay gates fed to the SSM
};

class GtrModel {
 public:
  GtrModel() = default;

  // Builds a freshly initialized model; anchors are fitted on the check-in
  // coordinates of `anchor_fit` (training split).
  static GtrModel build(const RunConfig& cfg, const dataio::Vocab& vocab,
                        const std::vector<dataio::Trajectory>& anchor_fit);

  // Copies pretrained tables (embeddings, biases, rotations) into the store.
  void load_pretrained(const embeddings::EntityTables& tables);
  embeddings::EntityTables tables_view() const;  // copies out the tables

  Forward forward_plain(const dataio::Trajectory& traj) const;

  // Teacher-forced multi-task loss over all steps (step t predicts t+1).
  Tape::Id loss_tape(Tape& tape, const dataio::Trajectory& traj) const;

  struct Candidates {
    Matrix sp;
    std::vector<double> t0;
  };
  Candidates candidates(Task task) const;

  // Mixed dual-pathway scores of one step embedding against all candidates.
  std::vector<double> scores(std::span<const double> e_sp, double e_time,
                             const Candidates& cands, Task task) const;

  int dim() const { return cfg.dim; }
  int ctx_dim() const { return cfg.d_geo + cfg.d_time; }
  int candidate_count(Task task) const;

  void save_checkpoint(const std::string& path, const Adam* opt = nullptr, int epoch_next = 0,
                       double best_val_mrr = 0.0) const;

  RunConfig cfg;
  dataio::Vocab vocab;
  ParamStore params;
  stchannel::GeoEncoderState geo_state;
  stchannel::TimeEncoderState time_state;

 private:
  struct SsmIds {
    int dt_weight, dt_bias, a_proj_w, a_proj_b, b_proj_w, b_proj_b, c_proj_w, c_proj_b, anchor,
        out_w;
  };
  struct Ids {
    int emb[4];   // user, poi, cat, reg
    int bias[4];
    int rot[4];
    int geo_rff_w, geo_rff_b, geo_rbf_w, geo_rbf_b, geo_gate_w, geo_gate_b, geo_out_w, geo_out_b;
    int time_w, time_b, time_gate;
    int att_q_w, att_q_b, att_k_w, att_k_b, att_v_w, att_v_b, att_o_w, att_o_b;
    std::vector<SsmIds> ssm;
    int log_tau, alpha_raw;
    int dec_w[3], dec_b[3];
  };
  Ids ids_;

  void register_params(Rng& rng);
  void cache_ids();

  // Shared sub-steps of the plain forward pass.
  Matrix fused_semantics(const dataio::Trajectory& traj) const;
  struct Context {
    Matrix u_c;
    std::vector<double> gamma;
  };
  Context context_channel(const dataio::Trajectory& traj) const;
  gtr_ssm::SsmLayerWeights layer_weights(int layer) const;

  friend struct ModelTestPeer;
  friend LoadedCheckpoint load_checkpoint(const std::string& path);
};

struct LoadedCheckpoint {
  GtrModel model;
  bool has_train_state = false;
  Adam opt;
  int epoch_next = 0;
  double best_val_mrr = 0.0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace gtr::model
