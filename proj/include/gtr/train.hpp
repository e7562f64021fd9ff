// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch training loop (OpenMP across the batch, deterministic in
// single-worker mode), evaluation over next-item queries, and the
// scene-switching analysis helpers.

#pragma once

#include <cstdint>
#include <vector>

#include "gtr/dataio.hpp"
#include "gtr/model.hpp"
#include "gtr/predictor.hpp"

namespace gtr::train {

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_mrr = 0.0;
  double val_ndcg1 = 0.0;
  double val_ndcg10 = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1;       // by validation MRR; -1 when no validation split
  double best_val_mrr = 0.0;
};

// Runs `epochs` additional epochs starting at `start_epoch` (for resumption;
// shuffling is seeded per absolute epoch index). Keeps the best-validation
// parameters in `model` iff a validation split exists, otherwise the final
// parameters. Throws NumericError (epoch/batch indices) on divergence.
TrainResult train(model::GtrModel& model, const std::vector<dataio::Trajectory>& train_split,
                  const std::vector<dataio::Trajectory>& val_split, Adam& opt, int epochs,
                  int start_epoch = 0);

struct EvalResult {
  predictor::MetricReport report;
  std::vector<int> ranks;  // one per query, aligned with the split order
};

// One query per trajectory: the prefix predicts the held-out last POI.
// Throws DataError on an empty split.
EvalResult evaluate(const model::GtrModel& model, const std::vector<dataio::Trajectory>& split);

// Mean SSM step size over all steps and channels of a trajectory.
double mean_step_size(const model::GtrModel& model, const dataio::Trajectory& traj);

// Mean absolute rank change of the true next POI across high-switching
// transition points (switch score > 0.5); NaN when no transition qualifies.
double change_rate(const model::GtrModel& model, const dataio::Trajectory& traj);

}  // namespace gtr::train
