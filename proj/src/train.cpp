// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gtr/error.hpp"
#include "gtr/kernels.hpp"
#include "gtr/rng.hpp"
#include "gtr/tape.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gtr::train {

namespace {

// Fisher-Yates with a per-epoch stream so resumption replays the same order.
std::vector<int> shuffled_indices(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = Rng(seed).fork(0x5u, static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace

TrainResult train(model::GtrModel& model, const std::vector<dataio::Trajectory>& train_split,
                  const std::vector<dataio::Trajectory>& val_split, Adam& opt, int epochs,
                  int start_epoch) {
  if (train_split.empty()) throw DataError("train: empty training split");

  int workers = 1;
#ifdef _OPENMP
  workers = (kernels::threads() > 0) ? kernels::threads() : omp_get_max_threads();
#endif
  std::vector<GradStore> thread_grads;
  for (int w = 0; w < workers; ++w) thread_grads.emplace_back(model.params);
  GradStore grads(model.params);

  TrainResult result;
  ParamStore best_params = model.params;
  result.best_val_mrr = -1.0;

  for (int e = 0; e < epochs; ++e) {
    const int epoch = start_epoch + e;
    const std::vector<int> order = shuffled_indices(train_split.size(), model.cfg.seed, epoch);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += model.cfg.batch) {
      const int bsz = static_cast<int>(
          std::min<std::size_t>(model.cfg.batch, order.size() - pos));
      for (GradStore& g : thread_grads) g.zero();
      std::vector<double> losses(bsz, 0.0);

#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(workers)
#endif
      for (int b = 0; b < bsz; ++b) {
        int tid = 0;
#ifdef _OPENMP
        tid = omp_get_thread_num();
#endif
        Tape tape(model.params, thread_grads[tid]);
        const Tape::Id loss = model.loss_tape(tape, train_split[order[pos + b]]);
        losses[b] = tape.val(loss).a[0];
        tape.backward(loss, 1.0 / bsz);
      }

      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      batch_loss /= bsz;
      if (!std::isfinite(batch_loss))
        throw NumericError("training loss diverged at epoch " + std::to_string(epoch) +
                           " batch " + std::to_string(batches));

      grads.zero();
      for (const GradStore& g : thread_grads) grads.add_scaled(g);
      opt.step(model.params, grads, model.cfg.clip);
      epoch_loss += batch_loss;
      ++batches;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(batches);
    if (!val_split.empty()) {
      const EvalResult ev = evaluate(model, val_split);
      stats.val_mrr = ev.report.mrr;
      stats.val_ndcg1 = ev.report.ndcg[0];
      stats.val_ndcg10 = ev.report.ndcg[2];
      if (stats.val_mrr > result.best_val_mrr) {
        result.best_val_mrr = stats.val_mrr;
        result.best_epoch = epoch;
        best_params = model.params;
      }
    }
    result.history.push_back(stats);
  }

  if (result.best_epoch >= 0) model.params = std::move(best_params);
  return result;
}

EvalResult evaluate(const model::GtrModel& model, const std::vector<dataio::Trajectory>& split) {
  if (split.empty()) throw DataError("evaluate: empty split");
  const model::GtrModel::Candidates cands = model.candidates(model::Task::kPoi);

  EvalResult res;
  res.ranks.assign(split.size(), 0);
  kernels::parallel_for(static_cast<int>(split.size()), [&](int i) {
    const dataio::Trajectory& full = split[i];
    dataio::Trajectory prefix = full;
    prefix.steps.pop_back();
    const model::Forward fwd = model.forward_plain(prefix);
    const int last = static_cast<int>(prefix.steps.size()) - 1;
    const std::vector<double> scores =
        model.scores(fwd.e_sp.row_span(last), fwd.e_time[last], cands, model::Task::kPoi);
    res.ranks[i] = predictor::rank_of(scores, full.steps.back().poi);
  });
  res.report = predictor::rank_metrics(res.ranks);
  return res;
}

double mean_step_size(const model::GtrModel& model, const dataio::Trajectory& traj) {
  const model::Forward fwd = model.forward_plain(traj);
  if (fwd.dt.size() == 0) return 0.0;
  double s = 0.0;
  for (double v : fwd.dt.a) s += v;
  return s / static_cast<double>(fwd.dt.size());
}

double change_rate(const model::GtrModel& model, const dataio::Trajectory& traj) {
  if (traj.steps.size() < 3) return std::nan ("");
  const dataio::SwitchProfile prof = dataio::switching_profile(traj);
  const model::Forward fwd = model.forward_plain(traj);
  const model::GtrModel::Candidates cands = model.candidates(model::Task::kPoi);

  // For a qualifying transition between steps t and t+1, compare the rank of
  // the realized next POI just before the switch (target t+1 scored at step
  // t) with the rank just after it (target t+2 scored at step t+1).
  double total = 0.0;
  int count = 0;
  for (std::size_t t = 0; t + 2 < traj.steps.size(); ++t) {
    if (prof.scores[t] <= 0.5) continue;
    const std::vector<double> before =
        model.scores(fwd.e_sp.row_span(static_cast<int>(t)), fwd.e_time[t], cands,
                     model::Task::kPoi);
    const std::vector<double> after =
        model.scores(fwd.e_sp.row_span(static_cast<int>(t) + 1), fwd.e_time[t + 1], cands,
                     model::Task::kPoi);
    const int rank_before = predictor::rank_of(before, traj.steps[t + 1].poi);
    const int rank_after = predictor::rank_of(after, traj.steps[t + 2].poi);
    total += std::abs(rank_after - rank_before);
    ++count;
  }
  if (count == 0) return std::nan("");
  return total / count;
}

}  // namespace gtr::train
