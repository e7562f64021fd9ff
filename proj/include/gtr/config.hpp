// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Declarative run configuration: one key = value file plus command-line
// overrides. Unknown keys are rejected. See docs/formats.md for the key
// reference.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gtr/dataio.hpp"
#include "gtr/embeddings.hpp"

namespace gtr {

struct Ablations {
  bool ssm = false;          // bypass the selective state-space layer
  bool pretrained = false;   // skip pretrained embedding initialization
  bool hyperbolic = false;   // flat-space mode: identity maps + L2 scoring
  bool stc = false;          // zero the spatio-temporal channel
  bool attention = false;    // skip cross-manifold attention
  bool context = false;      // SSM runs without the Euclidean context drive

  bool any() const { return ssm || pretrained || hyperbolic || stc || attention || context; }
  std::string label() const;
};

// Adds one ablation by its external name:
// ssm | pretrained-init | hyperbolic-mode | st-channel | attention | context-drive.
void apply_ablation(Ablations& a, const std::string& name);

struct RunConfig {
  // data
  std::string data_path;
  dataio::ColumnMap cols;
  int min_poi_checkins = 5;
  double gap_hours = 24.0;
  int min_len = 3;
  int max_len = 101;
  int regions = 40;
  int kmeans_iters = 50;

  // model
  int dim = 64;
  int d_geo = 16;
  int d_time = 24;
  int heads = 4;
  int layers = 2;
  double curvature = 1.0;
  int anchors = 50;
  int top_k = 8;
  int rff_scales = 4;
  int rff_freqs = 8;
  int time_freqs = 8;
  embeddings::FusionWeights fusion;

  // pretraining
  int pretrain_epochs = 150;
  double pretrain_lr = 0.05;
  int negatives = 5;
  double init_std = 0.02;

  // training
  int batch = 128;
  double lr = 0.001;
  int epochs = 50;
  double clip = 5.0;
  double w_poi = 1.0;
  double w_cat = 1.0;
  double w_reg = 1.0;
  int threads = 0;

  std::uint64_t seed = 42;
  std::string out_dir = "out";
  Ablations ablate;

  void validate() const;  // throws ConfigError on out-of-range numerics
};

// Parses a key = value file ('#' comments, blank lines allowed).
RunConfig parse_config_file(const std::string& path);

// Applies one "key=value" override in place.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Round-trippable serialization of every key (stored in checkpoints).
std::string config_echo(const RunConfig& cfg);
RunConfig parse_config_text(const std::string& text);

}  // namespace gtr
