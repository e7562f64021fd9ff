// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "gtr/dataio.hpp"
#include "gtr/embeddings.hpp"
#include "gtr/error.hpp"
#include "gtr/gtr_ssm.hpp"
#include "gtr/kernels.hpp"
#include "gtr/model.hpp"
#include "gtr/train.hpp"

namespace gtr::cli {

namespace fs = std::filesystem;

namespace {

std::string manifests_dir(const RunConfig& cfg) { return cfg.out_dir + "/manifests"; }
std::string tables_bin(const RunConfig& cfg) { return cfg.out_dir + "/pretrain/tables.bin"; }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.empty() ? 0.0 : v[v.size() / 2];
}

}  // namespace

void cmd_ingest(const RunConfig& cfg) {
  if (cfg.data_path.empty()) throw ConfigError("ingest: data.path is not set");
  dataio::IngestReport rep;
  const std::vector<dataio::CheckIn> rows = dataio::ingest(cfg.data_path, cfg.cols, &rep);
  dataio::FilterResult filtered = dataio::filter_and_index(rows, cfg.min_poi_checkins);
  filtered.vocab.poi_region =
      dataio::partition_regions(filtered.vocab, cfg.regions, cfg.seed, cfg.kmeans_iters);
  filtered.vocab.num_regions = cfg.regions;

  dataio::SegmentConfig seg;
  seg.gap_hours = cfg.gap_hours;
  seg.min_len = cfg.min_len;
  seg.max_len = cfg.max_len;
  const dataio::Splits splits = dataio::segment_and_split(filtered, seg);

  ensure_dir(cfg.out_dir);
  dataio::write_manifests(splits, filtered.vocab, manifests_dir(cfg));

  auto report = open_out(cfg.out_dir + "/ingest_report.txt");
  report << "rows_total " << rep.total_rows << "\n"
         << "rows_parsed " << rep.parsed << "\n"
         << "rows_malformed " << rep.malformed << "\n"
         << "checkins_dropped_by_filter " << filtered.dropped_checkins << "\n"
         << "pois_dropped_by_filter " << filtered.dropped_pois << "\n"
         << "users " << filtered.vocab.users.size() << "\n"
         << "pois " << filtered.vocab.pois.size() << "\n"
         << "categories " << filtered.vocab.categories.size() << "\n"
         << "regions " << cfg.regions << "\n"
         << "segments_dropped_short " << splits.dropped_segments << "\n"
         << "users_dropped_empty " << splits.dropped_users << "\n"
         << "trajectories_train " << splits.train.size() << "\n"
         << "trajectories_val " << splits.val.size() << "\n"
         << "trajectories_test " << splits.test.size() << "\n";
  std::cout << "ingest: " << filtered.vocab.users.size() << " users, "
            << filtered.vocab.pois.size() << " pois, " << filtered.vocab.categories.size()
            << " categories; " << splits.train.size() << "/" << splits.val.size() << "/"
            << splits.test.size() << " train/val/test trajectories\n";
}

void cmd_pretrain(const RunConfig& cfg) {
  const dataio::Manifests m = dataio::read_manifests(manifests_dir(cfg));
  embeddings::PretrainConfig pc;
  pc.epochs = cfg.pretrain_epochs;
  pc.lr = cfg.pretrain_lr;
  pc.negatives = cfg.negatives;
  pc.seed = cfg.seed;
  pc.init_std = cfg.init_std;
  pc.clip_norm = cfg.clip;
  pc.curvature = cfg.curvature;
  pc.dim = cfg.dim;

  const embeddings::PretrainResult res = embeddings::pretrain(
      m.splits.train, static_cast<int>(m.vocab.users.size()),
      static_cast<int>(m.vocab.pois.size()), static_cast<int>(m.vocab.categories.size()),
      m.vocab.num_regions, pc);

  ensure_dir(cfg.out_dir + "/pretrain");
  embeddings::save_tables(res.tables, tables_bin(cfg), cfg.out_dir + "/pretrain/tables.csv");
  auto hist = open_out(cfg.out_dir + "/pretrain/loss_history.csv");
  hist << "epoch,loss\n";
  for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
    hist << e << ',' << num(res.epoch_loss[e]) << "\n";
  std::cout << "pretrain: " << res.epoch_loss.size() << " epochs";
  if (!res.epoch_loss.empty())
    std::cout << ", loss " << res.epoch_loss.front() << " -> " << res.epoch_loss.back();
  std::cout << "\n";
}

void cmd_train(const RunConfig& cfg, const std::string& resume_path,
               const std::string& tables_path) {
  kernels::set_threads(cfg.threads);
  const dataio::Manifests m = dataio::read_manifests(manifests_dir(cfg));

  model::GtrModel net;
  Adam opt;
  int start_epoch = 0;
  if (!resume_path.empty()) {
    model::LoadedCheckpoint loaded = model::load_checkpoint(resume_path);
    if (!loaded.has_train_state)
      throw ConfigError("checkpoint has no training state; cannot resume: " + resume_path);
    net = std::move(loaded.model);
    opt = std::move(loaded.opt);
    start_epoch = loaded.epoch_next;
  } else {
    net = model::GtrModel::build(cfg, m.vocab, m.splits.train);
    if (!cfg.ablate.pretrained) {
      const std::string tpath = tables_path.empty() ? tables_bin(cfg) : tables_path;
      if (!fs::exists(tpath))
        throw ConfigError("pretrained tables not found at " + tpath +
                          " (run the pretrain command first or ablate pretrained-init)");
      net.load_pretrained(embeddings::load_tables(tpath));
    }
    opt = Adam(net.params, cfg.lr);
  }

  const train::TrainResult res =
      train::train(net, m.splits.train, m.splits.val, opt, cfg.epochs, start_epoch);

  ensure_dir(cfg.out_dir + "/train");
  net.save_checkpoint(cfg.out_dir + "/train/checkpoint_best.bin", &opt,
                      start_epoch + cfg.epochs, res.best_val_mrr);
  auto hist = open_out(cfg.out_dir + "/train/history.csv");
  hist << "epoch,train_loss,val_mrr,val_ndcg1,val_ndcg10,ablation\n";
  for (const train::EpochStats& s : res.history) {
    hist << s.epoch << ',' << num(s.train_loss) << ',' << num(s.val_mrr) << ','
         << num(s.val_ndcg1) << ',' << num(s.val_ndcg10) << ',' << cfg.ablate.label() << "\n";
  }
  std::cout << "train: " << res.history.size() << " epochs, ablation " << cfg.ablate.label();
  if (res.best_epoch >= 0)
    std::cout << ", best val MRR " << res.best_val_mrr << " at epoch " << res.best_epoch;
  std::cout << "\n";
}

void cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& split) {
  kernels::set_threads(cfg.threads);
  model::LoadedCheckpoint loaded = model::load_checkpoint(checkpoint);
  const dataio::Manifests m = dataio::read_manifests(manifests_dir(cfg));
  const std::vector<dataio::Trajectory>* data = nullptr;
  if (split == "train") {
    data = &m.splits.train;
  } else if (split == "val") {
    data = &m.splits.val;
  } else if (split == "test") {
    data = &m.splits.test;
  } else {
    throw ConfigError("eval: split must be train|val|test, got " + split);
  }
  if (data->empty()) throw DataError("eval: split '" + split + "' is empty");

  const train::EvalResult res = train::evaluate(loaded.model, *data);
  ensure_dir(cfg.out_dir + "/eval");
  auto report = open_out(cfg.out_dir + "/eval/report.txt");
  report << "split " << split << "\n"
         << "queries " << res.report.queries << "\n"
         << "ndcg@1 " << num(res.report.ndcg[0]) << "\n"
         << "ndcg@5 " << num(res.report.ndcg[1]) << "\n"
         << "ndcg@10 " << num(res.report.ndcg[2]) << "\n"
         << "mrr " << num(res.report.mrr) << "\n"
         << "acc@5 " << num(res.report.acc[1]) << "\n"
         << "acc@10 " << num(res.report.acc[2]) << "\n";
  auto ranks = open_out(cfg.out_dir + "/eval/ranks.csv");
  ranks << "query,user,rank\n";
  for (std::size_t i = 0; i < res.ranks.size(); ++i)
    ranks << i << ',' << (*data)[i].user << ',' << res.ranks[i] << "\n";
  std::cout << "eval[" << split << "]: mrr " << res.report.mrr << ", ndcg@1 "
            << res.report.ndcg[0] << ", acc@10 " << res.report.acc[2] << " over "
            << res.report.queries << " queries\n";
}

void cmd_scene(const RunConfig& cfg, const std::string& checkpoint) {
  kernels::set_threads(cfg.threads);
  model::LoadedCheckpoint loaded = model::load_checkpoint(checkpoint);
  const dataio::Manifests m = dataio::read_manifests(manifests_dir(cfg));
  if (m.splits.test.empty()) throw DataError("scene: test split is empty");

  // Partition by switching frequency.
  std::array<std::vector<int>, 3> subsets;
  std::vector<double> lengths;
  for (std::size_t i = 0; i < m.splits.test.size(); ++i) {
    const auto prof = dataio::switching_profile(m.splits.test[i]);
    subsets[static_cast<int>(prof.subset)].push_back(static_cast<int>(i));
    lengths.push_back(static_cast<double>(m.splits.test[i].steps.size()));
  }
  const double med_len = median_of(lengths);

  // Length-balanced truncation to the smallest populated subset.
  std::size_t smallest = m.splits.test.size();
  for (const auto& s : subsets) {
    if (!s.empty()) smallest = std::min(smallest, s.size());
  }
  for (auto& s : subsets) {
    std::stable_sort(s.begin(), s.end(), [&](int a, int b) {
      return std::abs(m.splits.test[a].steps.size() - med_len) <
             std::abs(m.splits.test[b].steps.size() - med_len);
    });
    if (s.size() > smallest) s.resize(smallest);
  }

  ensure_dir(cfg.out_dir + "/scene");
  auto report = open_out(cfg.out_dir + "/scene/report.txt");
  auto labels_csv = open_out(cfg.out_dir + "/scene/subsets.csv");
  labels_csv << "trajectory,subset,frequency,kept\n";
  {
    std::array<std::vector<char>, 3> kept;
    for (int s = 0; s < 3; ++s) {
      kept[s].assign(m.splits.test.size(), 0);
      for (int idx : subsets[s]) kept[s][idx] = 1;
    }
    for (std::size_t i = 0; i < m.splits.test.size(); ++i) {
      const auto prof = dataio::switching_profile(m.splits.test[i]);
      const int s = static_cast<int>(prof.subset);
      labels_csv << i << ',' << s << ',' << num(prof.frequency) << ','
                 << static_cast<int>(kept[s][i]) << "\n";
    }
  }

  auto hist = open_out(cfg.out_dir + "/scene/dt_hist.csv");
  hist << "subset,bin_lo,bin_hi,count\n";
  const char* names[3] = {"low", "medium", "high"};
  std::array<std::vector<double>, 3> dts;
  for (int s = 0; s < 3; ++s) {
    report << "subset " << names[s] << "\n";
    report << "  size " << subsets[s].size() << "\n";
    if (subsets[s].empty()) continue;
    std::vector<dataio::Trajectory> group;
    for (int idx : subsets[s]) group.push_back(m.splits.test[idx]);
    const train::EvalResult ev = train::evaluate(loaded.model, group);
    report << "  acc@5 " << num(ev.report.acc[1]) << "\n";
    report << "  acc@10 " << num(ev.report.acc[2]) << "\n";

    double cr_total = 0.0;
    int cr_count = 0;
    for (const auto& traj : group) {
      const double cr = train::change_rate(loaded.model, traj);
      if (!std::isnan(cr)) {
        cr_total += cr;
        ++cr_count;
      }
    }
    report << "  change_rate " << (cr_count ? num(cr_total / cr_count) : "nan") << "\n";

    for (const auto& traj : group) dts[s].push_back(train::mean_step_size(loaded.model, traj));
    const double mean_dt =
        std::accumulate(dts[s].begin(), dts[s].end(), 0.0) / static_cast<double>(dts[s].size());
    report << "  mean_dt " << num(mean_dt) << "\n";
  }

  // Shared histogram bins across subsets.
  double max_dt = 1e-9;
  for (const auto& v : dts) {
    for (double x : v) max_dt = std::max(max_dt, x);
  }
  const int bins = 20;
  for (int s = 0; s < 3; ++s) {
    std::vector<int> counts(bins, 0);
    for (double x : dts[s]) {
      int b = static_cast<int>(x / max_dt * bins);
      b = std::clamp(b, 0, bins - 1);
      ++counts[b];
    }
    for (int b = 0; b < bins; ++b) {
      hist << names[s] << ',' << num(b * max_dt / bins) << ',' << num((b + 1) * max_dt / bins)
           << ',' << counts[b] << "\n";
    }
  }
  std::cout << "scene: subsets low/medium/high sized " << subsets[0].size() << "/"
            << subsets[1].size() << "/" << subsets[2].size() << " (balanced)\n";
}

void cmd_viz(const RunConfig& cfg, const std::string& tables_path) {
  const std::string tpath = tables_path.empty() ? tables_bin(cfg) : tables_path;
  const embeddings::EntityTables tables = embeddings::load_tables(tpath);
  const dataio::Manifests m = dataio::read_manifests(manifests_dir(cfg));

  std::vector<dataio::VizEntity> entities;
  std::vector<std::pair<std::string, std::string>> links;
  auto add_rows = [&entities](const char* kind, const Matrix& tab,
                              const std::vector<std::string>& ids) {
    for (int i = 0; i < tab.rows; ++i) {
      const std::string id = (i < static_cast<int>(ids.size())) ? ids[i] : std::to_string(i);
      entities.push_back(dataio::VizEntity{
          kind, id, std::vector<double>(tab.row(i), tab.row(i) + tab.cols)});
    }
  };
  add_rows("poi", tables.poi, m.vocab.pois);
  add_rows("category", tables.cat, m.vocab.categories);
  for (std::size_t p = 0; p < m.vocab.pois.size(); ++p)
    links.emplace_back(m.vocab.pois[p], m.vocab.categories[m.vocab.poi_category[p]]);

  ensure_dir(cfg.out_dir + "/viz");
  auto out = open_out(cfg.out_dir + "/viz/poincare.csv");
  dataio::export_poincare_viz(entities, links, out, tables.curvature);
  std::cout << "viz: wrote " << entities.size() << " entities and " << links.size()
            << " links\n";
}

namespace {

double time_scan_ms(int L, int d, std::uint64_t seed, int reps) {
  Rng rng(seed);
  Matrix dt_weight = Matrix::randn(1, d, rng, 0.3);
  Matrix dt_bias = Matrix(1, d);
  Matrix a_proj_w = Matrix::randn(d, 8, rng, 0.3);
  Matrix a_proj_b = Matrix(1, d);
  Matrix b_proj_w = Matrix::randn(d, 8, rng, 0.3);
  Matrix b_proj_b = Matrix(1, d);
  Matrix c_proj_w = Matrix::randn(d, 8, rng, 0.3);
  Matrix c_proj_b = Matrix(1, d);
  Matrix anchor = Matrix::randn(1, d, rng, 0.05);
  Matrix out_w = Matrix::randn(d, d, rng, 1.0 / std::sqrt(d));
  const gtr_ssm::SsmLayerWeights w{&dt_weight, &dt_bias, &a_proj_w, &a_proj_b, &b_proj_w,
                                   &b_proj_b,  &c_proj_w, &c_proj_b, &anchor,   &out_w};
  gtr_ssm::ScanInputs in;
  in.log_q = Matrix::randn(L, d, rng, 0.1);
  in.u_c = Matrix::randn(L, 8, rng, 0.5);
  for (int i = 0; i < L; ++i) in.gamma.push_back(rng.uniform(0.2, 0.8));

  std::vector<double> times;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = gtr_ssm::scan(in, w, 1.0);
    const auto t1 = std::chrono::steady_clock::now();
    if (res.outputs.size() != static_cast<std::size_t>(L)) throw NumericError("bench: bad scan");
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return median_of(times);
}

}  // namespace

void cmd_bench(const RunConfig& cfg) {
  kernels::set_threads(cfg.threads);
  ensure_dir(cfg.out_dir + "/bench");
  auto out = open_out(cfg.out_dir + "/bench/timings.csv");
  out << "section,name,value\n";
  auto cell = [&out](const std::string& section, const std::string& name, auto&& fn) {
    try {
      out << section << ',' << name << ',' << num(fn()) << "\n";
    } catch (const std::exception& e) {
      out << section << ',' << name << ",nan\n";
      std::cerr << "bench cell " << section << "/" << name << " failed: " << e.what() << "\n";
    }
  };

  // Sequence-length scaling of the scan (fixed d = 64, median of 5).
  double t1024 = 0.0, t2048 = 0.0;
  for (int L : {256, 512, 1024, 2048}) {
    cell("scan_length_ms", "L" + std::to_string(L), [&] {
      const double t = time_scan_ms(L, 64, cfg.seed, 5);
      if (L == 1024) t1024 = t;
      if (L == 2048) t2048 = t;
      return t;
    });
  }
  cell("scan_length_ms", "ratio_2048_over_1024", [&] { return t2048 / t1024; });

  // Dimension scaling at fixed length (the d^2 output projection shows).
  for (int d : {16, 32, 64, 128}) {
    cell("scan_dim_ms", "d" + std::to_string(d),
         [&] { return time_scan_ms(256, d, cfg.seed, 5); });
  }

  // Serial vs OpenMP kernel comparison.
  {
    Rng rng(cfg.seed);
    const Matrix tangent = Matrix::randn(200000, 64, rng, 0.5);
    Matrix buf(tangent.rows, tangent.cols);
    cell("kernels_ms", "exp_o_rows_serial", [&] {
      const auto t0 = std::chrono::steady_clock::now();
      kernels::exp_o_rows_serial(tangent, 1.0, buf);
      return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
          .count();
    });
    cell("kernels_ms", "exp_o_rows_parallel", [&] {
      const auto t0 = std::chrono::steady_clock::now();
      kernels::exp_o_rows_parallel(tangent, 1.0, buf);
      return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
          .count();
    });
    std::vector<double> t0s(tangent.rows);
    for (int i = 0; i < tangent.rows; ++i) t0s[i] = std::sqrt(1.0 + sqnorm(buf.row_span(i)));
    std::vector<double> scores(tangent.rows);
    const std::vector<double> query(64, 0.1);
    cell("kernels_ms", "sqdist_serial", [&] {
      const auto t0 = std::chrono::steady_clock::now();
      kernels::sqdist_row_serial(query, std::sqrt(1.0 + sqnorm(query)), buf, t0s, 1.0, scores);
      return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
          .count();
    });
    cell("kernels_ms", "sqdist_parallel", [&] {
      const auto t0 = std::chrono::steady_clock::now();
      kernels::sqdist_row_parallel(query, std::sqrt(1.0 + sqnorm(query)), buf, t0s, 1.0, scores);
      return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
          .count();
    });
  }
  std::cout << "bench: wrote " << cfg.out_dir << "/bench/timings.csv (scan L ratio "
            << (t1024 > 0 ? t2048 / t1024 : 0.0) << ")\n";
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Hyperbolic next-POI recommendation pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::vector<std::string> ablations;
  std::string seed_str, out_dir;

  app.add_option("--config", config_path, "Path to a key = value config file")
      ->configurable(false);
  app.add_option("--set", overrides, "Override one config key (key=value, repeatable)");
  app.add_option("--ablate", ablations,
                 "Disable one component (ssm|pretrained-init|hyperbolic-mode|st-channel|"
                 "attention|context-drive, repeatable)");
  app.add_option("--seed", seed_str, "Random seed override");
  app.add_option("--out", out_dir, "Output directory override");

  std::string resume_path, tables_path, checkpoint, split = "test";

  CLI::App* ingest = app.add_subcommand("ingest", "Parse check-ins and write split manifests");
  CLI::App* pretrain = app.add_subcommand("pretrain", "Contrastive embedding pretraining");
  CLI::App* train_cmd = app.add_subcommand("train", "End-to-end model training");
  train_cmd->add_option("--resume", resume_path, "Continue from a checkpoint with train state");
  train_cmd->add_option("--tables", tables_path, "Pretrained tables path override");
  CLI::App* eval_cmd = app.add_subcommand("eval", "Ranking metrics on a split");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  eval_cmd->add_option("--split", split, "train|val|test (default test)");
  CLI::App* scene = app.add_subcommand("scene", "Scene-switching subset analysis");
  scene->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  CLI::App* viz = app.add_subcommand("viz", "Poincare-disk embedding export");
  viz->add_option("--tables", tables_path, "Pretrained tables path override");
  CLI::App* bench = app.add_subcommand("bench", "Runtime benchmarks");

  // Global options may follow the subcommand name.
  for (CLI::App* sub : app.get_subcommands(nullptr)) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = parse_config_file(config_path);
    for (const std::string& o : overrides) apply_override(cfg, o);
    for (const std::string& a : ablations) apply_ablation(cfg.ablate, a);
    if (!seed_str.empty()) apply_override(cfg, "seed=" + seed_str);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    cfg.validate();

    if (ingest->parsed()) cmd_ingest(cfg);
    if (pretrain->parsed()) cmd_pretrain(cfg);
    if (train_cmd->parsed()) cmd_train(cfg, resume_path, tables_path);
    if (eval_cmd->parsed()) cmd_eval(cfg, checkpoint, split);
    if (scene->parsed()) cmd_scene(cfg, checkpoint);
    if (viz->parsed()) cmd_viz(cfg, tables_path);
    if (bench->parsed()) cmd_bench(cfg);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace gtr::cli
