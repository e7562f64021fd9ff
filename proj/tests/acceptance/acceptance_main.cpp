// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: runs every release criterion at its stated tolerance and
// prints one PASS/FAIL/SKIP line per criterion. Exits nonzero if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <iostream>

#include "gtr/dataio.hpp"
#include "gtr/embeddings.hpp"
#include "gtr/gtr_ssm.hpp"
#include "gtr/kernels.hpp"
#include "gtr/manifold.hpp"
#include "gtr/model.hpp"
#include "gtr/predictor.hpp"
#include "gtr/rng.hpp"
#include "gtr/train.hpp"
#include "testutil.hpp"

using namespace gtr;

namespace {

enum class Outcome { kPass, kFail, kSkip };

struct Result {
  Outcome outcome = Outcome::kPass;
  std::string detail;
};

struct Check {
  Result* result;
  void operator()(bool ok, const std::string& what) {
    if (!ok && result->outcome != Outcome::kFail) {
      result->outcome = Outcome::kFail;
      result->detail = what;
    }
  }
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

// ---------------------------------------------------------------------------
// 1. Manifold suite
Result criterion_manifold() {
  Result res;
  Check check{&res};
  Rng rng(1001);
  double max_roundtrip = 0.0, max_inner = 0.0, max_rot = 0.0;
  for (int d : {2, 8, 64}) {
    manifold::RotationParams rot = manifold::RotationParams::identity(d);
    for (double& a : rot.angles) a = rng.uniform(-3.0, 3.0);
    manifold::LorentzPoint prev = manifold::origin(d);
    manifold::LorentzPoint prev_rot = prev;
    for (int i = 0; i < 10000; ++i) {
      const manifold::TangentVector v = test::random_tangent(rng, d, 10.0);
      const manifold::LorentzPoint x = manifold::exp_o(v);
      max_inner = std::max(max_inner,
                           std::abs(manifold::lorentz_inner(x.coords, x.coords) + 1.0));
      const manifold::TangentVector back = manifold::log_o(x);
      max_roundtrip = std::max(max_roundtrip, test::max_abs_diff(v.spatial, back.spatial));
      const manifold::LorentzPoint xr = manifold::rotate(x, rot);
      max_inner = std::max(max_inner,
                           std::abs(manifold::lorentz_inner(xr.coords, xr.coords) + 1.0));
      if (i % 7 == 0) {
        // Pairwise distance preservation against the previous sample.
        const double before = manifold::sq_lorentz_dist(prev, x);
        const double after = manifold::sq_lorentz_dist(prev_rot, xr);
        max_rot = std::max(max_rot, std::abs(before - after) /
                                        std::max(1.0, std::abs(before)));
        prev = x;
        prev_rot = xr;
      }
    }
  }
  check(max_roundtrip < 1e-5, "roundtrip " + fmt(max_roundtrip));
  check(max_inner < 1e-6, "inner " + fmt(max_inner));
  check(max_rot < 1e-6, "rotation drift " + fmt(max_rot));
  if (res.outcome == Outcome::kPass)
    res.detail = "roundtrip<=" + fmt(max_roundtrip) + " inner<=" + fmt(max_inner) +
                 " rot<=" + fmt(max_rot);
  return res;
}

// ---------------------------------------------------------------------------
// 2. Mobius suite
Result criterion_mobius() {
  Result res;
  Check check{&res};
  Rng rng(1002);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int d = 2 + static_cast<int>(rng.below(6));
    const manifold::LorentzPoint o = manifold::origin(d);
    const manifold::LorentzPoint y = test::random_point(rng, d, 4.0);
    worst = std::max(worst, test::max_abs_diff(manifold::mobius_add(o, y).coords, y.coords));
    worst = std::max(worst, test::max_abs_diff(manifold::mobius_add(y, o).coords, y.coords));
  }
  check(worst < 1e-8, "identity law " + fmt(worst));

  const manifold::LorentzPoint a = manifold::poincare_to_lorentz(std::vector<double>{0.3});
  const manifold::LorentzPoint b = manifold::poincare_to_lorentz(std::vector<double>{0.4});
  const double scalar = manifold::lorentz_to_poincare(manifold::mobius_add(a, b))[0];
  check(std::abs(scalar - 0.625) < 1e-12, "scalar case " + fmt(scalar));
  if (res.outcome == Outcome::kPass)
    res.detail = "identity<=" + fmt(worst) + " scalar=" + fmt(scalar);
  return res;
}

// ---------------------------------------------------------------------------
// 3. Discretization
Result criterion_discretize() {
  Result res;
  Check check{&res};
  {
    const std::vector<double> dt = {1.0};
    const std::vector<double> a = {-std::log(2.0)};
    const auto disc = gtr_ssm::discretize(dt, a);
    check(std::abs(disc.a_bar[0] - 0.5) < 1e-6, "a_bar " + fmt(disc.a_bar[0]));
    check(std::abs(disc.b_bar[0] - 0.721348) < 1e-6, "b_bar " + fmt(disc.b_bar[0]));
  }
  {
    // Both branch formulas evaluated at the switch point agree to 1e-12.
    const double a = -1.0;
    const double z = 1e-4 * a;
    const double exact = (std::exp(z) - 1.0) / a;
    const double series = 1e-4 * (1.0 + z / 2.0 + z * z / 6.0);
    check(std::abs(exact - series) <= 1e-12, "switch jump " + fmt(std::abs(exact - series)));
  }
  {
    const std::vector<double> dt = {0.37};
    const std::vector<double> a = {0.0};
    const auto disc = gtr_ssm::discretize(dt, a);
    check(disc.a_bar[0] == 1.0, "a=0 channel a_bar");
    check(disc.b_bar[0] == 0.37, "a=0 channel b_bar");
  }
  if (res.outcome == Outcome::kPass) res.detail = "reference cell, switch, and a=0 channel exact";
  return res;
}

// ---------------------------------------------------------------------------
// 4. Scan oracle (extended-precision unrolled recurrence)
Result criterion_scan_oracle() {
  Result res;
  Check check{&res};
  const int d = 8, ctx = 3;
  Rng rng(1004);
  Matrix dt_weight = Matrix::randn(1, d, rng, 0.3);
  Matrix dt_bias = Matrix::randn(1, d, rng, 0.3);
  Matrix a_proj_w = Matrix::randn(d, ctx, rng, 0.3);
  Matrix a_proj_b = Matrix::randn(1, d, rng, 0.3);
  Matrix b_proj_w = Matrix::randn(d, ctx, rng, 0.3);
  Matrix b_proj_b = Matrix::randn(1, d, rng, 0.3);
  Matrix c_proj_w = Matrix::randn(d, ctx, rng, 0.3);
  Matrix c_proj_b = Matrix::randn(1, d, rng, 0.3);
  Matrix anchor = Matrix::randn(1, d, rng, 0.1);
  Matrix out_w = Matrix::randn(d, d, rng, 0.3);
  const gtr_ssm::SsmLayerWeights w{&dt_weight, &dt_bias, &a_proj_w, &a_proj_b, &b_proj_w,
                                   &b_proj_b,  &c_proj_w, &c_proj_b, &anchor,   &out_w};

  gtr_ssm::ScanInputs in;
  in.log_q = Matrix::randn(6, d, rng, 0.3);
  in.u_c = Matrix::randn(6, ctx, rng, 0.5);
  for (int i = 0; i < 6; ++i) in.gamma.push_back(rng.uniform(0.1, 0.9));
  const gtr_ssm::ScanResult got = gtr_ssm::scan(in, w);

  // Long-double unrolled recurrence.
  auto exp_o_ld = [d](const std::vector<long double>& v) {
    long double r2 = 0;
    for (long double x : v) r2 += x * x;
    const long double r = std::sqrt(r2);
    std::vector<long double> out(d + 1);
    out[0] = std::cosh(r);
    const long double f = (r < 1e-14L) ? 1.0L : std::sinh(r) / r;
    for (int i = 0; i < d; ++i) out[i + 1] = f * v[i];
    return out;
  };
  auto mobius_ld = [d](const std::vector<long double>& x, const std::vector<long double>& y) {
    auto ball = [d](const std::vector<long double>& p) {
      std::vector<long double> b(d);
      for (int i = 0; i < d; ++i) b[i] = p[i + 1] / (p[0] + 1.0L);
      return b;
    };
    const auto px = ball(x), py = ball(y);
    long double xy = 0, nx = 0, ny = 0;
    for (int i = 0; i < d; ++i) {
      xy += px[i] * py[i];
      nx += px[i] * px[i];
      ny += py[i] * py[i];
    }
    const long double den = 1.0L + 2.0L * xy + nx * ny;
    std::vector<long double> pz(d);
    for (int i = 0; i < d; ++i)
      pz[i] = ((1.0L + 2.0L * xy + ny) * px[i] + (1.0L - nx) * py[i]) / den;
    long double nz = 0;
    for (int i = 0; i < d; ++i) nz += pz[i] * pz[i];
    std::vector<long double> out(d + 1);
    out[0] = (1.0L + nz) / (1.0L - nz);
    for (int i = 0; i < d; ++i) out[i + 1] = 2.0L * pz[i] / (1.0L - nz);
    return out;
  };

  const auto a = gtr_ssm::a_diag(d);
  std::vector<long double> h(d, 0.0L);
  std::vector<long double> anchor_t(d);
  for (int i = 0; i < d; ++i) anchor_t[i] = anchor.a[i];
  const auto anchor_pt = exp_o_ld(anchor_t);
  auto h_prev = mobius_ld(exp_o_ld(std::vector<long double>(d, 0.0L)), anchor_pt);

  double worst = 0.0;
  for (int t = 0; t < 6; ++t) {
    for (int i = 0; i < d; ++i) {
      const long double proj =
          static_cast<long double>(dot(a_proj_w.row_span(i), in.u_c.row_span(t))) +
          a_proj_b.a[i];
      const long double pre = proj * dt_weight.a[i] + dt_bias.a[i];
      const long double dtv = std::log1p(std::exp(pre)) * in.gamma[t];
      const long double z = dtv * a[i];
      const long double abar = std::exp(z);
      const long double bbar = (std::abs(static_cast<double>(z)) < 1e-4)
                                   ? dtv * (1.0L + z / 2.0L + z * z / 6.0L)
                                   : (std::exp(z) - 1.0L) / a[i];
      const long double bproj =
          static_cast<long double>(dot(b_proj_w.row_span(i), in.u_c.row_span(t))) +
          b_proj_b.a[i];
      const long double cproj =
          static_cast<long double>(dot(c_proj_w.row_span(i), in.u_c.row_span(t))) +
          c_proj_b.a[i];
      h[i] = abar * h[i] + bbar * bproj / (1.0L + std::exp(-cproj)) *
                               static_cast<long double>(in.log_q.at(t, i));
    }
    const auto re_proj = mobius_ld(exp_o_ld(h), anchor_pt);
    std::vector<long double> lin_sp(d, 0.0L);
    for (int r = 0; r < d; ++r) {
      for (int cidx = 0; cidx < d; ++cidx)
        lin_sp[r] += static_cast<long double>(out_w.at(r, cidx)) * re_proj[cidx + 1];
    }
    long double n2 = 0;
    for (long double v : lin_sp) n2 += v * v;
    std::vector<long double> lin(d + 1);
    lin[0] = std::sqrt(1.0L + n2);
    for (int i = 0; i < d; ++i) lin[i + 1] = lin_sp[i];
    const auto expect = mobius_ld(h_prev, lin);
    h_prev = re_proj;
    for (int i = 0; i <= d; ++i) {
      worst = std::max(worst, test::rel_err(got.outputs[t].coords[i],
                                            static_cast<double>(expect[i]), 1.0));
    }
  }
  check(worst < 1e-10, "oracle mismatch " + fmt(worst));

  // Manifold residence for long sequences.
  gtr_ssm::ScanInputs long_in;
  long_in.log_q = Matrix::randn(512, d, rng, 0.2);
  long_in.u_c = Matrix::randn(512, ctx, rng, 0.5);
  for (int i = 0; i < 512; ++i) long_in.gamma.push_back(rng.uniform(0.1, 0.9));
  const gtr_ssm::ScanResult long_res = gtr_ssm::scan(long_in, w);
  const manifold::LorentzPoint anchor_pt_d =
      manifold::exp_o(manifold::TangentVector(std::vector<double>(anchor.a)));
  double worst_inv = 0.0;
  for (int t = 0; t < 512; ++t) {
    std::vector<double> hrow(long_res.h.row(t), long_res.h.row(t) + d);
    const auto H = manifold::mobius_add(
        manifold::exp_o(manifold::TangentVector(std::move(hrow))), anchor_pt_d);
    worst_inv =
        std::max(worst_inv, std::abs(manifold::lorentz_inner(H.coords, H.coords) + 1.0));
    worst_inv = std::max(
        worst_inv, std::abs(manifold::lorentz_inner(long_res.outputs[t].coords,
                                                    long_res.outputs[t].coords) +
                            1.0));
  }
  check(worst_inv < 1e-6, "manifold residence " + fmt(worst_inv));
  if (res.outcome == Outcome::kPass)
    res.detail = "oracle rel<=" + fmt(worst) + " residence<=" + fmt(worst_inv);
  return res;
}

// ---------------------------------------------------------------------------
// Shared fixtures for the model-level criteria.

dataio::Vocab make_vocab(int users, const std::vector<int>& poi_cat,
                         const std::vector<int>& poi_reg, const std::vector<double>& poi_lat,
                         const std::vector<double>& poi_lon, int cats, int regs) {
  dataio::Vocab v;
  for (int i = 0; i < users; ++i) {
    v.users.push_back("u" + std::to_string(i));
    v.user_map.emplace(v.users.back(), i);
  }
  for (std::size_t i = 0; i < poi_cat.size(); ++i) {
    v.pois.push_back("p" + std::to_string(i));
    v.poi_map.emplace(v.pois.back(), static_cast<int>(i));
  }
  v.poi_category = poi_cat;
  v.poi_region = poi_reg;
  v.poi_lat = poi_lat;
  v.poi_lon = poi_lon;
  for (int i = 0; i < cats; ++i) {
    v.categories.push_back("c" + std::to_string(i));
    v.cat_map.emplace(v.categories.back(), i);
  }
  v.num_regions = regs;
  return v;
}

dataio::Step step_of(const dataio::Vocab& v, int poi, std::int64_t ts) {
  return dataio::Step{poi, v.poi_category[poi], v.poi_region[poi], ts, v.poi_lat[poi],
                      v.poi_lon[poi]};
}

// ---------------------------------------------------------------------------
// 5. Gradient suite: full model on a 4-step, d = 8, 3-POI instance.
Result criterion_gradients() {
  Result res;
  Check check{&res};
  RunConfig cfg;
  cfg.dim = 8;
  cfg.d_geo = 4;
  cfg.d_time = 6;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.anchors = 3;
  cfg.top_k = 2;
  cfg.rff_scales = 2;
  cfg.rff_freqs = 2;
  cfg.time_freqs = 2;
  cfg.regions = 2;
  cfg.seed = 1005;

  const dataio::Vocab vocab = make_vocab(2, {0, 1, 0}, {0, 1, 1}, {40.7, 40.8, 40.75},
                                         {-74.0, -73.9, -74.05}, 2, 2);
  Rng rng(55);
  dataio::Trajectory traj;
  traj.user = 0;
  std::int64_t ts = 1333324800;
  for (int s = 0; s < 4; ++s) {
    ts += static_cast<std::int64_t>(rng.uniform(1800.0, 4 * 3600.0));
    traj.steps.push_back(step_of(vocab, static_cast<int>(rng.below(3)), ts));
  }
  model::GtrModel m = model::GtrModel::build(cfg, vocab, {traj});

  GradStore grads(m.params);
  Tape tape(m.params, grads);
  tape.backward(m.loss_tape(tape, traj));

  const double h = 1e-5;
  std::size_t total = 0, loose = 0;
  double worst = 0.0;
  for (int ti = 0; ti < m.params.size() && res.outcome == Outcome::kPass; ++ti) {
    for (std::size_t j = 0; j < m.params[ti].value.a.size(); ++j) {
      const double orig = m.params[ti].value.a[j];
      auto eval = [&](double x) {
        m.params[ti].value.a[j] = x;
        GradStore g2(m.params);
        Tape t2(m.params, g2);
        return t2.val(m.loss_tape(t2, traj)).a[0];
      };
      const double fd = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
      m.params[ti].value.a[j] = orig;
      const double rel = test::rel_err(grads.g[ti].a[j], fd);
      worst = std::max(worst, rel);
      ++total;
      if (rel >= 1e-4) ++loose;
      if (rel >= 1e-3) {
        check(false, "parameter " + m.params[ti].name + "[" + std::to_string(j) +
                         "] rel err " + fmt(rel));
        break;
      }
    }
  }
  check(loose <= total / 100, std::to_string(loose) + "/" + std::to_string(total) +
                                  " parameters above 1e-4");
  if (res.outcome == Outcome::kPass)
    res.detail = std::to_string(total) + " parameters, worst rel " + fmt(worst) + ", " +
                 std::to_string(loose) + " above 1e-4";
  return res;
}

// ---------------------------------------------------------------------------
// 6. Hierarchy property: categories cluster toward the disk center.
Result criterion_hierarchy() {
  Result res;
  Check check{&res};
  // 3 categories x 10 POIs; each user random-walks inside one category.
  std::vector<int> poi_cat, poi_reg;
  std::vector<double> lat, lon;
  for (int c = 0; c < 3; ++c) {
    for (int p = 0; p < 10; ++p) {
      poi_cat.push_back(c);
      poi_reg.push_back(c);
      lat.push_back(10.0 * c + 0.01 * p);
      lon.push_back(20.0 * c + 0.01 * p);
    }
  }
  const dataio::Vocab vocab = make_vocab(12, poi_cat, poi_reg, lat, lon, 3, 3);

  Rng rng(1006);
  std::vector<dataio::Trajectory> trajs;
  for (int u = 0; u < 12; ++u) {
    const int cat = u % 3;
    dataio::Trajectory t;
    t.user = u;
    std::int64_t ts = 1333324800 + u * 3600;
    for (int s = 0; s < 40; ++s) {
      const int poi = cat * 10 + static_cast<int>(rng.below(10));
      t.steps.push_back(step_of(vocab, poi, ts));
      ts += 3600;
    }
    trajs.push_back(std::move(t));
  }

  embeddings::PretrainConfig pc;
  pc.dim = 16;
  pc.epochs = 300;
  pc.lr = 0.05;
  pc.negatives = 5;
  pc.seed = 2024;
  const embeddings::PretrainResult pr = embeddings::pretrain(trajs, 12, 30, 3, 3, pc);

  const double cat_radius = embeddings::mean_poincare_radius(pr.tables.cat, 1.0);
  const double poi_radius = embeddings::mean_poincare_radius(pr.tables.poi, 1.0);
  check(cat_radius + 0.05 <= poi_radius,
        "cat radius " + fmt(cat_radius) + " vs poi radius " + fmt(poi_radius));
  res.detail = "categories " + fmt(cat_radius) + ", pois " + fmt(poi_radius) + ", margin " +
               fmt(poi_radius - cat_radius);
  return res;
}

// ---------------------------------------------------------------------------
// 7. Overfit sanity: a repeated 5-POI loop is memorized to ACC@1 = 1.
Result criterion_overfit() {
  Result res;
  Check check{&res};
  kernels::set_threads(1);
  RunConfig cfg;
  cfg.dim = 16;
  cfg.d_geo = 4;
  cfg.d_time = 6;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.anchors = 2;
  cfg.top_k = 2;
  cfg.rff_scales = 2;
  cfg.rff_freqs = 2;
  cfg.time_freqs = 2;
  cfg.regions = 2;
  cfg.batch = 1;
  cfg.lr = 0.01;
  cfg.seed = 1007;
  cfg.ablate.pretrained = true;

  const dataio::Vocab vocab = make_vocab(
      1, {0, 1, 0, 1, 0}, {0, 1, 0, 1, 0}, {40.70, 40.71, 40.72, 40.73, 40.74},
      {-74.0, -74.01, -74.02, -74.03, -74.04}, 2, 2);
  dataio::Trajectory traj;
  traj.user = 0;
  std::int64_t ts = 1333324800;
  for (int s = 0; s < 26; ++s) {
    traj.steps.push_back(step_of(vocab, s % 5, ts));
    ts += 3600;
  }
  const std::vector<dataio::Trajectory> trajs = {traj};

  model::GtrModel m = model::GtrModel::build(cfg, vocab, trajs);
  Adam opt(m.params, cfg.lr);
  int epochs_used = 0;
  double acc1 = 0.0;
  while (epochs_used < 200) {
    train::train(m, trajs, {}, opt, 10, epochs_used);
    epochs_used += 10;
    acc1 = train::evaluate(m, trajs).report.acc[0];
    if (acc1 == 1.0) break;
  }
  check(acc1 == 1.0, "training ACC@1 " + fmt(acc1) + " after " +
                         std::to_string(epochs_used) + " epochs");
  res.detail = "ACC@1 = " + fmt(acc1) + " after " + std::to_string(epochs_used) + " epochs";
  return res;
}

// ---------------------------------------------------------------------------
// 8. Adaptive-step property: smaller steps on the high-switching subset.
Result criterion_adaptive_step() {
  Result res;
  Check check{&res};
  kernels::set_threads(1);
  // High-switch users draw check-ins from a sliding 4-POI window on an
  // 8-POI ring (all four categories inside each window) with 8h gaps: any
  // single check-in is 4-way ambiguous about the window, so the next POI is
  // predictable only from state accumulated over many steps, while each
  // individual input is mostly noise. Low-switch users run deterministic
  // in-category 3-cycles at 1h gaps, where the current input determines the
  // next POI and stale state misleads. Small steps preserve state and
  // shield it from input noise; large steps refresh it, so training should
  // separate the step sizes between the regimes.
  const int kHighUsers = 25, kLowUsers = 25;
  std::vector<int> poi_cat, poi_reg;
  std::vector<double> lat, lon;
  // POIs 0..7: the ring, cat(p_i) = i mod 4; POIs 8..22: low-cycle pois in
  // 5 groups of 3 (cats 4..8). One shared geographic blob.
  for (int i = 0; i < 8; ++i) {
    poi_cat.push_back(i % 4);
    poi_reg.push_back(0);
    lat.push_back(40.0 + 0.002 * i);
    lon.push_back(-74.0 + 0.002 * i);
  }
  for (int g = 0; g < 5; ++g) {
    for (int i = 0; i < 3; ++i) {
      poi_cat.push_back(4 + g);
      poi_reg.push_back(0);
      lat.push_back(40.0 + 0.002 * (8 + g * 3 + i));
      lon.push_back(-74.0 + 0.002 * (8 + g * 3 + i));
    }
  }
  const dataio::Vocab vocab =
      make_vocab(kHighUsers + kLowUsers, poi_cat, poi_reg, lat, lon, 9, 1);

  Rng corpus_rng(777);
  std::vector<dataio::Trajectory> high, low;
  for (int u = 0; u < kHighUsers; ++u) {
    int wprev = -1;
    for (int rep = 0; rep < 2; ++rep) {
      dataio::Trajectory t;
      t.user = u;
      std::int64_t ts = 1333324800 + u * 1800 + rep * 40 * 86400;
      int w = static_cast<int>(corpus_rng.below(8));
      while (w == wprev) w = static_cast<int>(corpus_rng.below(8));
      wprev = w;
      int prev = -1;
      for (int s = 0; s < 18; ++s) {
        int poi = (w + static_cast<int>(corpus_rng.below(4))) % 8;
        while (poi == prev) poi = (w + static_cast<int>(corpus_rng.below(4))) % 8;
        prev = poi;
        t.steps.push_back(step_of(vocab, poi, ts));
        ts += 8 * 3600;
      }
      high.push_back(std::move(t));
    }
  }
  for (int u = 0; u < kLowUsers; ++u) {
    dataio::Trajectory t;
    t.user = kHighUsers + u;
    const int g = u % 5;
    std::int64_t ts = 1333324800 + u * 1800;
    for (int s = 0; s < 16; ++s) {
      t.steps.push_back(step_of(vocab, 8 + g * 3 + (s % 3), ts));
      ts += 3600;
    }
    low.push_back(std::move(t));
  }

  // The fixture labels must come out of the switching profile itself.
  for (const auto& t : high) {
    if (dataio::switching_profile(t).subset != dataio::SwitchSubset::kHigh)
      check(false, "high fixture not labeled high");
  }
  for (const auto& t : low) {
    if (dataio::switching_profile(t).subset != dataio::SwitchSubset::kLow)
      check(false, "low fixture not labeled low");
  }

  std::vector<dataio::Trajectory> all = high;
  all.insert(all.end(), low.begin(), low.end());

  RunConfig cfg;
  cfg.dim = 16;
  cfg.d_geo = 4;
  cfg.d_time = 8;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.anchors = 4;
  cfg.top_k = 2;
  cfg.rff_scales = 2;
  cfg.rff_freqs = 2;
  cfg.time_freqs = 3;
  cfg.regions = 1;
  cfg.batch = 128;  // full batch keeps the trajectory smooth
  cfg.lr = 0.001;
  cfg.clip = 1.0;
  cfg.seed = 2;

  model::GtrModel m = model::GtrModel::build(cfg, vocab, all);
  {
    embeddings::PretrainConfig pc;
    pc.dim = cfg.dim;
    pc.epochs = 150;
    pc.lr = 0.03;
    pc.negatives = 5;
    pc.seed = cfg.seed;
    const auto pr = embeddings::pretrain(all, kHighUsers + kLowUsers,
                                         static_cast<int>(vocab.pois.size()),
                                         static_cast<int>(vocab.categories.size()),
                                         vocab.num_regions, pc);
    m.load_pretrained(pr.tables);
  }
  Adam opt(m.params, cfg.lr);
  train::train(m, all, {}, opt, 450);

  std::vector<double> high_dt, low_dt;
  for (const auto& t : high) high_dt.push_back(train::mean_step_size(m, t));
  for (const auto& t : low) low_dt.push_back(train::mean_step_size(m, t));
  const double mean_high =
      std::accumulate(high_dt.begin(), high_dt.end(), 0.0) / high_dt.size();
  const double mean_low = std::accumulate(low_dt.begin(), low_dt.end(), 0.0) / low_dt.size();
  const double p = test::mann_whitney_p_less(high_dt, low_dt);
  check(p < 0.01, "one-sided p " + fmt(p) + " (high " + fmt(mean_high) + ", low " +
                      fmt(mean_low) + ")");
  res.detail = "mean dt high " + fmt(mean_high) + " vs low " + fmt(mean_low) + ", p " + fmt(p);
  return res;
}

// ---------------------------------------------------------------------------
// 9. Linear-time scan
Result criterion_linear_time() {
  Result res;
  Check check{&res};
  const int d = 64, ctx = 8;
  Rng rng(1009);
  Matrix dt_weight = Matrix::randn(1, d, rng, 0.3);
  Matrix dt_bias = Matrix(1, d);
  Matrix a_proj_w = Matrix::randn(d, ctx, rng, 0.3);
  Matrix a_proj_b = Matrix(1, d);
  Matrix b_proj_w = Matrix::randn(d, ctx, rng, 0.3);
  Matrix b_proj_b = Matrix(1, d);
  Matrix c_proj_w = Matrix::randn(d, ctx, rng, 0.3);
  Matrix c_proj_b = Matrix(1, d);
  Matrix anchor = Matrix::randn(1, d, rng, 0.05);
  Matrix out_w = Matrix::randn(d, d, rng, 0.125);
  const gtr_ssm::SsmLayerWeights w{&dt_weight, &dt_bias, &a_proj_w, &a_proj_b, &b_proj_w,
                                   &b_proj_b,  &c_proj_w, &c_proj_b, &anchor,   &out_w};

  auto make_inputs = [&](int L) {
    gtr_ssm::ScanInputs in;
    Rng r2(99);
    in.log_q = Matrix::randn(L, d, r2, 0.1);
    in.u_c = Matrix::randn(L, ctx, r2, 0.5);
    for (int i = 0; i < L; ++i) in.gamma.push_back(r2.uniform(0.2, 0.8));
    return in;
  };
  const gtr_ssm::ScanInputs in_short = make_inputs(1024);
  const gtr_ssm::ScanInputs in_long = make_inputs(2048);
  auto timed = [&](const gtr_ssm::ScanInputs& in) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = gtr_ssm::scan(in, w);
    const auto t1 = std::chrono::steady_clock::now();
    if (out.outputs.empty()) throw NumericError("bad scan");
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
  };
  // Warm caches and the allocator, then interleave the measurements so
  // machine noise drifts both lengths equally.
  timed(in_short);
  timed(in_long);
  std::vector<double> short_ms, long_ms;
  for (int rep = 0; rep < 5; ++rep) {
    short_ms.push_back(timed(in_short));
    long_ms.push_back(timed(in_long));
  }
  std::sort(short_ms.begin(), short_ms.end());
  std::sort(long_ms.begin(), long_ms.end());
  const double t1024 = short_ms[short_ms.size() / 2];
  const double t2048 = long_ms[long_ms.size() / 2];
  const double ratio = t2048 / t1024;
  check(ratio <= 2.5, "ratio " + fmt(ratio));
  res.detail = "median 1024: " + fmt(t1024) + "ms, 2048: " + fmt(t2048) + "ms, ratio " +
               fmt(ratio);
  return res;
}

// ---------------------------------------------------------------------------
// 10. Preprocessing fidelity on the public NYC dump (skipped when absent).
Result criterion_nyc() {
  Result res;
  std::string path;
  if (const char* env = std::getenv("GTR_NYC_PATH")) path = env;
  if (path.empty()) {
    for (const char* cand :
         {"data/dataset_TSMC2014_NYC.txt", "../data/dataset_TSMC2014_NYC.txt"}) {
      if (std::filesystem::exists(cand)) {
        path = cand;
        break;
      }
    }
  }
  if (path.empty() || !std::filesystem::exists(path)) {
    res.outcome = Outcome::kSkip;
    res.detail = "dataset file absent (set GTR_NYC_PATH to run)";
    return res;
  }
  Check check{&res};
  dataio::ColumnMap cols;
  cols.user = 0;
  cols.poi = 1;
  cols.category = 2;
  cols.lat = 4;
  cols.lon = 5;
  cols.tz_offset = 6;
  cols.time = 7;
  cols.time_format = "foursquare";
  const auto rows = dataio::ingest(path, cols, nullptr);
  const auto filtered = dataio::filter_and_index(rows, 5);
  check(filtered.vocab.users.size() == 1047,
        "users " + std::to_string(filtered.vocab.users.size()));
  check(filtered.vocab.pois.size() == 4980,
        "pois " + std::to_string(filtered.vocab.pois.size()));
  check(filtered.vocab.categories.size() == 318,
        "categories " + std::to_string(filtered.vocab.categories.size()));
  res.detail = std::to_string(filtered.vocab.users.size()) + " users / " +
               std::to_string(filtered.vocab.pois.size()) + " pois / " +
               std::to_string(filtered.vocab.categories.size()) + " categories";
  return res;
}

// ---------------------------------------------------------------------------
// 11. Metric correctness on rank fixtures.
Result criterion_metrics() {
  Result res;
  Check check{&res};
  {
    const auto rep = predictor::rank_metrics({1});
    check(rep.ndcg[0] == 1.0 && rep.ndcg[1] == 1.0 && rep.ndcg[2] == 1.0, "rank 1 ndcg");
    check(rep.mrr == 1.0, "rank 1 mrr");
  }
  {
    const auto rep = predictor::rank_metrics({3});
    check(std::abs(rep.ndcg[1] - 0.5) < 1e-12, "rank 3 ndcg@5 " + fmt(rep.ndcg[1]));
    check(rep.ndcg[0] == 0.0, "rank 3 ndcg@1");
    check(std::abs(rep.ndcg[2] - 0.5) < 1e-12, "rank 3 ndcg@10");
  }
  {
    const auto rep = predictor::rank_metrics({1, 2, 4});
    check(std::abs(rep.mrr - 7.0 / 12.0) < 1e-9, "mrr({1,2,4}) " + fmt(rep.mrr));
    const double expect5 = (1.0 + 1.0 / std::log2(3.0) + 1.0 / std::log2(5.0)) / 3.0;
    check(std::abs(rep.ndcg[1] - expect5) < 1e-12, "ndcg@5({1,2,4})");
    check(std::abs(rep.acc[0] - 1.0 / 3.0) < 1e-12, "acc@1({1,2,4})");
  }
  res.detail = "rank fixtures {1}, {3}, {1,2,4} reproduce the closed forms";
  return res;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    double budget_s;  // 0 = no budget
    std::function<Result()> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "manifold suite (roundtrip, invariants, rotation isometry)", 10.0,
       criterion_manifold},
      {2, "Mobius identity laws and the 1-D scalar case", 0.0, criterion_mobius},
      {3, "ZOH discretization reference values and series switch", 0.0, criterion_discretize},
      {4, "scan against an extended-precision unrolled oracle", 0.0, criterion_scan_oracle},
      {5, "full-model gradients vs central finite differences", 60.0, criterion_gradients},
      {6, "hierarchy property on the synthetic category tree", 60.0, criterion_hierarchy},
      {7, "overfit sanity on a repeated 5-POI loop", 120.0, criterion_overfit},
      {8, "adaptive step sizes across switching regimes", 0.0, criterion_adaptive_step},
      {9, "linear-time scan (L = 2048 vs 1024)", 0.0, criterion_linear_time},
      {10, "NYC preprocessing fidelity", 0.0, criterion_nyc},
      {11, "ranking metric fixtures", 0.0, criterion_metrics},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Result r;
    try {
      r = c.fn();
    } catch (const std::exception& e) {
      r.outcome = Outcome::kFail;
      r.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r.outcome == Outcome::kPass && c.budget_s > 0.0 && secs > c.budget_s) {
      r.outcome = Outcome::kFail;
      r.detail = "runtime " + fmt(secs) + "s over budget " + fmt(c.budget_s) + "s";
    }
    const char* tag = r.outcome == Outcome::kPass   ? "PASS"
                      : r.outcome == Outcome::kSkip ? "SKIP"
                                                    : "FAIL";
    if (r.outcome == Outcome::kFail) ++failures;
    std::printf("%s  criterion %2d (%5.1fs): %s -- %s\n", tag, c.id, secs, c.title,
                r.detail.c_str());
    std::fflush(stdout);
  }
  if (failures > 0) {
    std::printf("%d criterion(s) FAILED\n", failures);
    return 1;
  }
  std::printf("all criteria passed (skips excluded)\n");
  return 0;
}
