// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "gtr/error.hpp"
#include "gtr/kernels.hpp"
#include "gtr/rng.hpp"

namespace gtr::model {

namespace {

const char* kEmbNames[4] = {"emb.user", "emb.poi", "emb.cat", "emb.reg"};
const char* kBiasNames[4] = {"bias.user", "bias.poi", "bias.cat", "bias.reg"};
const char* kRotNames[4] = {"rot.up", "rot.pp", "rot.cc", "rot.rr"};
const char* kDecWNames[3] = {"head.poi_w", "head.cat_w", "head.reg_w"};
const char* kDecBNames[3] = {"head.poi_b", "head.cat_b", "head.reg_b"};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Tangent coordinates of an on-manifold spatial row (asinh form of the log
// map; exact at the origin).
void log_sp_row(std::span<const double> x, double c, std::span<double> out) {
  const double sc = std::sqrt(c);
  const double s = std::sqrt(sqnorm(x));
  const double f = manifold::asinhc(s / sc);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f * x[i];
}

}  // namespace

int GtrModel::candidate_count(Task task) const {
  switch (task) {
    case Task::kPoi: return static_cast<int>(vocab.pois.size());
    case Task::kCat: return static_cast<int>(vocab.categories.size());
    case Task::kReg: return vocab.num_regions;
  }
  return 0;
}

void GtrModel::register_params(Rng& rng) {
  const int d = cfg.dim;
  const int ctx = ctx_dim();
  const int counts[4] = {static_cast<int>(vocab.users.size()),
                         static_cast<int>(vocab.pois.size()),
                         static_cast<int>(vocab.categories.size()), vocab.num_regions};

  auto glorot = [&rng](int rows, int cols) {
    Rng r = rng.fork(static_cast<std::uint64_t>(rows) * 131071 + cols);
    return Matrix::randn(rows, cols, r, 1.0 / std::sqrt(static_cast<double>(cols)));
  };

  for (int k = 0; k < 4; ++k) {
    Rng r = rng.fork(100 + k);
    params.add(kEmbNames[k], Matrix::randn(counts[k], d, r, cfg.init_std));
    params.add(kBiasNames[k], Matrix(counts[k], 1));
    params.add(kRotNames[k], Matrix(1, d / 2));
  }

  const int raw_geo = 2 * cfg.rff_scales * cfg.rff_freqs;
  params.add("geo.rff_w", glorot(cfg.d_geo, raw_geo));
  params.add("geo.rff_b", Matrix(1, cfg.d_geo));
  params.add("geo.rbf_w", glorot(cfg.d_geo, cfg.anchors));
  params.add("geo.rbf_b", Matrix(1, cfg.d_geo));
  params.add("geo.gate_w", glorot(2, 2 * cfg.d_geo));
  params.add("geo.gate_b", Matrix(1, 2));
  params.add("geo.out_w", glorot(cfg.d_geo, cfg.d_geo));
  params.add("geo.out_b", Matrix(1, cfg.d_geo));

  const int raw_time = 1 + 2 * cfg.time_freqs + 7 + 24;
  params.add("time.w", glorot(cfg.d_time, raw_time));
  params.add("time.b", Matrix(1, cfg.d_time));
  params.add("time.gate", Matrix(1, cfg.d_time));  // gamma starts at 1/2

  params.add("att.q_w", glorot(d, d));
  params.add("att.q_b", Matrix(1, d));
  params.add("att.k_w", glorot(d, ctx));
  params.add("att.k_b", Matrix(1, d));
  params.add("att.v_w", glorot(d, ctx));
  params.add("att.v_b", Matrix(1, d));
  params.add("att.o_w", glorot(d, d));
  params.add("att.o_b", Matrix(1, d));

  for (int layer = 0; layer < cfg.layers; ++layer) {
    const std::string p = "ssm" + std::to_string(layer) + ".";
    Rng r = rng.fork(500 + layer);
    params.add(p + "dt_weight", Matrix::randn(1, d, r, 0.5));
    params.add(p + "dt_bias", Matrix(1, d));
    params.add(p + "a_proj_w", glorot(d, ctx));
    params.add(p + "a_proj_b", Matrix(1, d));
    params.add(p + "b_proj_w", glorot(d, ctx));
    params.add(p + "b_proj_b", Matrix(1, d));
    params.add(p + "c_proj_w", glorot(d, ctx));
    params.add(p + "c_proj_b", Matrix(1, d));
    params.add(p + "anchor", Matrix(1, d));
    params.add(p + "out_w", glorot(d, d));
  }

  params.add("head.log_tau", Matrix(1, 1));
  params.add("head.alpha_raw", Matrix(1, 1));
  for (int k = 0; k < 3; ++k) {
    const int n = counts[k + 1];
    params.add(kDecWNames[k], glorot(n, d));
    params.add(kDecBNames[k], Matrix(1, n));
  }
}

void GtrModel::cache_ids() {
  auto idx = [this](const std::string& n) { return params.must_index(n); };
  for (int k = 0; k < 4; ++k) {
    ids_.emb[k] = idx(kEmbNames[k]);
    ids_.bias[k] = idx(kBiasNames[k]);
    ids_.rot[k] = idx(kRotNames[k]);
  }
  ids_.geo_rff_w = idx("geo.rff_w");
  ids_.geo_rff_b = idx("geo.rff_b");
  ids_.geo_rbf_w = idx("geo.rbf_w");
  ids_.geo_rbf_b = idx("geo.rbf_b");
  ids_.geo_gate_w = idx("geo.gate_w");
  ids_.geo_gate_b = idx("geo.gate_b");
  ids_.geo_out_w = idx("geo.out_w");
  ids_.geo_out_b = idx("geo.out_b");
  ids_.time_w = idx("time.w");
  ids_.time_b = idx("time.b");
  ids_.time_gate = idx("time.gate");
  ids_.att_q_w = idx("att.q_w");
  ids_.att_q_b = idx("att.q_b");
  ids_.att_k_w = idx("att.k_w");
  ids_.att_k_b = idx("att.k_b");
  ids_.att_v_w = idx("att.v_w");
  ids_.att_v_b = idx("att.v_b");
  ids_.att_o_w = idx("att.o_w");
  ids_.att_o_b = idx("att.o_b");
  ids_.ssm.clear();
  for (int layer = 0; layer < cfg.layers; ++layer) {
    const std::string p = "ssm" + std::to_string(layer) + ".";
    ids_.ssm.push_back(SsmIds{idx(p + "dt_weight"), idx(p + "dt_bias"), idx(p + "a_proj_w"),
                              idx(p + "a_proj_b"), idx(p + "b_proj_w"), idx(p + "b_proj_b"),
                              idx(p + "c_proj_w"), idx(p + "c_proj_b"), idx(p + "anchor"),
                              idx(p + "out_w")});
  }
  ids_.log_tau = idx("head.log_tau");
  ids_.alpha_raw = idx("head.alpha_raw");
  for (int k = 0; k < 3; ++k) {
    ids_.dec_w[k] = idx(kDecWNames[k]);
    ids_.dec_b[k] = idx(kDecBNames[k]);
  }
}

GtrModel GtrModel::build(const RunConfig& cfg, const dataio::Vocab& vocab,
                         const std::vector<dataio::Trajectory>& anchor_fit) {
  cfg.validate();
  if (vocab.num_regions < 1) throw ConfigError("model build: vocabulary has no regions");
  GtrModel m;
  m.cfg = cfg;
  m.vocab = vocab;

  Rng rng(cfg.seed);
  m.register_params(rng);
  m.cache_ids();

  m.geo_state = stchannel::init_geo_encoder(cfg.rff_scales, cfg.rff_freqs, cfg.seed);
  if (!cfg.ablate.stc) {
    std::vector<std::array<double, 3>> units;
    for (const dataio::Trajectory& t : anchor_fit) {
      for (const dataio::Step& s : t.steps)
        units.push_back(geo::sphere_map(s.lat, geo::wrap_lon(s.lon)));
    }
    if (units.empty())
      throw ConfigError("model build: no check-ins available to fit geographic anchors");
    Matrix pts(static_cast<int>(units.size()), 3);
    for (std::size_t i = 0; i < units.size(); ++i) {
      for (int j = 0; j < 3; ++j) pts.at(static_cast<int>(i), j) = units[i][j];
    }
    stchannel::fit_anchors(m.geo_state, pts, cfg.anchors, cfg.top_k, cfg.seed);
  } else {
    // Channel ablated: anchors are never queried, but keep the state valid.
    Matrix pts(1, 3);
    pts.at(0, 0) = 1.0;
    stchannel::fit_anchors(m.geo_state, pts, 1, 1, cfg.seed);
  }
  m.time_state = stchannel::init_time_encoder(cfg.time_freqs);
  return m;
}

void GtrModel::load_pretrained(const embeddings::EntityTables& t) {
  const Matrix* src_emb[4] = {&t.user, &t.poi, &t.cat, &t.reg};
  const Matrix* src_bias[4] = {&t.user_bias, &t.poi_bias, &t.cat_bias, &t.reg_bias};
  for (int k = 0; k < 4; ++k) {
    Matrix& dst = params[ids_.emb[k]].value;
    if (!dst.same_shape(*src_emb[k]))
      throw DataError(std::string("pretrained table shape mismatch for ") + kEmbNames[k]);
    dst = *src_emb[k];
    params[ids_.bias[k]].value = *src_bias[k];
    params[ids_.rot[k]].value = t.rotation[k];
  }
}

embeddings::EntityTables GtrModel::tables_view() const {
  embeddings::EntityTables t;
  t.curvature = cfg.curvature;
  t.user = params[ids_.emb[0]].value;
  t.poi = params[ids_.emb[1]].value;
  t.cat = params[ids_.emb[2]].value;
  t.reg = params[ids_.emb[3]].value;
  t.user_bias = params[ids_.bias[0]].value;
  t.poi_bias = params[ids_.bias[1]].value;
  t.cat_bias = params[ids_.bias[2]].value;
  t.reg_bias = params[ids_.bias[3]].value;
  for (int k = 0; k < 4; ++k) t.rotation[k] = params[ids_.rot[k]].value;
  return t;
}

Matrix GtrModel::fused_semantics(const dataio::Trajectory& traj) const {
  const int L = static_cast<int>(traj.steps.size());
  const int d = cfg.dim;
  const Matrix& user = params[ids_.emb[0]].value;
  const Matrix& poi = params[ids_.emb[1]].value;
  const Matrix& cat = params[ids_.emb[2]].value;
  const Matrix& reg = params[ids_.emb[3]].value;
  if (traj.user < 0 || traj.user >= user.rows)
    throw DataError("forward: user index out of range");
  Matrix vs(L, d);
  for (int t = 0; t < L; ++t) {
    const dataio::Step& s = traj.steps[t];
    if (s.poi < 0 || s.poi >= poi.rows || s.cat < 0 || s.cat >= cat.rows || s.reg < 0 ||
        s.reg >= reg.rows)
      throw DataError("forward: entity index out of range");
    axpy(cfg.fusion.alpha_u, user.row_span(traj.user), vs.row_span(t));
    axpy(cfg.fusion.alpha_p, poi.row_span(s.poi), vs.row_span(t));
    axpy(cfg.fusion.alpha_c, cat.row_span(s.cat), vs.row_span(t));
    axpy(cfg.fusion.alpha_r, reg.row_span(s.reg), vs.row_span(t));
  }
  return vs;
}

GtrModel::Context GtrModel::context_channel(const dataio::Trajectory& traj) const {
  const int L = static_cast<int>(traj.steps.size());
  Context ctx;
  if (cfg.ablate.stc) {
    ctx.u_c = Matrix(L, ctx_dim());
    ctx.gamma.assign(L, 1.0);
    return ctx;
  }
  std::vector<std::pair<double, double>> pts;
  std::vector<std::int64_t> ts;
  pts.reserve(L);
  ts.reserve(L);
  for (const dataio::Step& s : traj.steps) {
    pts.emplace_back(s.lat, s.lon);
    ts.push_back(s.ts);
  }
  const stchannel::GeoWeights gw{
      &params[ids_.geo_rff_w].value, &params[ids_.geo_rff_b].value,
      &params[ids_.geo_rbf_w].value, &params[ids_.geo_rbf_b].value,
      &params[ids_.geo_gate_w].value, &params[ids_.geo_gate_b].value,
      &params[ids_.geo_out_w].value, &params[ids_.geo_out_b].value};
  const Matrix eg = stchannel::encode_geo(pts, geo_state, gw);
  const stchannel::TimeWeights tw{&params[ids_.time_w].value, &params[ids_.time_b].value,
                                  &params[ids_.time_gate].value};
  const stchannel::TimeEncoding enc = stchannel::encode_time(ts, time_state, tw);
  ctx.u_c = Matrix(L, ctx_dim());
  for (int i = 0; i < L; ++i) {
    std::copy(eg.row(i), eg.row(i) + cfg.d_geo, ctx.u_c.row(i));
    std::copy(enc.features.row(i), enc.features.row(i) + cfg.d_time,
              ctx.u_c.row(i) + cfg.d_geo);
  }
  ctx.gamma = enc.gamma;
  return ctx;
}

gtr_ssm::SsmLayerWeights GtrModel::layer_weights(int layer) const {
  const SsmIds& s = ids_.ssm[layer];
  return gtr_ssm::SsmLayerWeights{
      &params[s.dt_weight].value, &params[s.dt_bias].value, &params[s.a_proj_w].value,
      &params[s.a_proj_b].value,  &params[s.b_proj_w].value, &params[s.b_proj_b].value,
      &params[s.c_proj_w].value,  &params[s.c_proj_b].value, &params[s.anchor].value,
      &params[s.out_w].value};
}

Forward GtrModel::forward_plain(const dataio::Trajectory& traj) const {
  const int L = static_cast<int>(traj.steps.size());
  if (L < 1) throw DataError("forward: empty trajectory");
  const int d = cfg.dim;
  const bool hyp = !cfg.ablate.hyperbolic;
  const double c = cfg.curvature;

  const Matrix vs = fused_semantics(traj);
  const Context ctx = context_channel(traj);

  // Cross-manifold attention (or the identity fusion when ablated).
  Matrix q_sp(L, d);
  if (cfg.ablate.attention) {
    if (hyp) {
      q_sp = kernels::exp_o_rows(vs, c);
    } else {
      q_sp = vs;
    }
  } else if (hyp) {
    std::vector<manifold::TangentVector> tangents;
    tangents.reserve(L);
    for (int i = 0; i < L; ++i)
      tangents.emplace_back(std::vector<double>(vs.row(i), vs.row(i) + d));
    const stchannel::AttentionWeights aw{
        cfg.heads,
        &params[ids_.att_q_w].value, &params[ids_.att_q_b].value,
        &params[ids_.att_k_w].value, &params[ids_.att_k_b].value,
        &params[ids_.att_v_w].value, &params[ids_.att_v_b].value,
        &params[ids_.att_o_w].value, &params[ids_.att_o_b].value};
    const auto pts = stchannel::cross_manifold_attention(tangents, ctx.u_c, aw, c);
    for (int i = 0; i < L; ++i)
      std::copy(pts[i].coords.begin() + 1, pts[i].coords.end(), q_sp.row(i));
  } else {
    auto affine = [](const Matrix& x, const Matrix& w, const Matrix& b) {
      Matrix y(x.rows, w.rows);
      for (int i = 0; i < x.rows; ++i) {
        for (int r = 0; r < w.rows; ++r) y.at(i, r) = dot(x.row_span(i), w.row_span(r)) + b.a[r];
      }
      return y;
    };
    const Matrix q = affine(vs, params[ids_.att_q_w].value, params[ids_.att_q_b].value);
    const Matrix k = affine(ctx.u_c, params[ids_.att_k_w].value, params[ids_.att_k_b].value);
    const Matrix v = affine(ctx.u_c, params[ids_.att_v_w].value, params[ids_.att_v_b].value);
    const Matrix att = stchannel::causal_multihead_attention(q, k, v, cfg.heads);
    const Matrix proj = affine(att, params[ids_.att_o_w].value, params[ids_.att_o_b].value);
    for (int i = 0; i < L; ++i) {
      for (int j = 0; j < d; ++j) q_sp.at(i, j) = vs.at(i, j) + proj.at(i, j);
    }
  }

  Forward fwd;
  fwd.gamma = cfg.ablate.context ? std::vector<double>(L, 1.0) : ctx.gamma;
  const Matrix u_ssm = cfg.ablate.context ? Matrix(L, ctx_dim()) : ctx.u_c;

  if (cfg.ablate.ssm) {
    fwd.e_sp = q_sp;
  } else if (hyp) {
    std::vector<manifold::LorentzPoint> q_pts;
    q_pts.reserve(L);
    for (int i = 0; i < L; ++i) q_pts.push_back(manifold::project_spatial(q_sp.row_span(i), c));
    std::vector<gtr_ssm::SsmLayerWeights> layers;
    for (int layer = 0; layer < cfg.layers; ++layer) layers.push_back(layer_weights(layer));
    const gtr_ssm::ScanResult res = gtr_ssm::stack(layers, q_pts, u_ssm, fwd.gamma, c);
    fwd.e_sp = Matrix(L, d);
    for (int i = 0; i < L; ++i)
      std::copy(res.outputs[i].coords.begin() + 1, res.outputs[i].coords.end(), fwd.e_sp.row(i));
    fwd.dt = res.dt;
  } else {
    // Flat-space scan: the same recurrence with identity maps and vector
    // addition in place of the manifold operations.
    Matrix x = q_sp;
    const std::vector<double> a = gtr_ssm::a_diag(d);
    for (int layer = 0; layer < cfg.layers; ++layer) {
      const gtr_ssm::SsmLayerWeights w = layer_weights(layer);
      Matrix out(L, d);
      Matrix dts(L, d);
      std::vector<double> h(d, 0.0);
      std::vector<double> h_prev(w.anchor->a);
      for (int t = 0; t < L; ++t) {
        const auto dt = gtr_ssm::step_size(u_ssm.row_span(t), fwd.gamma[t], w, d);
        const auto disc = gtr_ssm::discretize(dt, a);
        const auto bmod = gtr_ssm::modulate_input(disc.b_bar, u_ssm.row_span(t), w, d);
        for (int i = 0; i < d; ++i) {
          h[i] = disc.a_bar[i] * h[i] + bmod[i] * x.at(t, i);
          dts.at(t, i) = dt[i];
        }
        std::vector<double> re(d);
        for (int i = 0; i < d; ++i) re[i] = h[i] + w.anchor->a[i];
        for (int i = 0; i < d; ++i)
          out.at(t, i) = h_prev[i] + dot(w.out_w->row_span(i), re);
        h_prev = re;
      }
      x = out;
      fwd.dt = dts;
    }
    fwd.e_sp = x;
  }

  fwd.e_time.resize(L);
  for (int i = 0; i < L; ++i)
    fwd.e_time[i] = hyp ? std::sqrt(c + sqnorm(fwd.e_sp.row_span(i))) : 1.0;
  return fwd;
}

GtrModel::Candidates GtrModel::candidates(Task task) const {
  const Matrix& table = params[ids_.emb[static_cast<int>(task) + 1]].value;
  Candidates out;
  if (cfg.ablate.hyperbolic) {
    out.sp = table;
    out.t0.assign(table.rows, 1.0);
    return out;
  }
  out.sp = kernels::exp_o_rows(table, cfg.curvature);
  out.t0.resize(table.rows);
  for (int i = 0; i < table.rows; ++i)
    out.t0[i] = std::sqrt(cfg.curvature + sqnorm(out.sp.row_span(i)));
  return out;
}

std::vector<double> GtrModel::scores(std::span<const double> e_sp, double e_time,
                                     const Candidates& cands, Task task) const {
  const double tau = std::exp(params[ids_.log_tau].value.a[0]);
  const double alpha = sigmoid(params[ids_.alpha_raw].value.a[0]);
  const Matrix& dec_w = params[ids_.dec_w[static_cast<int>(task)]].value;
  const Matrix& dec_b = params[ids_.dec_b[static_cast<int>(task)]].value;
  const int K = cands.sp.rows;
  const int d = cfg.dim;

  std::vector<double> s_hyp(K);
  if (cfg.ablate.hyperbolic) {
    kernels::parallel_for(K, [&](int j) {
      double d2 = 0.0;
      for (int x = 0; x < d; ++x) {
        const double diff = e_sp[x] - cands.sp.at(j, x);
        d2 += diff * diff;
      }
      s_hyp[j] = -std::sqrt(d2) / tau;
    });
  } else {
    const std::vector<double> d2 =
        kernels::sqdist_row(e_sp, e_time, cands.sp, cands.t0, cfg.curvature);
    for (int j = 0; j < K; ++j) s_hyp[j] = -std::sqrt(std::max(d2[j], 0.0)) / tau;
  }

  std::vector<double> tangent(d);
  if (cfg.ablate.hyperbolic) {
    std::copy(e_sp.begin(), e_sp.end(), tangent.begin());
  } else {
    log_sp_row(e_sp, cfg.curvature, tangent);
  }
  std::vector<double> mixed(K);
  kernels::parallel_for(K, [&](int j) {
    const double s_tan = dot(dec_w.row_span(j), tangent) + dec_b.a[j];
    mixed[j] = alpha * s_tan + (1.0 - alpha) * s_hyp[j];
  });
  return mixed;
}

Tape::Id GtrModel::loss_tape(Tape& t, const dataio::Trajectory& traj) const {
  const int L = static_cast<int>(traj.steps.size());
  if (L < 2) throw DataError("loss: trajectory needs at least 2 steps");
  const int d = cfg.dim;
  const bool hyp = !cfg.ablate.hyperbolic;
  const double c = cfg.curvature;

  // Fused tangent semantics.
  std::vector<int> poi_rows(L), cat_rows(L), reg_rows(L);
  for (int i = 0; i < L; ++i) {
    poi_rows[i] = traj.steps[i].poi;
    cat_rows[i] = traj.steps[i].cat;
    reg_rows[i] = traj.steps[i].reg;
  }
  Tape::Id vs = t.add(t.add(t.scale(t.gather(ids_.emb[1], poi_rows), cfg.fusion.alpha_p),
                            t.scale(t.gather(ids_.emb[2], cat_rows), cfg.fusion.alpha_c)),
                      t.scale(t.gather(ids_.emb[3], reg_rows), cfg.fusion.alpha_r));
  vs = t.radd(vs, t.scale(t.gather(ids_.emb[0], {traj.user}), cfg.fusion.alpha_u));

  // Spatio-temporal channel.
  Tape::Id u_c;
  Tape::Id gamma_col;
  if (cfg.ablate.stc) {
    u_c = t.constant(Matrix(L, ctx_dim()));
    Matrix ones(L, 1);
    ones.fill(1.0);
    gamma_col = t.constant(std::move(ones));
  } else {
    std::vector<std::pair<double, double>> pts;
    std::vector<std::int64_t> ts;
    for (const dataio::Step& s : traj.steps) {
      pts.emplace_back(s.lat, s.lon);
      ts.push_back(s.ts);
    }
    const Tape::Id rffp = t.affine(t.constant(stchannel::rff_raw(geo_state, pts)),
                                   t.param(ids_.geo_rff_w), t.param(ids_.geo_rff_b));
    const Tape::Id rbfp = t.affine(t.constant(stchannel::rbf_raw(geo_state, pts)),
                                   t.param(ids_.geo_rbf_w), t.param(ids_.geo_rbf_b));
    const Tape::Id gate = t.affine(t.concat_cols(rffp, rbfp), t.param(ids_.geo_gate_w),
                                   t.param(ids_.geo_gate_b));
    // Two-way softmax as a sigmoid of the logit difference.
    const Tape::Id w1 = t.sigmoid_(t.sub(t.slice_cols(gate, 0, 1), t.slice_cols(gate, 1, 1)));
    const Tape::Id fused = t.add(t.cmul(rffp, w1), t.cmul(rbfp, t.affc(w1, -1.0, 1.0)));
    const Tape::Id eg = t.affine(fused, t.param(ids_.geo_out_w), t.param(ids_.geo_out_b));
    const Tape::Id et = t.affine(t.constant(stchannel::time_raw(time_state, ts)),
                                 t.param(ids_.time_w), t.param(ids_.time_b));
    gamma_col = t.sigmoid_(t.matmul_nt(et, t.param(ids_.time_gate)));
    u_c = t.concat_cols(eg, et);
  }

  // Cross-manifold attention.
  Tape::Id q_sp;
  if (cfg.ablate.attention) {
    q_sp = hyp ? t.exp_o_sp(vs, c) : vs;
  } else {
    const Tape::Id q = t.affine(vs, t.param(ids_.att_q_w), t.param(ids_.att_q_b));
    const Tape::Id k = t.affine(u_c, t.param(ids_.att_k_w), t.param(ids_.att_k_b));
    const Tape::Id v = t.affine(u_c, t.param(ids_.att_v_w), t.param(ids_.att_v_b));
    const int dh = d / cfg.heads;
    Tape::Id att = -1;
    for (int h = 0; h < cfg.heads; ++h) {
      const Tape::Id qh = t.slice_cols(q, h * dh, dh);
      const Tape::Id kh = t.slice_cols(k, h * dh, dh);
      const Tape::Id vh = t.slice_cols(v, h * dh, dh);
      const Tape::Id probs = t.softmax_causal(
          t.scale(t.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh))));
      const Tape::Id oh = t.matmul_nn(probs, vh);
      att = (h == 0) ? oh : t.concat_cols(att, oh);
    }
    const Tape::Id proj = t.affine(att, t.param(ids_.att_o_w), t.param(ids_.att_o_b));
    q_sp = hyp ? tape_mobius_sp(t, t.exp_o_sp(vs, c), t.exp_o_sp(proj, c), c) : t.add(vs, proj);
  }

  // Selective SSM stack.
  Tape::Id e_sp = q_sp;
  if (!cfg.ablate.ssm) {
    Tape::Id u_ssm = u_c;
    Tape::Id gamma_ssm = gamma_col;
    if (cfg.ablate.context) {
      u_ssm = t.constant(Matrix(L, ctx_dim()));
      Matrix ones(L, 1);
      ones.fill(1.0);
      gamma_ssm = t.constant(std::move(ones));
    }
    const std::vector<double> a = gtr_ssm::a_diag(d);
    Matrix a_row(1, d, std::vector<double>(a));
    const Tape::Id a_const = t.constant(std::move(a_row));

    Tape::Id logq = hyp ? t.log_o_sp(e_sp, c) : e_sp;
    for (int layer = 0; layer < cfg.layers; ++layer) {
      const SsmIds& s = ids_.ssm[layer];
      const Tape::Id aproj = t.affine(u_ssm, t.param(s.a_proj_w), t.param(s.a_proj_b));
      const Tape::Id dt = t.cmul(
          t.softplus_(t.radd(t.rmul(aproj, t.param(s.dt_weight)), t.param(s.dt_bias))),
          gamma_ssm);
      const Tape::Id abar = t.exp_(t.rmul(dt, a_const));
      const Tape::Id bbar = t.discretize_b(dt, a);
      const Tape::Id bmod =
          t.mul(t.mul(bbar, t.affine(u_ssm, t.param(s.b_proj_w), t.param(s.b_proj_b))),
                t.sigmoid_(t.affine(u_ssm, t.param(s.c_proj_w), t.param(s.c_proj_b))));

      const Tape::Id anchor = t.param(s.anchor);
      const Tape::Id anchor_sp = hyp ? t.exp_o_sp(anchor, c) : anchor;
      const Tape::Id out_w = t.param(s.out_w);

      Tape::Id h = t.constant(Matrix(1, d));
      Tape::Id h_proj = hyp ? tape_mobius_sp(t, t.exp_o_sp(t.constant(Matrix(1, d)), c),
                                             anchor_sp, c)
                            : t.add(t.constant(Matrix(1, d)), anchor);
      std::vector<Tape::Id> outs;
      outs.reserve(L);
      for (int step = 0; step < L; ++step) {
        h = t.add(t.mul(t.slice_rows(abar, step, 1), h),
                  t.mul(t.slice_rows(bmod, step, 1), t.slice_rows(logq, step, 1)));
        const Tape::Id re_proj =
            hyp ? tape_mobius_sp(t, t.exp_o_sp(h, c), anchor_sp, c) : t.add(h, anchor);
        const Tape::Id lin = t.matmul_nt(re_proj, out_w);
        outs.push_back(hyp ? tape_mobius_sp(t, h_proj, lin, c) : t.add(h_proj, lin));
        h_proj = re_proj;
      }
      e_sp = t.concat_rows(outs);
      if (layer + 1 < cfg.layers) logq = hyp ? t.log_o_sp(e_sp, c) : e_sp;
    }
  }

  // Dual-pathway head with teacher-forced per-step supervision.
  const Tape::Id inv_tau = t.exp_(t.scale(t.param(ids_.log_tau), -1.0));
  const Tape::Id alpha = t.sigmoid_(t.param(ids_.alpha_raw));
  const Tape::Id one_m_alpha = t.affc(alpha, -1.0, 1.0);
  const Tape::Id log_e = hyp ? t.log_o_sp(e_sp, c) : e_sp;

  std::vector<std::uint8_t> valid(L, 1);
  valid[L - 1] = 0;  // the final step has no next-item target

  const double weights[3] = {cfg.w_poi, cfg.w_cat, cfg.w_reg};
  Tape::Id total = t.scalar(0.0);
  for (int task = 0; task < 3; ++task) {
    const Tape::Id table = t.param(ids_.emb[task + 1]);
    const Tape::Id cand_sp = hyp ? t.exp_o_sp(table, c) : table;
    const Tape::Id d2 =
        hyp ? tape_sqdist_matrix(t, e_sp, cand_sp, c) : tape_sqdist_matrix_euclidean(t, e_sp, cand_sp);
    const Tape::Id s_hyp =
        t.scalar_mul(t.scale(t.sqrt_lo(d2, 1e-12), -1.0), inv_tau);
    const Tape::Id s_tan = t.affine(log_e, t.param(ids_.dec_w[task]), t.param(ids_.dec_b[task]));
    const Tape::Id mixed = t.add(t.scalar_mul(s_tan, alpha), t.scalar_mul(s_hyp, one_m_alpha));

    std::vector<int> labels(L, 0);
    for (int step = 0; step + 1 < L; ++step) {
      const dataio::Step& nxt = traj.steps[step + 1];
      labels[step] = (task == 0) ? nxt.poi : (task == 1) ? nxt.cat : nxt.reg;
    }
    total = t.add(total, t.scale(t.softmax_xent(mixed, labels, valid), weights[task]));
  }
  return total;
}

// ---- checkpoint serialization ----

namespace {

constexpr char kCkptMagic[8] = {'G', 'T', 'R', 'C', 'K', 'P', 'T', '1'};

void put_i32(std::ofstream& out, std::int32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_i64(std::ofstream& out, std::int64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_f64(std::ofstream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_str(std::ofstream& out, const std::string& s) {
  put_i32(out, static_cast<std::int32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void put_mat(std::ofstream& out, const Matrix& m) {
  put_i32(out, m.rows);
  put_i32(out, m.cols);
  out.write(reinterpret_cast<const char*>(m.a.data()),
            static_cast<std::streamsize>(m.a.size() * sizeof(double)));
}

std::int32_t get_i32(std::ifstream& in) {
  std::int32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw DataError("truncated checkpoint");
  return v;
}
std::int64_t get_i64(std::ifstream& in) {
  std::int64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw DataError("truncated checkpoint");
  return v;
}
double get_f64(std::ifstream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw DataError("truncated checkpoint");
  return v;
}
std::string get_str(std::ifstream& in) {
  const std::int32_t n = get_i32(in);
  if (n < 0 || n > (1 << 28)) throw DataError("corrupt checkpoint string");
  std::string s(static_cast<std::size_t>(n), '\0');
  in.read(s.data(), n);
  if (!in) throw DataError("truncated checkpoint");
  return s;
}
Matrix get_mat(std::ifstream& in) {
  const std::int32_t r = get_i32(in);
  const std::int32_t c = get_i32(in);
  if (r < 0 || c < 0) throw DataError("corrupt checkpoint matrix");
  Matrix m(r, c);
  in.read(reinterpret_cast<char*>(m.a.data()),
          static_cast<std::streamsize>(m.a.size() * sizeof(double)));
  if (!in) throw DataError("truncated checkpoint");
  return m;
}

}  // namespace

void GtrModel::save_checkpoint(const std::string& path, const Adam* opt, int epoch_next,
                               double best_val_mrr) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kCkptMagic, sizeof(kCkptMagic));
  put_i64(out, static_cast<std::int64_t>(cfg.seed));
  put_str(out, config_echo(cfg));

  // Vocabulary.
  put_i32(out, static_cast<std::int32_t>(vocab.users.size()));
  for (const auto& s : vocab.users) put_str(out, s);
  put_i32(out, static_cast<std::int32_t>(vocab.pois.size()));
  for (std::size_t i = 0; i < vocab.pois.size(); ++i) {
    put_str(out, vocab.pois[i]);
    put_i32(out, vocab.poi_category[i]);
    put_i32(out, vocab.poi_region.empty() ? 0 : vocab.poi_region[i]);
    put_f64(out, vocab.poi_lat[i]);
    put_f64(out, vocab.poi_lon[i]);
  }
  put_i32(out, static_cast<std::int32_t>(vocab.categories.size()));
  for (const auto& s : vocab.categories) put_str(out, s);
  put_i32(out, vocab.num_regions);

  // Encoder states.
  put_i32(out, static_cast<std::int32_t>(geo_state.freqs.size()));
  for (const Matrix& m : geo_state.freqs) put_mat(out, m);
  put_mat(out, geo_state.anchors);
  put_f64(out, geo_state.sigma);
  put_i32(out, geo_state.top_k);
  put_i32(out, geo_state.fitted ? 1 : 0);
  put_i32(out, static_cast<std::int32_t>(time_state.omega.size()));
  for (double w : time_state.omega) put_f64(out, w);
  put_f64(out, time_state.clip_hours);

  // Parameters.
  put_i32(out, params.size());
  for (int i = 0; i < params.size(); ++i) {
    put_str(out, params[i].name);
    put_mat(out, params[i].value);
  }

  // Optional training state for resumption.
  put_i32(out, opt ? 1 : 0);
  if (opt) {
    put_f64(out, opt->lr);
    put_f64(out, opt->beta1);
    put_f64(out, opt->beta2);
    put_f64(out, opt->eps);
    put_i64(out, opt->t);
    put_i32(out, static_cast<std::int32_t>(opt->m.size()));
    for (const Matrix& m : opt->m) put_mat(out, m);
    for (const Matrix& v : opt->v) put_mat(out, v);
    put_i32(out, epoch_next);
    put_f64(out, best_val_mrr);
  }
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw DataError("not a checkpoint file: " + path);

  LoadedCheckpoint loaded;
  GtrModel& m = loaded.model;
  const std::int64_t seed = get_i64(in);
  m.cfg = parse_config_text(get_str(in));
  m.cfg.seed = static_cast<std::uint64_t>(seed);
  m.cfg.validate();

  dataio::Vocab& v = m.vocab;
  const std::int32_t users = get_i32(in);
  for (std::int32_t i = 0; i < users; ++i) {
    v.users.push_back(get_str(in));
    v.user_map.emplace(v.users.back(), i);
  }
  const std::int32_t pois = get_i32(in);
  for (std::int32_t i = 0; i < pois; ++i) {
    v.pois.push_back(get_str(in));
    v.poi_map.emplace(v.pois.back(), i);
    v.poi_category.push_back(get_i32(in));
    v.poi_region.push_back(get_i32(in));
    v.poi_lat.push_back(get_f64(in));
    v.poi_lon.push_back(get_f64(in));
  }
  const std::int32_t cats = get_i32(in);
  for (std::int32_t i = 0; i < cats; ++i) {
    v.categories.push_back(get_str(in));
    v.cat_map.emplace(v.categories.back(), i);
  }
  v.num_regions = get_i32(in);

  const std::int32_t scales = get_i32(in);
  for (std::int32_t i = 0; i < scales; ++i) m.geo_state.freqs.push_back(get_mat(in));
  m.geo_state.anchors = get_mat(in);
  m.geo_state.sigma = get_f64(in);
  m.geo_state.top_k = get_i32(in);
  m.geo_state.fitted = get_i32(in) != 0;
  const std::int32_t freqs = get_i32(in);
  for (std::int32_t i = 0; i < freqs; ++i) m.time_state.omega.push_back(get_f64(in));
  m.time_state.clip_hours = get_f64(in);

  const std::int32_t tensors = get_i32(in);
  for (std::int32_t i = 0; i < tensors; ++i) {
    const std::string name = get_str(in);
    m.params.add(name, get_mat(in));
  }
  m.cache_ids();

  if (get_i32(in) == 1) {
    loaded.has_train_state = true;
    loaded.opt.lr = get_f64(in);
    loaded.opt.beta1 = get_f64(in);
    loaded.opt.beta2 = get_f64(in);
    loaded.opt.eps = get_f64(in);
    loaded.opt.t = get_i64(in);
    const std::int32_t n = get_i32(in);
    for (std::int32_t i = 0; i < n; ++i) loaded.opt.m.push_back(get_mat(in));
    for (std::int32_t i = 0; i < n; ++i) loaded.opt.v.push_back(get_mat(in));
    loaded.epoch_next = get_i32(in);
    loaded.best_val_mrr = get_f64(in);
  }
  return loaded;
}

}  // namespace gtr::model
