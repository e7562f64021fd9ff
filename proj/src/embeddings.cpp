// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "gtr/error.hpp"
#include "gtr/params.hpp"
#include "gtr/rng.hpp"
#include "gtr/tape.hpp"

namespace gtr::embeddings {

namespace {
constexpr std::int64_t kTransitionWindow = 6 * 3600;  // seconds

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}
}  // namespace

const char* edge_type_name(EdgeType t) {
  switch (t) {
    case EdgeType::kUserPoi: return "up";
    case EdgeType::kPoiPoi: return "pp";
    case EdgeType::kCatCat: return "cc";
    case EdgeType::kRegReg: return "rr";
  }
  return "?";
}

EdgeSets build_edges(const std::vector<dataio::Trajectory>& trajectories) {
  std::array<std::map<std::pair<int, int>, int>, 4> acc;
  for (const dataio::Trajectory& t : trajectories) {
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      if (i > 0 && t.steps[i].ts < t.steps[i - 1].ts)
        throw DataError("build_edges: trajectory timestamps out of order");
      ++acc[static_cast<int>(EdgeType::kUserPoi)][{t.user, t.steps[i].poi}];
      if (i > 0 && t.steps[i].ts - t.steps[i - 1].ts <= kTransitionWindow) {
        const dataio::Step& a = t.steps[i - 1];
        const dataio::Step& b = t.steps[i];
        // Self-transitions carry no relational signal for the distance
        // score (they only pull a point toward its own rotation), so only
        // distinct pairs become edges.
        if (a.poi != b.poi) ++acc[static_cast<int>(EdgeType::kPoiPoi)][{a.poi, b.poi}];
        if (a.cat != b.cat) ++acc[static_cast<int>(EdgeType::kCatCat)][{a.cat, b.cat}];
        if (a.reg != b.reg) ++acc[static_cast<int>(EdgeType::kRegReg)][{a.reg, b.reg}];
      }
    }
  }
  EdgeSets out;
  for (EdgeType t : kEdgeTypes) {
    EdgeSet& set = out[t];
    set.type = t;
    for (const auto& [pair, mult] : acc[static_cast<int>(t)]) {
      set.pairs.push_back(pair);
      set.multiplicity.push_back(mult);
    }
  }
  return out;
}

const Matrix& EntityTables::table(EdgeType t, bool source) const {
  switch (t) {
    case EdgeType::kUserPoi: return source ? user : poi;
    case EdgeType::kPoiPoi: return poi;
    case EdgeType::kCatCat: return cat;
    case EdgeType::kRegReg: return reg;
  }
  return poi;
}

manifold::LorentzPoint EntityTables::materialize(const Matrix& tbl, int row) const {
  if (row < 0 || row >= tbl.rows) throw DataError("entity index out of range");
  std::vector<double> v(tbl.row(row), tbl.row(row) + tbl.cols);
  return manifold::exp_o(manifold::TangentVector(std::move(v)), curvature);
}

EntityTables init_tables(int users, int pois, int cats, int regs, int dim, double curvature,
                         std::uint64_t seed, double init_std) {
  Rng rng(seed);
  EntityTables t;
  t.curvature = curvature;
  Rng ru = rng.fork(1), rp = rng.fork(2), rc = rng.fork(3), rr = rng.fork(4);
  t.user = Matrix::randn(users, dim, ru, init_std);
  t.poi = Matrix::randn(pois, dim, rp, init_std);
  t.cat = Matrix::randn(cats, dim, rc, init_std);
  t.reg = Matrix::randn(regs, dim, rr, init_std);
  t.user_bias = Matrix(users, 1);
  t.poi_bias = Matrix(pois, 1);
  t.cat_bias = Matrix(cats, 1);
  t.reg_bias = Matrix(regs, 1);
  for (auto& r : t.rotation) r = Matrix(1, dim / 2);
  return t;
}

double score_edge(const manifold::LorentzPoint& src, const manifold::LorentzPoint& dst,
                  const manifold::RotationParams& rot, double b_src, double b_dst,
                  double curvature) {
  const manifold::LorentzPoint rotated = manifold::rotate(src, rot, curvature);
  const double d2 = manifold::sq_lorentz_dist(rotated, dst, curvature);
  return -std::max(d2, 0.0) + b_src + b_dst;
}

int sample_negative(std::uint64_t seed, int epoch, EdgeType type, std::size_t edge_index,
                    int draw, int count, int exclude) {
  if (count < 2)
    throw ConfigError(std::string("cannot sample a negative ") + edge_type_name(type) +
                      " target from an entity set of size " + std::to_string(count));
  Rng rng = Rng(seed)
                .fork(0x9e01 + static_cast<std::uint64_t>(epoch),
                      static_cast<std::uint64_t>(type) * 0x10001 + edge_index)
                .fork(static_cast<std::uint64_t>(draw));
  int v = static_cast<int>(rng.below(static_cast<std::uint64_t>(count)));
  while (v == exclude) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(count)));
  return v;
}

namespace {

struct TypeTables {
  const Matrix* src_tab;
  const Matrix* dst_tab;
  const Matrix* src_bias;
  const Matrix* dst_bias;
};

TypeTables tables_for(const EntityTables& t, EdgeType type) {
  switch (type) {
    case EdgeType::kUserPoi: return {&t.user, &t.poi, &t.user_bias, &t.poi_bias};
    case EdgeType::kPoiPoi: return {&t.poi, &t.poi, &t.poi_bias, &t.poi_bias};
    case EdgeType::kCatCat: return {&t.cat, &t.cat, &t.cat_bias, &t.cat_bias};
    case EdgeType::kRegReg: return {&t.reg, &t.reg, &t.reg_bias, &t.reg_bias};
  }
  return {nullptr, nullptr, nullptr, nullptr};
}

}  // namespace

double contrastive_loss(const EdgeSets& edges, const EntityTables& tables, int negatives,
                        std::uint64_t seed, int epoch) {
  if (negatives < 1) throw ConfigError("contrastive_loss: negatives_per_edge must be >= 1");
  double loss = 0.0;
  for (EdgeType type : kEdgeTypes) {
    const EdgeSet& set = edges[type];
    if (set.pairs.empty()) continue;
    const TypeTables tt = tables_for(tables, type);
    const manifold::RotationParams rot(
        std::vector<double>(tables.rotation[static_cast<int>(type)].a));
    for (std::size_t e = 0; e < set.pairs.size(); ++e) {
      const auto [si, di] = set.pairs[e];
      const double m = set.multiplicity[e];
      const manifold::LorentzPoint src = tables.materialize(*tt.src_tab, si);
      const manifold::LorentzPoint rotated = manifold::rotate(src, rot, tables.curvature);
      const manifold::LorentzPoint dst = tables.materialize(*tt.dst_tab, di);
      const double s_pos = -manifold::sq_lorentz_dist(rotated, dst, tables.curvature) +
                           tt.src_bias->a[si] + tt.dst_bias->a[di];
      loss += m * softplus(-s_pos);  // -log sigmoid(s_pos)
      for (int k = 0; k < negatives; ++k) {
        const int ni = sample_negative(seed, epoch, type, e, k, tt.dst_tab->rows, di);
        const manifold::LorentzPoint neg = tables.materialize(*tt.dst_tab, ni);
        const double s_neg = -manifold::sq_lorentz_dist(rotated, neg, tables.curvature) +
                             tt.src_bias->a[si] + tt.dst_bias->a[ni];
        loss += m * softplus(s_neg);  // -log sigmoid(-s_neg)
      }
    }
  }
  return loss;
}

PretrainParamIds register_pretrain_params(ParamStore& ps, const EntityTables& t) {
  PretrainParamIds ids{};
  ids.user = ps.add("emb.user", t.user);
  ids.poi = ps.add("emb.poi", t.poi);
  ids.cat = ps.add("emb.cat", t.cat);
  ids.reg = ps.add("emb.reg", t.reg);
  ids.user_bias = ps.add("bias.user", t.user_bias);
  ids.poi_bias = ps.add("bias.poi", t.poi_bias);
  ids.cat_bias = ps.add("bias.cat", t.cat_bias);
  ids.reg_bias = ps.add("bias.reg", t.reg_bias);
  for (int i = 0; i < 4; ++i)
    ids.rot[i] = ps.add(std::string("rot.") + edge_type_name(static_cast<EdgeType>(i)),
                        t.rotation[i]);
  return ids;
}

namespace {

struct TypeParamIds {
  int src_tab, dst_tab, src_bias, dst_bias, rot;
};

TypeParamIds param_ids_for(const PretrainParamIds& p, EdgeType type) {
  switch (type) {
    case EdgeType::kUserPoi:
      return {p.user, p.poi, p.user_bias, p.poi_bias, p.rot[0]};
    case EdgeType::kPoiPoi:
      return {p.poi, p.poi, p.poi_bias, p.poi_bias, p.rot[1]};
    case EdgeType::kCatCat:
      return {p.cat, p.cat, p.cat_bias, p.cat_bias, p.rot[2]};
    case EdgeType::kRegReg:
      return {p.reg, p.reg, p.reg_bias, p.reg_bias, p.rot[3]};
  }
  return {};
}

// Rowwise squared Lorentz distance between aligned on-manifold rows.
Tape::Id rowwise_sqdist(Tape& t, Tape::Id xs, Tape::Id ys, double c) {
  const Tape::Id prod = t.mul(t.time_coord(xs, c), t.time_coord(ys, c));
  return t.affc(t.add(t.scale(prod, 2.0), t.scale(t.rows_dot(xs, ys), -2.0)), 1.0, -2.0 * c);
}

// One edge type's contribution to the contrastive loss, batched over edges.
Tape::Id type_loss(Tape& t, const EdgeSet& set, const TypeParamIds& ids, int dst_count,
                   int negatives, std::uint64_t seed, int epoch, double c) {
  std::vector<int> src_rows, dst_rows;
  std::vector<double> weights;
  src_rows.reserve(set.pairs.size());
  dst_rows.reserve(set.pairs.size());
  for (std::size_t e = 0; e < set.pairs.size(); ++e) {
    src_rows.push_back(set.pairs[e].first);
    dst_rows.push_back(set.pairs[e].second);
    weights.push_back(static_cast<double>(set.multiplicity[e]));
  }
  const Tape::Id rot_src =
      t.exp_o_sp(t.block_rotate(t.gather(ids.src_tab, src_rows), t.param(ids.rot)), c);
  const Tape::Id b_src = t.gather(ids.src_bias, src_rows);

  auto edge_score = [&](const std::vector<int>& targets) {
    const Tape::Id dst = t.exp_o_sp(t.gather(ids.dst_tab, targets), c);
    const Tape::Id d2 = rowwise_sqdist(t, rot_src, dst, c);
    const Tape::Id b_dst = t.gather(ids.dst_bias, targets);
    return t.add(t.add(t.scale(t.relu_(d2), -1.0), b_src), b_dst);
  };

  Tape::Id loss = t.wsum(t.softplus_(t.scale(edge_score(dst_rows), -1.0)), weights);
  for (int k = 0; k < negatives; ++k) {
    std::vector<int> negs(set.pairs.size());
    for (std::size_t e = 0; e < set.pairs.size(); ++e)
      negs[e] = sample_negative(seed, epoch, set.type, e, k, dst_count, dst_rows[e]);
    loss = t.add(loss, t.wsum(t.softplus_(edge_score(negs)), weights));
  }
  return loss;
}

}  // namespace

Tape::Id contrastive_loss_tape(Tape& tape, const EdgeSets& edges, const PretrainParamIds& ids,
                               const ParamStore& ps, int negatives, std::uint64_t seed, int epoch,
                               double curvature) {
  if (negatives < 1) throw ConfigError("contrastive_loss: negatives_per_edge must be >= 1");
  Tape::Id loss = tape.scalar(0.0);
  for (EdgeType type : kEdgeTypes) {
    const EdgeSet& set = edges[type];
    if (set.pairs.empty()) continue;
    const TypeParamIds tp = param_ids_for(ids, type);
    loss = tape.add(loss, type_loss(tape, set, tp, ps[tp.dst_tab].value.rows, negatives, seed,
                                    epoch, curvature));
  }
  return loss;
}

PretrainResult pretrain(const std::vector<dataio::Trajectory>& trajectories, int users, int pois,
                        int cats, int regs, const PretrainConfig& cfg) {
  const EdgeSets edges = build_edges(trajectories);
  EntityTables init =
      init_tables(users, pois, cats, regs, cfg.dim, cfg.curvature, cfg.seed, cfg.init_std);

  ParamStore ps;
  const PretrainParamIds ids = register_pretrain_params(ps, init);
  Adam opt(ps, cfg.lr);
  GradStore grads(ps);

  PretrainResult res;
  res.epoch_loss.reserve(cfg.epochs);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    grads.zero();
    Tape tape(ps, grads);
    const Tape::Id loss =
        contrastive_loss_tape(tape, edges, ids, ps, cfg.negatives, cfg.seed, epoch, cfg.curvature);
    const double value = tape.val(loss).a[0];
    if (!std::isfinite(value))
      throw NumericError("pretraining loss diverged at epoch " + std::to_string(epoch));
    tape.backward(loss);
    opt.step(ps, grads, cfg.clip_norm);
    res.epoch_loss.push_back(value);
  }

  res.tables.curvature = cfg.curvature;
  res.tables.user = ps[ids.user].value;
  res.tables.poi = ps[ids.poi].value;
  res.tables.cat = ps[ids.cat].value;
  res.tables.reg = ps[ids.reg].value;
  res.tables.user_bias = ps[ids.user_bias].value;
  res.tables.poi_bias = ps[ids.poi_bias].value;
  res.tables.cat_bias = ps[ids.cat_bias].value;
  res.tables.reg_bias = ps[ids.reg_bias].value;
  for (int i = 0; i < 4; ++i) res.tables.rotation[i] = ps[ids.rot[i]].value;
  return res;
}

std::vector<manifold::TangentVector> fuse_semantics(const dataio::Trajectory& traj,
                                                    const EntityTables& tables,
                                                    const FusionWeights& w) {
  const int d = tables.dim();
  std::vector<manifold::TangentVector> out;
  out.reserve(traj.steps.size());
  auto row_of = [d](const Matrix& tab, int idx, const char* kind) {
    if (idx < 0 || idx >= tab.rows)
      throw DataError(std::string("fuse_semantics: unknown ") + kind + " index " +
                      std::to_string(idx));
    return tab.row_span(idx);
    (void)d;
  };
  for (const dataio::Step& s : traj.steps) {
    // log_o(exp_o(v)) = v: the stored tangent rows are already the log-mapped
    // embeddings, so the fusion is a weighted tangent sum.
    manifold::TangentVector v = manifold::TangentVector::zero(d);
    axpy(w.alpha_u, row_of(tables.user, traj.user, "user"), v.spatial);
    axpy(w.alpha_p, row_of(tables.poi, s.poi, "poi"), v.spatial);
    axpy(w.alpha_c, row_of(tables.cat, s.cat, "category"), v.spatial);
    axpy(w.alpha_r, row_of(tables.reg, s.reg, "region"), v.spatial);
    out.push_back(std::move(v));
  }
  return out;
}

double mean_poincare_radius(const Matrix& tangent_rows, double curvature) {
  double sum = 0.0;
  for (int i = 0; i < tangent_rows.rows; ++i) {
    std::vector<double> v(tangent_rows.row(i), tangent_rows.row(i) + tangent_rows.cols);
    const manifold::LorentzPoint p =
        manifold::exp_o(manifold::TangentVector(std::move(v)), curvature);
    sum += std::sqrt(sqnorm(manifold::lorentz_to_poincare(p, curvature)));
  }
  return tangent_rows.rows > 0 ? sum / tangent_rows.rows : 0.0;
}

namespace {

constexpr char kTablesMagic[8] = {'G', 'T', 'R', 'T', 'B', 'L', '0', '1'};

void write_matrix(std::ofstream& out, const Matrix& m) {
  const std::int32_t r = m.rows, c = m.cols;
  out.write(reinterpret_cast<const char*>(&r), sizeof(r));
  out.write(reinterpret_cast<const char*>(&c), sizeof(c));
  out.write(reinterpret_cast<const char*>(m.a.data()),
            static_cast<std::streamsize>(m.a.size() * sizeof(double)));
}

Matrix read_matrix(std::ifstream& in) {
  std::int32_t r = 0, c = 0;
  in.read(reinterpret_cast<char*>(&r), sizeof(r));
  in.read(reinterpret_cast<char*>(&c), sizeof(c));
  if (!in || r < 0 || c < 0) throw DataError("corrupt table file");
  Matrix m(r, c);
  in.read(reinterpret_cast<char*>(m.a.data()),
          static_cast<std::streamsize>(m.a.size() * sizeof(double)));
  if (!in) throw DataError("corrupt table file");
  return m;
}

void csv_table(std::ofstream& out, const char* kind, const Matrix& tab, const Matrix& bias) {
  char buf[64];
  for (int i = 0; i < tab.rows; ++i) {
    out << "row," << kind << ',' << i;
    std::snprintf(buf, sizeof(buf), ",%.17g", bias.a[i]);
    out << buf;
    for (int j = 0; j < tab.cols; ++j) {
      std::snprintf(buf, sizeof(buf), ",%.17g", tab.at(i, j));
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace

void save_tables(const EntityTables& t, const std::string& bin_path, const std::string& csv_path) {
  {
    std::ofstream out(bin_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + bin_path);
    out.write(kTablesMagic, sizeof(kTablesMagic));
    const std::int32_t dim = t.dim();
    out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    out.write(reinterpret_cast<const char*>(&t.curvature), sizeof(t.curvature));
    write_matrix(out, t.user);
    write_matrix(out, t.poi);
    write_matrix(out, t.cat);
    write_matrix(out, t.reg);
    write_matrix(out, t.user_bias);
    write_matrix(out, t.poi_bias);
    write_matrix(out, t.cat_bias);
    write_matrix(out, t.reg_bias);
    for (const Matrix& r : t.rotation) write_matrix(out, r);
  }
  {
    std::ofstream out(csv_path);
    if (!out) throw IoError("cannot write " + csv_path);
    char buf[64];
    out << "header,dim," << t.dim() << "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", t.curvature);
    out << "header,curvature," << buf << "\n";
    out << "header,counts," << t.user.rows << ',' << t.poi.rows << ',' << t.cat.rows << ','
        << t.reg.rows << "\n";
    csv_table(out, "user", t.user, t.user_bias);
    csv_table(out, "poi", t.poi, t.poi_bias);
    csv_table(out, "category", t.cat, t.cat_bias);
    csv_table(out, "region", t.reg, t.reg_bias);
    for (int i = 0; i < 4; ++i) {
      out << "rotation," << edge_type_name(static_cast<EdgeType>(i));
      for (double a : t.rotation[i].a) {
        std::snprintf(buf, sizeof(buf), ",%.17g", a);
        out << buf;
      }
      out << '\n';
    }
  }
}

EntityTables load_tables(const std::string& bin_path) {
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw IoError("cannot read " + bin_path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kTablesMagic))
    throw DataError("not a table file: " + bin_path);
  EntityTables t;
  std::int32_t dim = 0;
  in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
  in.read(reinterpret_cast<char*>(&t.curvature), sizeof(t.curvature));
  t.user = read_matrix(in);
  t.poi = read_matrix(in);
  t.cat = read_matrix(in);
  t.reg = read_matrix(in);
  t.user_bias = read_matrix(in);
  t.poi_bias = read_matrix(in);
  t.cat_bias = read_matrix(in);
  t.reg_bias = read_matrix(in);
  for (Matrix& r : t.rotation) r = read_matrix(in);
  if (t.user.cols != dim) throw DataError("table dimension mismatch in " + bin_path);
  return t;
}

}  // namespace gtr::embeddings
