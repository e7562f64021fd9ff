// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over a recorded operation graph.
//
// Values are dense matrices; a node's backward rule accumulates into its
// parents' adjoints. Parameter leaves accumulate directly into an external
// GradStore, so one tape per forward pass composes with batch-level
// parallelism (one tape and one GradStore per worker).
//
// Hyperboloid points are represented on the tape by their spatial
// coordinates only; the time coordinate is a derived quantity
// sqrt(c + |x|^2) wherever a rule needs it. This keeps every rule smooth
// (the log map reduces to asinh) and keeps points exactly on-manifold.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gtr/linalg.hpp"
#include "gtr/params.hpp"

namespace gtr {

class Tape {
 public:
  using Id = int;

  Tape(ParamStore& params, GradStore& grads) : params_(&params), grads_(&grads) {}

  // ---- leaves ----
  Id constant(Matrix v);
  Id scalar(double v);
  Id param(int tensor_idx);
  Id gather(int tensor_idx, std::vector<int> rows);

  // ---- elementwise / broadcast ----
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id affc(Id a, double k, double c);  // k*x + c
  Id scale(Id a, double k) { return affc(a, k, 0.0); }
  Id scalar_mul(Id a, Id s);          // s is 1x1
  Id rmul(Id x, Id r);                // x[L,d] * row r[1,d]
  Id radd(Id x, Id r);                // x[L,d] + row r[1,d]
  Id cmul(Id x, Id c);                // x[L,d] * col c[L,1]
  Id cdiv(Id x, Id c);                // x[L,d] / col c[L,1]

  // ---- unary ----
  Id exp_(Id a);
  Id sigmoid_(Id a);
  Id softplus_(Id a);
  Id relu_(Id a);
  Id sqrt_lo(Id a, double lo);  // sqrt(max(x, lo)); zero gradient where clamped

  // ---- structure ----
  Id matmul_nt(Id a, Id b);  // A[m,k] * B[n,k]^T -> [m,n]
  Id matmul_nn(Id a, Id b);  // A[m,k] * B[k,n] -> [m,n]
  Id affine(Id x, Id w, Id b) { return radd(matmul_nt(x, w), b); }
  Id concat_cols(Id a, Id b);
  Id slice_cols(Id a, int off, int len);
  Id slice_rows(Id a, int r0, int nr);
  Id concat_rows(const std::vector<Id>& parts);
  Id transpose_vec(Id a);  // [n,1] <-> [1,n]
  Id outer(Id col, Id row);

  // ---- reductions ----
  Id rows_dot(Id a, Id b);   // [L,1]
  Id rows_sqnorm(Id a);      // [L,1]
  Id wsum(Id x, std::vector<double> w);  // x[L,1], weights per row -> 1x1
  Id sum(Id x);              // all elements -> 1x1

  // ---- attention / loss ----
  Id softmax_causal(Id scores);  // [L,L], row i normalized over j <= i
  // Mean over rows with valid[i] != 0 of -log softmax(logits[i])[label[i]].
  Id softmax_xent(Id logits, const std::vector<int>& labels, const std::vector<std::uint8_t>& valid);

  // ---- manifold (spatial representation) ----
  Id exp_o_sp(Id v, double c = 1.0);
  Id log_o_sp(Id x, double c = 1.0);
  Id time_coord(Id x, double c = 1.0);  // [L,1] derived time coordinates
  Id block_rotate(Id x, Id angles);     // angles [1, floor(n/2)]

  // ZOH discretization of diag(a): (exp(dt*a)-1)/a with the series branch
  // below |dt*a| = 1e-4. `a` is the fixed per-channel state coefficient.
  Id discretize_b(Id dt, std::vector<double> a);

  // ---- execution ----
  const Matrix& val(Id id) const { return nodes_[id].val; }
  // Seeds d(root)/d(root) = seed and accumulates parameter gradients.
  void backward(Id root, double seed = 1.0);
  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Matrix val;
    Matrix adj;
    std::function<void(Tape&)> back;  // empty for leaves without parents
  };

  Id push(Matrix val, std::function<void(Tape&)> back);
  Matrix& adj(Id id) { return nodes_[id].adj; }

  ParamStore* params_;
  GradStore* grads_;
  std::vector<Node> nodes_;
};

// Mobius addition composed from tape primitives, on spatial rows.
Tape::Id tape_mobius_sp(Tape& t, Tape::Id xs, Tape::Id ys, double c = 1.0);

// Pairwise squared Lorentz distances: rows of `es` against rows of `ps`.
Tape::Id tape_sqdist_matrix(Tape& t, Tape::Id es, Tape::Id ps, double c = 1.0);

// Pairwise squared Euclidean distances (the flat-space ablation analogue).
Tape::Id tape_sqdist_matrix_euclidean(Tape& t, Tape::Id es, Tape::Id ps);

}  // namespace gtr
