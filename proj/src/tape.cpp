// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/tape.hpp"

#include <cmath>

#include "gtr/error.hpp"
#include "gtr/manifold.hpp"

namespace gtr {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) throw DimensionError(std::string(op) + ": shape mismatch");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// d/dz [sinh(z)/z] / z, series-safe at zero.
double dsinhc_over_z(double z) {
  if (std::abs(z) < 1e-4) {
    const double z2 = z * z;
    return 1.0 / 3.0 + z2 / 30.0;
  }
  return (z * std::cosh(z) - std::sinh(z)) / (z * z * z);
}

// d/dz [asinh(z)/z] / z, series-safe at zero.
double dasinhc_over_z(double z) {
  if (std::abs(z) < 1e-4) {
    const double z2 = z * z;
    return -1.0 / 3.0 + 0.3 * z2;
  }
  return (z / std::sqrt(1.0 + z * z) - std::asinh(z)) / (z * z * z);
}

}  // namespace

Tape::Id Tape::push(Matrix val, std::function<void(Tape&)> back) {
  Node n;
  n.adj = Matrix(val.rows, val.cols);
  n.val = std::move(val);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::constant(Matrix v) { return push(std::move(v), nullptr); }

Tape::Id Tape::scalar(double v) {
  Matrix m(1, 1);
  m.a[0] = v;
  return constant(std::move(m));
}

Tape::Id Tape::param(int tensor_idx) {
  Matrix v = (*params_)[tensor_idx].value;
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, tensor_idx](Tape& t) {
    Matrix& g = t.grads_->g[tensor_idx];
    const Matrix& a = t.adj(id);
    for (std::size_t i = 0; i < g.a.size(); ++i) g.a[i] += a.a[i];
  };
  return id;
}

Tape::Id Tape::gather(int tensor_idx, std::vector<int> rows) {
  const Matrix& src = (*params_)[tensor_idx].value;
  Matrix v(static_cast<int>(rows.size()), src.cols);
  for (int i = 0; i < v.rows; ++i) {
    if (rows[i] < 0 || rows[i] >= src.rows) throw DimensionError("gather: row out of range");
    std::copy(src.row(rows[i]), src.row(rows[i]) + src.cols, v.row(i));
  }
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, tensor_idx, rows = std::move(rows)](Tape& t) {
    Matrix& g = t.grads_->g[tensor_idx];
    const Matrix& a = t.adj(id);
    for (int i = 0; i < a.rows; ++i) {
      for (int j = 0; j < a.cols; ++j) g.at(rows[i], j) += a.at(i, j);
    }
  };
  return id;
}

Tape::Id Tape::add(Id a, Id b) {
  check_same_shape(val(a), val(b), "add");
  Matrix v = val(a);
  for (std::size_t i = 0; i < v.a.size(); ++i) v.a[i] += val(b).a[i];
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a, b](Tape& t) {
    const Matrix& g = t.adj(id);
    for (std::size_t i = 0; i < g.a.size(); ++i) {
      t.adj(a).a[i] += g.a[i];
      t.adj(b).a[i] += g.a[i];
    }
  };
  return id;
}

Tape::Id Tape::sub(Id a, Id b) {
  check_same_shape(val(a), val(b), "sub");
  Matrix v = val(a);
  for (std::size_t i = 0; i < v.a.size(); ++i) v.a[i] -= val(b).a[i];
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a, b](Tape& t) {
    const Matrix& g = t.adj(id);
    for (std::size_t i = 0; i < g.a.size(); ++i) {
      t.adj(a).a[i] += g.a[i];
      t.adj(b).a[i] -= g.a[i];
    }
  };
  return id;
}

Tape::Id Tape::mul(Id a, Id b) {
  check_same_shape(val(a), val(b), "mul");
  Matrix v = val(a);
  for (std::size_t i = 0; i < v.a.size(); ++i) v.a[i] *= val(b).a[i];
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a, b](Tape& t) {
    const Matrix& g = t.adj(id);
    for (std::size_t i = 0; i < g.a.size(); ++i) {
      t.adj(a).a[i] += g.a[i] * t.val(b).a[i];
      t.adj(b).a[i] += g.a[i] * t.val(a).a[i];
    }
  };
  return id;
}

Tape::Id Tape::affc(Id a, double k, double c) {
  Matrix v = val(a);
  for (double& x : v.a) x = k * x + c;
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a, k](Tape& t) {
    const Matrix& g = t.adj(id);
    for (std::size_t i = 0; i < g.a.size(); ++i) t.adj(a).a[i] += k * g.a[i];
  };
  return id;
}

Tape::Id Tape::scalar_mul(Id a, Id s) {
  if (val(s).size() != 1) throw DimensionError("scalar_mul: scale must be 1x1");
  const double sv = val(s).a[0];
  Matrix v = val(a);
  for (double& x : v.a) x *= sv;
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a, s, sv](Tape& t) {
    const Matrix& g = t.adj(id);
    double acc = 0.0;
    for (std::size_t i = 0; i < g.a.size(); ++i) {
      t.adj(a).a[i] += sv * g.a[i];
      acc += g.a[i] * t.val(a).a[i];
    }
    t.adj(s).a[0] += acc;
  };
  return id;
}

Tape::Id Tape::rmul(Id x, Id r) {
  const Matrix& xv = val(x);
  const Matrix& rv = val(r);
  if (rv.rows != 1 || rv.cols != xv.cols) throw DimensionError("rmul: shape mismatch");
  Matrix v = xv;
  for (int i = 0; i < v.rows; ++i) {
    for (int j = 0; j < v.cols; ++j) v.at(i, j) *= rv.a[j];
  }
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, x, r](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& xv2 = t.val(x);
    const Matrix& rv2 = t.val(r);
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < g.cols; ++j) {
        t.adj(x).at(i, j) += g.at(i, j) * rv2.a[j];
        t.adj(r).a[j] += g.at(i, j) * xv2.at(i, j);
      }
    }
  };
  return id;
}

Tape::Id Tape::radd(Id x, Id r) {
  const Matrix& xv = val(x);
  const Matrix& rv = val(r);
  if (rv.rows != 1 || rv.cols != xv.cols) throw DimensionError("radd: shape mismatch");
  Matrix v = xv;
  for (int i = 0; i < v.rows; ++i) {
    for (int j = 0; j < v.cols; ++j) v.at(i, j) += rv.a[j];
  }
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, x, r](Tape& t) {
    const Matrix& g = t.adj(id);
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < g.cols; ++j) {
        t.adj(x).at(i, j) += g.at(i, j);
        t.adj(r).a[j] += g.at(i, j);
      }
    }
  };
  return id;
}

Tape::Id Tape::cmul(Id x, Id c) {
  const Matrix& xv = val(x);
  const Matrix& cv = val(c);
  if (cv.cols != 1 || cv.rows != xv.rows) throw DimensionError("cmul: shape mismatch");
  Matrix v = xv;
  for (int i = 0; i < v.rows; ++i) {
    for (int j = 0; j < v.cols; ++j) v.at(i, j) *= cv.a[i];
  }
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, x, c](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& xv2 = t.val(x);
    const Matrix& cv2 = t.val(c);
    for (int i = 0; i < g.rows; ++i) {
      double acc = 0.0;
      for (int j = 0; j < g.cols; ++j) {
        t.adj(x).at(i, j) += g.at(i, j) * cv2.a[i];
        acc += g.at(i, j) * xv2.at(i, j);
      }
      t.adj(c).a[i] += acc;
    }
  };
  return id;
}

Tape::Id Tape::cdiv(Id x, Id c) {
  const Matrix& xv = val(x);
  const Matrix& cv = val(c);
  if (cv.cols != 1 || cv.rows != xv.rows) throw DimensionError("cdiv: shape mismatch");
  Matrix v = xv;
  for (int i = 0; i < v.rows; ++i) {
    for (int j = 0; j < v.cols; ++j) v.at(i, j) /= cv.a[i];
  }
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, x, c](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& yv = t.val(id);
    const Matrix& cv2 = t.val(c);
    for (int i = 0; i < g.rows; ++i) {
      double acc = 0.0;
      for (int j = 0; j < g.cols; ++j) {
        t.adj(x).at(i, j) += g.at(i, j) / cv2.a[i];
        acc += g.at(i, j) * yv.at(i, j);
      }
      t.adj(c).a[i] -= acc / cv2.a[i];
    }
  };
  return id;
}

Tape::Id Tape::exp_(Id a) {
  Matrix v = val(a);
  for (double& x : v.a) x = std::exp(x);
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& y = t.val(id);
    for (std::size_t i = 0; i < g.a.size(); ++i) t.adj(a).a[i] += g.a[i] * y.a[i];
  };
  return id;
}

Tape::Id Tape::sigmoid_(Id a) {
  Matrix v = val(a);
  for (double& x : v.a) x = sigmoid(x);
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& y = t.val(id);
    for (std::size_t i = 0; i < g.a.size(); ++i) t.adj(a).a[i] += g.a[i] * y.a[i] * (1.0 - y.a[i]);
  };
  return id;
}

Tape::Id Tape::softplus_(Id a) {
  Matrix v = val(a);
  for (double& x : v.a) x = softplus(x);
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& x = t.val(a);
    for (std::size_t i = 0; i < g.a.size(); ++i) t.adj(a).a[i] += g.a[i] * sigmoid(x.a[i]);
  };
  return id;
}

Tape::Id Tape::relu_(Id a) {
  Matrix v = val(a);
  for (double& x : v.a) x = std::max(x, 0.0);
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& x = t.val(a);
    for (std::size_t i = 0; i < g.a.size(); ++i) {
      if (x.a[i] > 0.0) t.adj(a).a[i] += g.a[i];
    }
  };
  return id;
}

Tape::Id Tape::sqrt_lo(Id a, double lo) {
  Matrix v = val(a);
  for (double& x : v.a) x = std::sqrt(std::max(x, lo));
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a, lo](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& x = t.val(a);
    const Matrix& y = t.val(id);
    for (std::size_t i = 0; i < g.a.size(); ++i) {
      if (x.a[i] > lo && y.a[i] > 0.0) t.adj(a).a[i] += g.a[i] * 0.5 / y.a[i];
    }
  };
  return id;
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  const Matrix& av = val(a);
  const Matrix& bv = val(b);
  if (av.cols != bv.cols) throw DimensionError("matmul_nt: inner dimension mismatch");
  Matrix v(av.rows, bv.rows);
  for (int i = 0; i < av.rows; ++i) {
    for (int j = 0; j < bv.rows; ++j) v.at(i, j) = dot(av.row_span(i), bv.row_span(j));
  }
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a, b](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& av2 = t.val(a);
    const Matrix& bv2 = t.val(b);
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < g.cols; ++j) {
        const double gij = g.at(i, j);
        if (gij == 0.0) continue;
        axpy(gij, bv2.row_span(j), t.adj(a).row_span(i));
        axpy(gij, av2.row_span(i), t.adj(b).row_span(j));
      }
    }
  };
  return id;
}

Tape::Id Tape::matmul_nn(Id a, Id b) {
  const Matrix& av = val(a);
  const Matrix& bv = val(b);
  if (av.cols != bv.rows) throw DimensionError("matmul_nn: inner dimension mismatch");
  Matrix v(av.rows, bv.cols);
  for (int i = 0; i < av.rows; ++i) {
    for (int k = 0; k < av.cols; ++k) {
      const double aik = av.at(i, k);
      if (aik == 0.0) continue;
      axpy(aik, bv.row_span(k), v.row_span(i));
    }
  }
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a, b](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& av2 = t.val(a);
    const Matrix& bv2 = t.val(b);
    for (int i = 0; i < g.rows; ++i) {
      for (int k = 0; k < av2.cols; ++k) {
        t.adj(a).at(i, k) += dot(g.row_span(i), bv2.row_span(k));
        axpy(av2.at(i, k), g.row_span(i), t.adj(b).row_span(k));
      }
    }
  };
  return id;
}

Tape::Id Tape::concat_cols(Id a, Id b) {
  const Matrix& av = val(a);
  const Matrix& bv = val(b);
  if (av.rows != bv.rows) throw DimensionError("concat_cols: row mismatch");
  const int asz = av.cols;
  Matrix v(av.rows, av.cols + bv.cols);
  for (int i = 0; i < v.rows; ++i) {
    std::copy(av.row(i), av.row(i) + av.cols, v.row(i));
    std::copy(bv.row(i), bv.row(i) + bv.cols, v.row(i) + av.cols);
  }
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a, b, asz](Tape& t) {
    const Matrix& g = t.adj(id);
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < asz; ++j) t.adj(a).at(i, j) += g.at(i, j);
      for (int j = asz; j < g.cols; ++j) t.adj(b).at(i, j - asz) += g.at(i, j);
    }
  };
  return id;
}

Tape::Id Tape::slice_cols(Id a, int off, int len) {
  const Matrix& av = val(a);
  if (off < 0 || off + len > av.cols) throw DimensionError("slice_cols: out of range");
  Matrix v(av.rows, len);
  for (int i = 0; i < av.rows; ++i) std::copy(av.row(i) + off, av.row(i) + off + len, v.row(i));
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a, off, len](Tape& t) {
    const Matrix& g = t.adj(id);
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < len; ++j) t.adj(a).at(i, off + j) += g.at(i, j);
    }
  };
  return id;
}

Tape::Id Tape::slice_rows(Id a, int r0, int nr) {
  const Matrix& av = val(a);
  if (r0 < 0 || r0 + nr > av.rows) throw DimensionError("slice_rows: out of range");
  Matrix v(nr, av.cols);
  std::copy(av.row(r0), av.row(r0) + static_cast<std::size_t>(nr) * av.cols, v.a.begin());
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a, r0](Tape& t) {
    const Matrix& g = t.adj(id);
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < g.cols; ++j) t.adj(a).at(r0 + i, j) += g.at(i, j);
    }
  };
  return id;
}

Tape::Id Tape::concat_rows(const std::vector<Id>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: empty");
  int rows = 0;
  const int cols = val(parts[0]).cols;
  for (Id p : parts) {
    if (val(p).cols != cols) throw DimensionError("concat_rows: column mismatch");
    rows += val(p).rows;
  }
  Matrix v(rows, cols);
  int r = 0;
  for (Id p : parts) {
    const Matrix& pv = val(p);
    std::copy(pv.a.begin(), pv.a.end(), v.row(r));
    r += pv.rows;
  }
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, parts](Tape& t) {
    const Matrix& g = t.adj(id);
    int r2 = 0;
    for (Id p : parts) {
      Matrix& pa = t.adj(p);
      for (int i = 0; i < pa.rows; ++i) {
        for (int j = 0; j < pa.cols; ++j) pa.at(i, j) += g.at(r2 + i, j);
      }
      r2 += pa.rows;
    }
  };
  return id;
}

Tape::Id Tape::transpose_vec(Id a) {
  const Matrix& av = val(a);
  if (av.rows != 1 && av.cols != 1) throw DimensionError("transpose_vec: expects a vector");
  Matrix v(av.cols, av.rows, av.a);
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a](Tape& t) {
    const Matrix& g = t.adj(id);
    for (std::size_t i = 0; i < g.a.size(); ++i) t.adj(a).a[i] += g.a[i];
  };
  return id;
}

Tape::Id Tape::outer(Id col, Id row) {
  const Matrix& cv = val(col);
  const Matrix& rv = val(row);
  if (cv.cols != 1 || rv.rows != 1) throw DimensionError("outer: expects column x row");
  Matrix v(cv.rows, rv.cols);
  for (int i = 0; i < v.rows; ++i) {
    for (int j = 0; j < v.cols; ++j) v.at(i, j) = cv.a[i] * rv.a[j];
  }
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, col, row](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& cv2 = t.val(col);
    const Matrix& rv2 = t.val(row);
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < g.cols; ++j) {
        t.adj(col).a[i] += g.at(i, j) * rv2.a[j];
        t.adj(row).a[j] += g.at(i, j) * cv2.a[i];
      }
    }
  };
  return id;
}

Tape::Id Tape::rows_dot(Id a, Id b) {
  check_same_shape(val(a), val(b), "rows_dot");
  const Matrix& av = val(a);
  Matrix v(av.rows, 1);
  for (int i = 0; i < av.rows; ++i) v.a[i] = dot(av.row_span(i), val(b).row_span(i));
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a, b](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& av2 = t.val(a);
    const Matrix& bv2 = t.val(b);
    for (int i = 0; i < g.rows; ++i) {
      axpy(g.a[i], bv2.row_span(i), t.adj(a).row_span(i));
      axpy(g.a[i], av2.row_span(i), t.adj(b).row_span(i));
    }
  };
  return id;
}

Tape::Id Tape::rows_sqnorm(Id a) {
  const Matrix& av = val(a);
  Matrix v(av.rows, 1);
  for (int i = 0; i < av.rows; ++i) v.a[i] = sqnorm(av.row_span(i));
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, a](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& av2 = t.val(a);
    for (int i = 0; i < g.rows; ++i) axpy(2.0 * g.a[i], av2.row_span(i), t.adj(a).row_span(i));
  };
  return id;
}

Tape::Id Tape::wsum(Id x, std::vector<double> w) {
  const Matrix& xv = val(x);
  if (xv.cols != 1 || static_cast<int>(w.size()) != xv.rows)
    throw DimensionError("wsum: expects [L,1] and L weights");
  Matrix v(1, 1);
  for (int i = 0; i < xv.rows; ++i) v.a[0] += w[i] * xv.a[i];
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, x, w = std::move(w)](Tape& t) {
    const double g = t.adj(id).a[0];
    for (std::size_t i = 0; i < w.size(); ++i) t.adj(x).a[i] += g * w[i];
  };
  return id;
}

Tape::Id Tape::sum(Id x) {
  const Matrix& xv = val(x);
  Matrix v(1, 1);
  for (double s : xv.a) v.a[0] += s;
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, x](Tape& t) {
    const double g = t.adj(id).a[0];
    for (std::size_t i = 0; i < t.adj(x).a.size(); ++i) t.adj(x).a[i] += g;
  };
  return id;
}

Tape::Id Tape::softmax_causal(Id scores) {
  const Matrix& sv = val(scores);
  if (sv.rows != sv.cols) throw DimensionError("softmax_causal: expects square scores");
  Matrix v(sv.rows, sv.cols);
  for (int i = 0; i < sv.rows; ++i) {
    double mx = sv.at(i, 0);
    for (int j = 1; j <= i; ++j) mx = std::max(mx, sv.at(i, j));
    double z = 0.0;
    for (int j = 0; j <= i; ++j) z += std::exp(sv.at(i, j) - mx);
    for (int j = 0; j <= i; ++j) v.at(i, j) = std::exp(sv.at(i, j) - mx) / z;
  }
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, scores](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& p = t.val(id);
    for (int i = 0; i < g.rows; ++i) {
      double gp = 0.0;
      for (int j = 0; j <= i; ++j) gp += g.at(i, j) * p.at(i, j);
      for (int j = 0; j <= i; ++j) t.adj(scores).at(i, j) += p.at(i, j) * (g.at(i, j) - gp);
    }
  };
  return id;
}

Tape::Id Tape::softmax_xent(Id logits, const std::vector<int>& labels,
                            const std::vector<std::uint8_t>& valid) {
  const Matrix& lv = val(logits);
  if (static_cast<int>(labels.size()) != lv.rows || valid.size() != labels.size())
    throw DimensionError("softmax_xent: label/valid length mismatch");
  int nvalid = 0;
  for (std::uint8_t u : valid) nvalid += (u != 0);
  if (nvalid == 0) throw DimensionError("softmax_xent: no valid rows");
  Matrix probs(lv.rows, lv.cols);
  double loss = 0.0;
  for (int i = 0; i < lv.rows; ++i) {
    if (!valid[i]) continue;
    if (labels[i] < 0 || labels[i] >= lv.cols) throw DataError("softmax_xent: label out of range");
    double mx = lv.at(i, 0);
    for (int j = 1; j < lv.cols; ++j) mx = std::max(mx, lv.at(i, j));
    double z = 0.0;
    for (int j = 0; j < lv.cols; ++j) z += std::exp(lv.at(i, j) - mx);
    for (int j = 0; j < lv.cols; ++j) probs.at(i, j) = std::exp(lv.at(i, j) - mx) / z;
    loss -= std::log(std::max(probs.at(i, labels[i]), 1e-300));
  }
  Matrix v(1, 1);
  v.a[0] = loss / nvalid;
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, logits, labels, valid, probs = std::move(probs), nvalid](Tape& t) {
    const double g = t.adj(id).a[0] / nvalid;
    for (int i = 0; i < probs.rows; ++i) {
      if (!valid[i]) continue;
      for (int j = 0; j < probs.cols; ++j) {
        const double delta = (j == labels[i]) ? 1.0 : 0.0;
        t.adj(logits).at(i, j) += g * (probs.at(i, j) - delta);
      }
    }
  };
  return id;
}

Tape::Id Tape::exp_o_sp(Id vtan, double c) {
  const Matrix& vv = val(vtan);
  const double sc = std::sqrt(c);
  Matrix v(vv.rows, vv.cols);
  for (int i = 0; i < vv.rows; ++i) {
    const double r = std::sqrt(sqnorm(vv.row_span(i)));
    const double f = manifold::sinhc(r / sc);
    for (int j = 0; j < vv.cols; ++j) v.at(i, j) = f * vv.at(i, j);
  }
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, vtan, c, sc](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& x = t.val(vtan);
    for (int i = 0; i < g.rows; ++i) {
      const double r = std::sqrt(sqnorm(x.row_span(i)));
      const double z = r / sc;
      const double f = manifold::sinhc(z);
      const double coef = dsinhc_over_z(z) / c;
      const double gv = dot(g.row_span(i), x.row_span(i));
      for (int j = 0; j < g.cols; ++j)
        t.adj(vtan).at(i, j) += f * g.at(i, j) + coef * gv * x.at(i, j);
    }
  };
  return id;
}

Tape::Id Tape::log_o_sp(Id xsp, double c) {
  const Matrix& xv = val(xsp);
  const double sc = std::sqrt(c);
  Matrix v(xv.rows, xv.cols);
  for (int i = 0; i < xv.rows; ++i) {
    const double s = std::sqrt(sqnorm(xv.row_span(i)));
    const double f = manifold::asinhc(s / sc);
    for (int j = 0; j < xv.cols; ++j) v.at(i, j) = f * xv.at(i, j);
  }
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, xsp, c, sc](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& x = t.val(xsp);
    for (int i = 0; i < g.rows; ++i) {
      const double s = std::sqrt(sqnorm(x.row_span(i)));
      const double z = s / sc;
      const double f = manifold::asinhc(z);
      const double coef = dasinhc_over_z(z) / c;
      const double gv = dot(g.row_span(i), x.row_span(i));
      for (int j = 0; j < g.cols; ++j)
        t.adj(xsp).at(i, j) += f * g.at(i, j) + coef * gv * x.at(i, j);
    }
  };
  return id;
}

Tape::Id Tape::time_coord(Id x, double c) {
  return sqrt_lo(affc(rows_sqnorm(x), 1.0, c), 0.0);
}

Tape::Id Tape::block_rotate(Id x, Id angles) {
  const Matrix& xv = val(x);
  const Matrix& av = val(angles);
  if (av.rows != 1) throw DimensionError("block_rotate: angles must be a row");
  const int blocks = std::min(av.cols, xv.cols / 2);
  Matrix v = xv;
  for (int i = 0; i < v.rows; ++i) {
    for (int b = 0; b < blocks; ++b) {
      const double cs = std::cos(av.a[b]);
      const double sn = std::sin(av.a[b]);
      const double u = xv.at(i, 2 * b);
      const double w = xv.at(i, 2 * b + 1);
      v.at(i, 2 * b) = cs * u - sn * w;
      v.at(i, 2 * b + 1) = sn * u + cs * w;
    }
  }
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, x, angles, blocks](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& xv2 = t.val(x);
    const Matrix& av2 = t.val(angles);
    for (int i = 0; i < g.rows; ++i) {
      for (int b = 0; b < blocks; ++b) {
        const double cs = std::cos(av2.a[b]);
        const double sn = std::sin(av2.a[b]);
        const double u = xv2.at(i, 2 * b);
        const double w = xv2.at(i, 2 * b + 1);
        const double gu = g.at(i, 2 * b);
        const double gw = g.at(i, 2 * b + 1);
        t.adj(x).at(i, 2 * b) += cs * gu + sn * gw;
        t.adj(x).at(i, 2 * b + 1) += -sn * gu + cs * gw;
        t.adj(angles).a[b] += gu * (-u * sn - w * cs) + gw * (u * cs - w * sn);
      }
      for (int j = 2 * blocks; j < g.cols; ++j) t.adj(x).at(i, j) += g.at(i, j);
    }
  };
  return id;
}

Tape::Id Tape::discretize_b(Id dt, std::vector<double> a) {
  const Matrix& dv = val(dt);
  if (static_cast<int>(a.size()) != dv.cols) throw DimensionError("discretize_b: channel mismatch");
  Matrix v(dv.rows, dv.cols);
  for (int i = 0; i < dv.rows; ++i) {
    for (int j = 0; j < dv.cols; ++j) {
      const double d = dv.at(i, j);
      const double z = d * a[j];
      if (std::abs(z) < 1e-4) {
        v.at(i, j) = d * (1.0 + z / 2.0 + z * z / 6.0);
      } else {
        v.at(i, j) = (std::exp(z) - 1.0) / a[j];
      }
    }
  }
  const Id id = push(std::move(v), nullptr);
  nodes_[id].back = [id, dt, a = std::move(a)](Tape& t) {
    const Matrix& g = t.adj(id);
    const Matrix& dv2 = t.val(dt);
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < g.cols; ++j) {
        const double z = dv2.at(i, j) * a[j];
        const double deriv =
            std::abs(z) < 1e-4 ? 1.0 + z + z * z / 2.0 : std::exp(z);
        t.adj(dt).at(i, j) += g.at(i, j) * deriv;
      }
    }
  };
  return id;
}

void Tape::backward(Id root, double seed) {
  if (val(root).size() != 1) throw DimensionError("backward: root must be scalar");
  for (Node& n : nodes_) n.adj.fill(0.0);
  nodes_[root].adj.a[0] = seed;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    if (nodes_[i].back) nodes_[i].back(*this);
  }
}

Tape::Id tape_mobius_sp(Tape& t, Tape::Id xs, Tape::Id ys, double c) {
  const double sc = std::sqrt(c);
  const Tape::Id px = t.cdiv(xs, t.affc(t.time_coord(xs, c), 1.0, sc));
  const Tape::Id py = t.cdiv(ys, t.affc(t.time_coord(ys, c), 1.0, sc));
  const Tape::Id xy = t.rows_dot(px, py);
  const Tape::Id nx = t.rows_sqnorm(px);
  const Tape::Id ny = t.rows_sqnorm(py);
  const Tape::Id coefx = t.affc(t.add(t.scale(xy, 2.0 * c), t.scale(ny, c)), 1.0, 1.0);
  const Tape::Id coefy = t.affc(nx, -c, 1.0);
  const Tape::Id den =
      t.affc(t.add(t.scale(xy, 2.0 * c), t.scale(t.mul(nx, ny), c * c)), 1.0, 1.0);
  const Tape::Id pz = t.cdiv(t.add(t.cmul(px, coefx), t.cmul(py, coefy)), den);
  const Tape::Id denom2 = t.affc(t.rows_sqnorm(pz), -c, 1.0);
  return t.cdiv(t.scale(pz, 2.0 * sc), denom2);
}

Tape::Id tape_sqdist_matrix(Tape& t, Tape::Id es, Tape::Id ps, double c) {
  const Tape::Id e0 = t.time_coord(es, c);
  const Tape::Id p0 = t.transpose_vec(t.time_coord(ps, c));
  return t.add(t.affc(t.matmul_nt(es, ps), -2.0, -2.0 * c), t.scale(t.outer(e0, p0), 2.0));
}

Tape::Id tape_sqdist_matrix_euclidean(Tape& t, Tape::Id es, Tape::Id ps) {
  const Matrix& ev = t.val(es);
  const Matrix& pv = t.val(ps);
  Matrix ones_row(1, pv.rows);
  ones_row.fill(1.0);
  Matrix ones_col(ev.rows, 1);
  ones_col.fill(1.0);
  const Tape::Id a = t.outer(t.rows_sqnorm(es), t.constant(std::move(ones_row)));
  const Tape::Id b = t.outer(t.constant(std::move(ones_col)), t.transpose_vec(t.rows_sqnorm(ps)));
  return t.add(t.add(a, b), t.scale(t.matmul_nt(es, ps), -2.0));
}

}  // namespace gtr
