// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/params.hpp"

#include <cmath>

#include "gtr/error.hpp"

namespace gtr {

int ParamStore::add(const std::string& name, Matrix value) {
  if (index_of(name) >= 0) throw ConfigError("duplicate parameter tensor: " + name);
  tensors_.push_back(Tensor{name, std::move(value)});
  return static_cast<int>(tensors_.size()) - 1;
}

int ParamStore::index_of(const std::string& name) const {
  for (int i = 0; i < static_cast<int>(tensors_.size()); ++i) {
    if (tensors_[i].name == name) return i;
  }
  return -1;
}

int ParamStore::must_index(const std::string& name) const {
  const int i = index_of(name);
  if (i < 0) throw ConfigError("unknown parameter tensor: " + name);
  return i;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.value.size();
  return n;
}

GradStore::GradStore(const ParamStore& ps) {
  g.reserve(ps.size());
  for (int i = 0; i < ps.size(); ++i) g.emplace_back(ps[i].value.rows, ps[i].value.cols);
}

void GradStore::zero() {
  for (Matrix& m : g) m.fill(0.0);
}

void GradStore::add_scaled(const GradStore& other, double k) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < g[i].a.size(); ++j) g[i].a[j] += k * other.g[i].a[j];
  }
}

double GradStore::global_norm() const {
  double s = 0.0;
  for (const Matrix& m : g) s += sqnorm(m.a);
  return std::sqrt(s);
}

Adam::Adam(const ParamStore& ps, double lr_, double beta1_, double beta2_, double eps_)
    : lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_) {
  m.reserve(ps.size());
  v.reserve(ps.size());
  for (int i = 0; i < ps.size(); ++i) {
    m.emplace_back(ps[i].value.rows, ps[i].value.cols);
    v.emplace_back(ps[i].value.rows, ps[i].value.cols);
  }
}

void Adam::step(ParamStore& ps, GradStore& grads, double clip_norm) {
  for (int i = 0; i < ps.size(); ++i) {
    if (!all_finite(grads.g[i].a))
      throw NumericError("non-finite gradient in parameter " + ps[i].name);
  }
  double scale = 1.0;
  if (clip_norm > 0.0) {
    const double norm = grads.global_norm();
    if (norm > clip_norm) scale = clip_norm / norm;
  }
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (int i = 0; i < ps.size(); ++i) {
    Matrix& p = ps[i].value;
    for (std::size_t j = 0; j < p.a.size(); ++j) {
      const double g = grads.g[i].a[j] * scale;
      m[i].a[j] = beta1 * m[i].a[j] + (1.0 - beta1) * g;
      v[i].a[j] = beta2 * v[i].a[j] + (1.0 - beta2) * g * g;
      const double mhat = m[i].a[j] / bc1;
      const double vhat = v[i].a[j] / bc2;
      p.a[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace gtr
