// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "gtr/linalg.hpp"

namespace gtr {

struct Tensor {
  std::string name;
  Matrix value;
};

// Flat registry of trainable tensors. Indices are stable once added.
class ParamStore {
 public:
  int add(const std::string& name, Matrix value);
  int index_of(const std::string& name) const;  // -1 when absent
  int must_index(const std::string& name) const;

  Tensor& operator[](int i) { return tensors_[i]; }
  const Tensor& operator[](int i) const { return tensors_[i]; }
  Matrix& value(const std::string& name) { return tensors_[must_index(name)].value; }
  const Matrix& value(const std::string& name) const { return tensors_[must_index(name)].value; }

  int size() const { return static_cast<int>(tensors_.size()); }
  std::size_t scalar_count() const;

 private:
  std::vector<Tensor> tensors_;
};

// Gradient buffers parallel to a ParamStore.
struct GradStore {
  std::vector<Matrix> g;

  GradStore() = default;
  explicit GradStore(const ParamStore& ps);
  void zero();
  void add_scaled(const GradStore& other, double k = 1.0);
  double global_norm() const;
};

// Standard Adam with optional global-norm clipping.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamStore& ps, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  // Applies one update in place. clip_norm <= 0 disables clipping.
  // Throws NumericError naming the parameter if a gradient is non-finite.
  void step(ParamStore& ps, GradStore& grads, double clip_norm = 0.0);

  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long t = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

}  // namespace gtr
