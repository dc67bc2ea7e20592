// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "drdt3/numerics.hpp"
#include "drdt3/rng.hpp"

namespace drdt3 {

/// A learnable array together with its dotted path inside a model, in the
/// order it is serialized.
struct NamedParam {
  std::string name;
  nx::DArray* array;
};

using ParamList = std::vector<NamedParam>;

/// y = x W + b with W stored in×out.
struct Linear {
  nx::DArray weight;
  nx::DArray bias;

  static Linear init(std::size_t in, std::size_t out, double stddev, Rng& rng);
  static Linear zeros(std::size_t in, std::size_t out);

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }

  nx::Var operator()(nx::Tape& tape, nx::Var x) const;
  void collect(const std::string& prefix, ParamList& out);
};

struct LayerNormParams {
  nx::DArray gain;
  nx::DArray bias;

  static LayerNormParams init(std::size_t dim);

  nx::Var operator()(nx::Tape& tape, nx::Var x) const;
  void collect(const std::string& prefix, ParamList& out);
};

/// Fills with N(0, stddev²) draws and marks the array learnable.
nx::DArray normal_array(nx::Shape shape, double stddev, Rng& rng);
nx::DArray learnable(nx::Shape shape, double fill = 0.0);

/// Clears the gradient buffers of every parameter.
void zero_grads(const ParamList& params);
std::size_t parameter_count(const ParamList& params);

}  // namespace drdt3
