// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "drdt3/layers.hpp"

namespace drdt3 {

nx::DArray normal_array(nx::Shape shape, double stddev, Rng& rng) {
  nx::DArray a(std::move(shape));
  for (auto& v : a.values()) v = rng.normal(0.0, stddev);
  a.set_requires_grad(true);
  return a;
}

nx::DArray learnable(nx::Shape shape, double fill) {
  nx::DArray a(std::move(shape), fill);
  a.set_requires_grad(true);
  return a;
}

Linear Linear::init(std::size_t in, std::size_t out, double stddev, Rng& rng) {
  return {normal_array({in, out}, stddev, rng), learnable({out})};
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
  return {learnable({in, out}), learnable({out})};
}

nx::Var Linear::operator()(nx::Tape& tape, nx::Var x) const {
  return nx::add_row(nx::matmul(x, tape.leaf(weight)), tape.leaf(bias));
}

void Linear::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".weight", &weight});
  out.push_back({prefix + ".bias", &bias});
}

LayerNormParams LayerNormParams::init(std::size_t dim) {
  return {learnable({dim}, 1.0), learnable({dim}, 0.0)};
}

nx::Var LayerNormParams::operator()(nx::Tape& tape, nx::Var x) const {
  return nx::layer_norm(x, tape.leaf(gain), tape.leaf(bias));
}

void LayerNormParams::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".gain", &gain});
  out.push_back({prefix + ".bias", &bias});
}

void zero_grads(const ParamList& params) {
  for (const auto& p : params) p.array->zero_grad();
}

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.array->numel();
  return n;
}

}  // namespace drdt3
