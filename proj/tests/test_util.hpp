// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "drdt3/numerics.hpp"
#include "drdt3/rng.hpp"

namespace drdt3::testing {

inline nx::DArray random_array(nx::Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  nx::DArray a(std::move(shape));
  for (auto& v : a.values()) v = rng.uniform(lo, hi);
  a.set_requires_grad(true);
  return a;
}

/// Simpson-rule integral of the standard normal density from 0 to x, plus 1/2.
/// Independent of erf/erfc.
inline double normal_cdf_quadrature(double x, int intervals = 4000) {
  const double h = x / intervals;
  auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); };
  double s = pdf(0.0) + pdf(x);
  for (int k = 1; k < intervals; ++k) s += (k % 2 ? 4.0 : 2.0) * pdf(k * h);
  return 0.5 + s * h / 3.0;
}

}  // namespace drdt3::testing
