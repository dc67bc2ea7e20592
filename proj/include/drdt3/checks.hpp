// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Runtime self-checks: finite-difference gradient suites and exact
// invariants, grouped by scope. Used by `drdt3 check` and the acceptance
// suite.

#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace drdt3::checks {

struct CheckCase {
  std::string scope;  // numerics | dt3 | diffusion | training
  std::string name;
  double tolerance = 0.0;
  /// Returns the measured error; may fill `detail` with the worst offender.
  std::function<double(std::string& detail)> measure;
};

struct CheckResult {
  std::string scope;
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

struct CheckReport {
  std::vector<CheckResult> results;

  bool passed() const;
  /// Failed result with the largest error/tolerance ratio, or the passing
  /// result closest to its tolerance when everything passed. Null if empty.
  const CheckResult* worst() const;
};

std::vector<std::string> scopes();  // numerics, dt3, diffusion, training
std::vector<CheckCase> builtin_cases();

/// Runs the cases whose scope matches (`all` selects every case). A case
/// passes when its error is finite and ≤ tolerance; an exception is a
/// failure. Throws ArgumentError for an unknown scope.
CheckReport run_checks(const std::vector<CheckCase>& cases, std::string_view scope);
CheckReport run_checks(std::string_view scope);

/// Gradient check of an op whose adjoint is deliberately wrong (the output is
/// x³ but the recorded adjoint is 2x). Must fail.
CheckCase corrupted_adjoint_case();

}  // namespace drdt3::checks
