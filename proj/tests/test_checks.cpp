// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "drdt3/checks.hpp"
#include "drdt3/errors.hpp"

namespace drdt3::checks {
namespace {

void expect_all_pass(std::string_view scope) {
  const auto report = run_checks(scope);
  EXPECT_FALSE(report.results.empty());
  for (const auto& r : report.results) {
    EXPECT_TRUE(r.passed) << r.name << ": error " << r.error << " > " << r.tolerance << " ("
                          << r.detail << ")";
  }
}

TEST(ChecksTest, NumericsScopePasses) { expect_all_pass("numerics"); }
TEST(ChecksTest, Dt3ScopePasses) { expect_all_pass("dt3"); }
TEST(ChecksTest, DiffusionScopePasses) { expect_all_pass("diffusion"); }
TEST(ChecksTest, TrainingScopePasses) { expect_all_pass("training"); }

TEST(ChecksTest, CorruptedAdjointFailsAndIsNamed) {
  auto cases = builtin_cases();
  cases.push_back(corrupted_adjoint_case());
  const auto report = run_checks(cases, "numerics");
  EXPECT_FALSE(report.passed());
  ASSERT_NE(report.worst(), nullptr);
  EXPECT_FALSE(report.worst()->passed);
  EXPECT_EQ(report.worst()->name, "grad cube (corrupted adjoint)");
  std::size_t failed = 0;
  for (const auto& r : report.results) failed += r.passed ? 0 : 1;
  EXPECT_EQ(failed, 1u);
}

TEST(ChecksTest, ThrowingCaseIsAFailure) {
  std::vector<CheckCase> cases = {
      {"dt3", "throws", 1.0, [](std::string&) -> double { throw ContractError("boom"); }}};
  const auto report = run_checks(cases, "all");
  ASSERT_EQ(report.results.size(), 1u);
  EXPECT_FALSE(report.passed());
  EXPECT_NE(report.results[0].detail.find("boom"), std::string::npos);
}

TEST(ChecksTest, UnknownScope) { EXPECT_THROW(run_checks("physics"), ArgumentError); }

TEST(ChecksTest, ScopeFilters) {
  for (const auto& s : scopes()) {
    for (const auto& r : run_checks(std::vector<CheckCase>(), s).results) EXPECT_EQ(r.scope, s);
  }
  EXPECT_TRUE(run_checks(std::vector<CheckCase>(), "all").results.empty());
}

}  // namespace
}  // namespace drdt3::checks
