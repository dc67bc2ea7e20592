// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "drdt3/errors.hpp"
#include "drdt3/numerics.hpp"
#include "drdt3/rng.hpp"
#include "test_util.hpp"

namespace drdt3::nx {
namespace {

using drdt3::testing::normal_cdf_quadrature;
using drdt3::testing::random_array;

TEST(MatmulTest, IdentityLeavesMatrixUnchanged) {
  Tape t;
  auto eye = t.constant(DArray::matrix(2, 2, {1, 0, 0, 1}));
  auto m = t.constant(DArray::matrix(2, 2, {3.5, -1, 2, 7}));
  auto out = matmul(eye, m);
  EXPECT_EQ(std::vector<double>(out.values().begin(), out.values().end()),
            (std::vector<double>{3.5, -1, 2, 7}));
}

TEST(MatmulTest, HandArithmetic) {
  Tape t;
  auto out = matmul(t.constant(DArray::matrix(2, 2, {1, 2, 3, 4})),
                    t.constant(DArray::matrix(2, 1, {1, 1})));
  ASSERT_EQ(out.shape(), (Shape{2, 1}));
  EXPECT_EQ(out(0, 0), 3.0);
  EXPECT_EQ(out(1, 0), 7.0);
}

TEST(MatmulTest, ShapeMismatchNamesBothShapes) {
  Tape t;
  auto a = t.constant(DArray({2, 3}));
  auto b = t.constant(DArray({4, 5}));
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[4x5]"), std::string::npos);
  }
}

TEST(MatmulTest, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  auto a = random_array({3, 4}, rng);
  auto b = random_array({4, 2}, rng);
  auto w = random_array({3, 2}, rng);
  DArray* params[] = {&a, &b};
  auto res = check_gradients(
      [&](Tape& t) { return sum(mul(matmul(t.leaf(a), t.leaf(b)), t.constant(w))); }, params);
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(LayerNormTest, ConstantRowGivesZeros) {
  Tape t;
  auto x = t.constant(DArray::matrix(1, 4, {2.5, 2.5, 2.5, 2.5}));
  auto y = layer_norm(x, t.constant(DArray({4}, 1.0)), t.constant(DArray({4}, 0.0)));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNormTest, TwoElementRowIsPlusMinusOne) {
  Tape t;
  auto x = t.constant(DArray::matrix(1, 2, {1, 3}));
  auto y = layer_norm(x, t.constant(DArray({2}, 1.0)), t.constant(DArray({2}, 0.0)), 1e-14);
  EXPECT_NEAR(y(0, 0), -1.0, 1e-12);
  EXPECT_NEAR(y(0, 1), 1.0, 1e-12);
}

TEST(LayerNormTest, ZeroWidthRejected) { EXPECT_THROW(DArray({4, 0}), DimensionError); }

TEST(LayerNormTest, GainMismatchRejected) {
  Tape t;
  auto x = t.constant(DArray({2, 3}));
  EXPECT_THROW(layer_norm(x, t.constant(DArray({2}, 1.0)), t.constant(DArray({3}))),
               DimensionError);
}

TEST(LayerNormTest, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  auto x = random_array({4, 8}, rng);
  auto g = random_array({8}, rng);
  auto b = random_array({8}, rng);
  auto w = random_array({4, 8}, rng);
  DArray* params[] = {&x, &g, &b};
  auto res = check_gradients(
      [&](Tape& t) {
        return sum(mul(layer_norm(t.leaf(x), t.leaf(g), t.leaf(b)), t.constant(w)));
      },
      params);
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(SoftmaxTest, SingleElementRowIsOne) {
  Tape t;
  auto y = softmax_rows(t.constant(DArray::matrix(1, 1, {-42.0})));
  EXPECT_EQ(y.item(), 1.0);
}

TEST(SoftmaxTest, EqualLogitsAreUniform) {
  Tape t;
  auto y = softmax_rows(t.constant(DArray::matrix(1, 2, {0, 0})));
  EXPECT_EQ(y(0, 0), 0.5);
  EXPECT_EQ(y(0, 1), 0.5);
}

TEST(SoftmaxTest, LargeLogitDoesNotOverflow) {
  Tape t;
  auto y = softmax_rows(t.constant(DArray::matrix(1, 2, {1000, 0})));
  // oracle: shift by the row max by hand, exponent differences are exact here
  const double e0 = std::exp(0.0), e1 = std::exp(-1000.0);
  EXPECT_TRUE(std::isfinite(y(0, 0)) && std::isfinite(y(0, 1)));
  EXPECT_DOUBLE_EQ(y(0, 0), e0 / (e0 + e1));
  EXPECT_DOUBLE_EQ(y(0, 1), e1 / (e0 + e1));
}

TEST(SoftmaxTest, RowsSumToOne) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Tape t;
    auto y = softmax_rows(t.constant(random_array({3, 7}, rng, -20, 20)));
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        EXPECT_GT(y(r, c), 0.0);
        EXPECT_LE(y(r, c), 1.0);
        s += y(r, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(GeluTest, ZeroMapsToZero) {
  Tape t;
  EXPECT_EQ(gelu(t.constant(DArray({1}, 0.0))).item(), 0.0);
}

TEST(GeluTest, LargePositiveIsIdentity) {
  Tape t;
  EXPECT_NEAR(gelu(t.constant(DArray({1}, 12.0))).item(), 12.0, 1e-12);
}

TEST(GeluTest, MatchesQuadratureAtOne) {
  Tape t;
  const double expected = 1.0 * normal_cdf_quadrature(1.0);
  EXPECT_NEAR(gelu(t.constant(DArray({1}, 1.0))).item(), expected, 1e-10);
}

TEST(BackwardTest, SumGivesOnes) {
  DArray x({2, 3}, 0.7);
  x.set_requires_grad(true);
  Tape t;
  t.backward(sum(t.leaf(x)));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(BackwardTest, SumOfSquaresGivesTwiceInput) {
  Rng rng(1);
  auto x = random_array({5}, rng);
  Tape t;
  auto v = t.leaf(x);
  t.backward(sum(mul(v, v)));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * x[i]);
}

TEST(BackwardTest, NonScalarLossRejected) {
  DArray x({3}, 1.0);
  x.set_requires_grad(true);
  Tape t;
  EXPECT_THROW(t.backward(t.leaf(x)), ContractError);
}

TEST(BackwardTest, ReplayDoublesLeafGradients) {
  Rng rng(2);
  auto a = random_array({3, 3}, rng);
  auto b = random_array({3, 2}, rng);
  Tape t;
  auto loss = sum(gelu(matmul(t.leaf(a), t.leaf(b))));
  t.backward(loss);
  std::vector<double> first(a.grad().begin(), a.grad().end());
  t.backward(loss);
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(a.grad()[i], 2.0 * first[i]);
}

TEST(BackwardTest, ZeroGradResets) {
  DArray x({4}, 1.0);
  x.set_requires_grad(true);
  Tape t;
  t.backward(sum(square(t.leaf(x))));
  x.zero_grad();
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(BackwardTest, ConstantsReceiveNoGradient) {
  DArray c({3}, 2.0);  // requires_grad off
  Tape t;
  auto loss = sum(square(t.leaf(c)));
  t.backward(loss);
  EXPECT_FALSE(c.has_grad());
}

// Every primitive, wrapped as sum(op(inputs) ⊙ R) with random R so each
// output coordinate carries a distinct adjoint.
struct PrimitiveCase {
  std::string name;
  std::vector<Shape> input_shapes;
  std::function<Var(Tape&, std::vector<Var>&)> op;
};

std::vector<PrimitiveCase> primitive_cases() {
  return {
      {"matmul", {{3, 4}, {4, 2}}, [](Tape&, auto& in) { return matmul(in[0], in[1]); }},
      {"transpose", {{3, 4}}, [](Tape&, auto& in) { return transpose(in[0]); }},
      {"add", {{2, 3}, {2, 3}}, [](Tape&, auto& in) { return add(in[0], in[1]); }},
      {"sub", {{2, 3}, {2, 3}}, [](Tape&, auto& in) { return sub(in[0], in[1]); }},
      {"mul", {{2, 3}, {2, 3}}, [](Tape&, auto& in) { return mul(in[0], in[1]); }},
      {"scale", {{2, 3}}, [](Tape&, auto& in) { return scale(in[0], -1.7); }},
      {"add_scalar", {{2, 3}}, [](Tape&, auto& in) { return add_scalar(in[0], 0.3); }},
      {"add_row", {{3, 4}, {4}}, [](Tape&, auto& in) { return add_row(in[0], in[1]); }},
      {"concat_cols", {{2, 3}, {2, 1}},
       [](Tape&, auto& in) { return concat_cols({in[0], in[1]}); }},
      {"concat_rows", {{2, 3}, {1, 3}},
       [](Tape&, auto& in) { return concat_rows({in[0], in[1]}); }},
      {"slice_rows", {{4, 3}}, [](Tape&, auto& in) { return slice_rows(in[0], 1, 2); }},
      {"slice_cols", {{3, 5}}, [](Tape&, auto& in) { return slice_cols(in[0], 2, 2); }},
      {"gather_rows", {{4, 3}},
       [](Tape&, auto& in) {
         const std::size_t idx[] = {2, 0, 2, 3};
         return gather_rows(in[0], idx);
       }},
      {"sum", {{2, 3}}, [](Tape&, auto& in) { return sum(in[0]); }},
      {"mean", {{2, 3}}, [](Tape&, auto& in) { return mean(in[0]); }},
      {"abs", {{2, 3}}, [](Tape&, auto& in) { return abs(in[0]); }},
      {"square", {{2, 3}}, [](Tape&, auto& in) { return square(in[0]); }},
      {"gelu", {{2, 3}}, [](Tape&, auto& in) { return gelu(in[0]); }},
      {"softmax_rows", {{2, 4}}, [](Tape&, auto& in) { return softmax_rows(in[0]); }},
      {"layer_norm", {{3, 5}, {5}, {5}},
       [](Tape&, auto& in) { return layer_norm(in[0], in[1], in[2]); }},
      {"add_outer", {{3, 4}, {3, 1}, {1, 4}},
       [](Tape&, auto& in) { return add_outer(in[0], in[1], in[2], -0.8); }},
  };
}

TEST(PrimitiveGradientTest, AllPrimitivesMatchFiniteDifferences) {
  Rng rng(2024);
  for (const auto& pc : primitive_cases()) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<DArray> inputs;
      for (const auto& s : pc.input_shapes) inputs.push_back(random_array(s, rng));
      // output shape probe
      DArray weights;
      {
        Tape probe;
        std::vector<Var> vars;
        for (auto& in : inputs) vars.push_back(probe.leaf(in));
        weights = random_array(pc.op(probe, vars).shape(), rng);
      }
      std::vector<DArray*> params;
      for (auto& in : inputs) params.push_back(&in);
      auto res = check_gradients(
          [&](Tape& t) {
            std::vector<Var> vars;
            for (auto& in : inputs) vars.push_back(t.leaf(in));
            return sum(mul(pc.op(t, vars), t.constant(weights)));
          },
          params, 1e-5);
      worst = std::max(worst, res.max_rel_error);
    }
    EXPECT_LT(worst, 1e-4) << pc.name;
  }
}

TEST(CheckGradientsTest, QuadraticIsExact) {
  Rng rng(9);
  auto x = random_array({6}, rng);
  auto c = random_array({6}, rng);
  DArray* params[] = {&x};
  auto res = check_gradients(
      [&](Tape& t) { return sum(mul(square(t.leaf(x)), t.constant(c))); }, params);
  EXPECT_LT(res.max_rel_error, 1e-8);
}

TEST(CheckGradientsTest, DeadBranchHasZeroGradient) {
  Rng rng(10);
  auto x = random_array({4}, rng);
  DArray gate({4}, 0.0);
  gate.set_requires_grad(false);
  DArray* params[] = {&x};
  auto res = check_gradients(
      [&](Tape& t) { return sum(mul(gelu(t.leaf(x)), t.leaf(gate))); }, params);
  EXPECT_EQ(res.analytic, 0.0);
  EXPECT_LT(res.max_rel_error, 1e-8);
}

TEST(CheckGradientsTest, NonFiniteFunctionRejected) {
  DArray x({1}, 1.0);
  DArray* params[] = {&x};
  EXPECT_THROW(check_gradients(
                   [&](Tape& t) { return scale(sum(t.leaf(x)), std::nan("")); }, params),
               EvaluationError);
}

TEST(CheckGradientsTest, CorruptedAdjointIsDetected) {
  Rng rng(12);
  auto x = random_array({5}, rng);
  DArray* params[] = {&x};
  // x³ recorded with the adjoint of x²
  auto bad_cube = [](Var v) {
    std::vector<double> out;
    for (double e : v.values()) out.push_back(e * e * e);
    const std::size_t id = v.id();
    return v.tape().record(v.shape(), out, {v},
                           [id](Tape& t, std::size_t, std::span<const double> g) {
                             auto xv = t.value(id);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               t.grad(id)[i] += 2.0 * xv[i] * g[i];
                           });
  };
  auto res = check_gradients([&](Tape& t) { return sum(bad_cube(t.leaf(x))); }, params);
  EXPECT_GT(res.max_rel_error, 1e-2);
}

}  // namespace
}  // namespace drdt3::nx
