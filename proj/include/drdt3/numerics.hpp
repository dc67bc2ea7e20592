// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiable dense arrays.
//
// A Tape records primitive operations in execution order; Var is a cheap
// handle to one recorded node. Learnable parameters live in DArray objects
// outside the tape and enter a computation through Tape::leaf(); backward()
// accumulates into their grad buffers. Everything is double precision and
// row-major. Operations work on rank-1 (treated as a single row) and rank-2
// arrays; the only broadcasting is add_row().

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace drdt3::nx {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class DArray {
 public:
  DArray() = default;
  explicit DArray(Shape shape, double fill = 0.0);
  DArray(Shape shape, std::vector<double> values);

  static DArray matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return values_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  // The gradient buffer is an accumulation cache, not part of the value, so it
  // stays writable through const references (forward passes take parameters
  // by const&; backward still needs somewhere to put adjoints).
  bool has_grad() const { return grad_.has_value(); }
  std::span<double> grad() const;
  void accumulate_grad(std::span<const double> g) const;
  void zero_grad() const;
  void clear_grad() const { grad_.reset(); }

 private:
  Shape shape_;
  std::vector<double> values_;
  bool requires_grad_ = false;
  mutable std::optional<std::vector<double>> grad_;
};

class Tape;

/// Handle to a node on a Tape. Valid for the tape's lifetime.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t rows() const;
  std::size_t cols() const;
  std::span<const double> values() const;
  double operator()(std::size_t r, std::size_t c) const;
  /// Value of a single-element node.
  double item() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Propagates the adjoint of node `self` (passed as `out_grad`) into the
  /// adjoints of its inputs.
  using Adjoint =
      std::function<void(Tape&, std::size_t self, std::span<const double> out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Binds a parameter. Repeated calls with the same object return the same
  /// node, so batched forward passes share one leaf per parameter.
  Var leaf(const DArray& param);
  Var constant(DArray value);
  Var constant(Shape shape, std::vector<double> values);

  /// Appends a node. The adjoint is dropped when no input needs gradients.
  Var record(Shape shape, std::vector<double> values, std::span<const Var> inputs,
             Adjoint adjoint);
  Var record(Shape shape, std::vector<double> values, std::initializer_list<Var> inputs,
             Adjoint adjoint) {
    return record(std::move(shape), std::move(values),
                  std::span<const Var>(inputs.begin(), inputs.size()), std::move(adjoint));
  }

  /// Reverse sweep from a single-element loss. Node adjoints are recomputed
  /// from scratch each call; leaf gradients accumulate.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  const Shape& shape(std::size_t id) const { return nodes_[id].shape; }
  std::span<const double> value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Adjoint buffer of a node; only meaningful inside backward().
  std::span<double> grad(std::size_t id) { return nodes_[id].grad; }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    Adjoint adjoint;
    const DArray* param = nullptr;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const DArray*, std::size_t> leaf_ids_;
};

// Primitives. Every one records an adjoint.

Var matmul(Var a, Var b);
Var transpose(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double s);
Var add_scalar(Var x, double s);
/// x (m×n) plus a length-n bias added to every row.
Var add_row(Var x, Var bias);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
/// Embedding lookup: row `indices[k]` of `table` becomes output row k.
Var gather_rows(Var table, std::span<const std::size_t> indices);
Var sum(Var x);
Var mean(Var x);
/// |x|, with d|x|/dx := 0 at x = 0.
Var abs(Var x);
Var square(Var x);
/// Exact GELU x·Φ(x).
Var gelu(Var x);
Var softmax_rows(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// w + alpha · u vᵀ with w m×n, numel(u) = m, numel(v) = n.
Var add_outer(Var w, Var u, Var v, double alpha);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var x) { return scale(x, s); }

inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}
inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}

/// Worst coordinate found by check_gradients().
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t param_index = 0;
  std::size_t coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences, coordinate by coordinate.
///
/// `f` must build its computation on the tape it is given and read the
/// current contents of `params`. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor); the floor keeps
/// coordinates whose true gradient is zero from reporting roundoff as error.
/// Existing gradients on `params` are cleared. Throws EvaluationError when f
/// is not finite.
GradCheckResult check_gradients(const std::function<Var(Tape&)>& f,
                                std::span<DArray* const> params, double step = 1e-5,
                                double floor = 1e-6);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace drdt3::nx
