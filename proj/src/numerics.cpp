// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "drdt3/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "drdt3/errors.hpp"

namespace drdt3::nx {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("array shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("array dimensions must be positive, got " + shape_str(shape));
  }
}

std::size_t rows_of(const Shape& s) { return s.size() == 1 ? 1 : s[0]; }
std::size_t cols_of(const Shape& s) { return s.back(); }

void require_matrix(const Shape& s, const char* op) {
  if (s.size() > 2) {
    throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " + shape_str(s));
  }
}

Shape mat(std::size_t r, std::size_t c) { return Shape{r, c}; }

}  // namespace

DArray::DArray(Shape shape, double fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  values_.assign(shape_numel(shape_), fill);
}

DArray::DArray(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  validate_shape(shape_);
  if (values_.size() != shape_numel(shape_)) {
    throw DimensionError("value count " + std::to_string(values_.size()) +
                         " does not match shape " + shape_str(shape_));
  }
}

DArray DArray::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return DArray(mat(rows, cols), std::vector<double>(values));
}

std::size_t DArray::rows() const { return rows_of(shape_); }
std::size_t DArray::cols() const { return cols_of(shape_); }

std::span<double> DArray::grad() const {
  if (!grad_) throw ContractError("gradient buffer not allocated for array " + shape_str(shape_));
  return *grad_;
}

void DArray::accumulate_grad(std::span<const double> g) const {
  if (g.size() != values_.size()) {
    throw DimensionError("gradient size does not match array " + shape_str(shape_));
  }
  if (!grad_) grad_.emplace(values_.size(), 0.0);
  auto& buf = *grad_;
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

void DArray::zero_grad() const { grad_.emplace(values_.size(), 0.0); }

const Shape& Var::shape() const { return tape_->shape(id_); }
std::size_t Var::numel() const { return tape_->value(id_).size(); }
std::size_t Var::rows() const { return rows_of(shape()); }
std::size_t Var::cols() const { return cols_of(shape()); }
std::span<const double> Var::values() const { return tape_->value(id_); }
double Var::operator()(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

double Var::item() const {
  if (numel() != 1) throw ContractError("item() on non-scalar " + shape_str(shape()));
  return values()[0];
}

Var Tape::leaf(const DArray& param) {
  if (auto it = leaf_ids_.find(&param); it != leaf_ids_.end()) return Var(this, it->second);
  Node n;
  n.shape = param.shape();
  n.value.assign(param.values().begin(), param.values().end());
  n.param = &param;
  n.needs_grad = param.requires_grad();
  nodes_.push_back(std::move(n));
  leaf_ids_.emplace(&param, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(DArray value) {
  Node n;
  n.shape = value.shape();
  n.value.assign(value.values().begin(), value.values().end());
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Shape shape, std::vector<double> values) {
  return constant(DArray(std::move(shape), std::move(values)));
}

Var Tape::record(Shape shape, std::vector<double> values, std::span<const Var> inputs,
                 Adjoint adjoint) {
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(values);
  for (const auto& in : inputs) {
    if (in.tape_ != this) throw ContractError("operand recorded on a different tape");
    n.needs_grad = n.needs_grad || nodes_[in.id_].needs_grad;
  }
  if (n.needs_grad) n.adjoint = std::move(adjoint);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss belongs to a different tape");
  if (nodes_[loss.id_].value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(nodes_[loss.id_].shape));
  }
  for (std::size_t i = 0; i <= loss.id_; ++i) {
    auto& n = nodes_[i];
    if (n.needs_grad) n.grad.assign(n.value.size(), 0.0);
  }
  if (!nodes_[loss.id_].needs_grad) return;
  nodes_[loss.id_].grad[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.needs_grad) continue;
    if (n.param) {
      n.param->accumulate_grad(n.grad);
    } else if (n.adjoint) {
      n.adjoint(*this, i, n.grad);
    }
  }
}

// ---------------------------------------------------------------------------
// primitives

Var matmul(Var a, Var b) {
  require_matrix(a.shape(), "matmul");
  require_matrix(b.shape(), "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(mat(m, n), std::move(out), {a, b},
                         [=](Tape& t, std::size_t, std::span<const double> g) {
                           auto av = t.value(ia);
                           auto bv = t.value(ib);
                           if (t.needs_grad(ia)) {
                             // dA = G Bᵀ
                             auto ga = t.grad(ia);
                             for (std::size_t i = 0; i < m; ++i) {
                               for (std::size_t p = 0; p < k; ++p) {
                                 double s = 0.0;
                                 const double* grow = g.data() + i * n;
                                 const double* brow = bv.data() + p * n;
                                 for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                                 ga[i * k + p] += s;
                               }
                             }
                           }
                           if (t.needs_grad(ib)) {
                             // dB = Aᵀ G
                             auto gb = t.grad(ib);
                             for (std::size_t i = 0; i < m; ++i) {
                               const double* grow = g.data() + i * n;
                               for (std::size_t p = 0; p < k; ++p) {
                                 const double x = av[i * k + p];
                                 double* gbrow = gb.data() + p * n;
                                 for (std::size_t j = 0; j < n; ++j) gbrow[j] += x * grow[j];
                               }
                             }
                           }
                         });
}

Var transpose(Var x) {
  require_matrix(x.shape(), "transpose");
  const std::size_t m = x.rows(), n = x.cols();
  auto xv = x.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  const std::size_t ix = x.id();
  return x.tape().record(mat(n, m), std::move(out), {x},
                         [=](Tape& t, std::size_t, std::span<const double> g) {
                           auto gx = t.grad(ix);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
                         });
}

namespace {

void require_same(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same(a, b, "add");
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.shape(), std::move(out), {a, b},
                         [=](Tape& t, std::size_t, std::span<const double> g) {
                           for (std::size_t in : {ia, ib}) {
                             if (!t.needs_grad(in)) continue;
                             auto gi = t.grad(in);
                             for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                           }
                         });
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.shape(), std::move(out), {a, b},
                         [=](Tape& t, std::size_t, std::span<const double> g) {
                           if (t.needs_grad(ia)) {
                             auto ga = t.grad(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           }
                           if (t.needs_grad(ib)) {
                             auto gb = t.grad(ib);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                           }
                         });
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.shape(), std::move(out), {a, b},
                         [=](Tape& t, std::size_t, std::span<const double> g) {
                           auto av = t.value(ia);
                           auto bv = t.value(ib);
                           if (t.needs_grad(ia)) {
                             auto ga = t.grad(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                           }
                           if (t.needs_grad(ib)) {
                             auto gb = t.grad(ib);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                           }
                         });
}

Var scale(Var x, double s) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * xv[i];
  const std::size_t ix = x.id();
  return x.tape().record(x.shape(), std::move(out), {x},
                         [=](Tape& t, std::size_t, std::span<const double> g) {
                           auto gx = t.grad(ix);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
                         });
}

Var add_scalar(Var x, double s) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + s;
  const std::size_t ix = x.id();
  return x.tape().record(x.shape(), std::move(out), {x},
                         [=](Tape& t, std::size_t, std::span<const double> g) {
                           auto gx = t.grad(ix);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                         });
}

Var add_row(Var x, Var bias) {
  require_matrix(x.shape(), "add_row");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_row: bias " + shape_str(bias.shape()) + " does not match rows of " +
                         shape_str(x.shape()));
  }
  auto xv = x.values(), bv = bias.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + bv[j];
  const std::size_t ix = x.id(), ib = bias.id();
  return x.tape().record(x.shape(), std::move(out), {x, bias},
                         [=](Tape& t, std::size_t, std::span<const double> g) {
                           if (t.needs_grad(ix)) {
                             auto gx = t.grad(ix);
                             for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                           }
                           if (t.needs_grad(ib)) {
                             auto gb = t.grad(ib);
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                           }
                         });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> ids, widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p.shape(), "concat_cols");
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row counts differ (" + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()) + ")");
    }
    ids.push_back(p.id());
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].values();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.data() + i * widths[k], widths[k], out.data() + i * total + off);
    off += widths[k];
  }
  return parts[0].tape().record(
      mat(m, total), std::move(out), parts,
      [=](Tape& t, std::size_t, std::span<const double> g) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (t.needs_grad(ids[k])) {
            auto gp = t.grad(ids[k]);
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < widths[k]; ++j)
                gp[i * widths[k] + j] += g[i * total + off + j];
          }
          off += widths[k];
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  const std::size_t n = parts[0].cols();
  std::vector<std::size_t> ids, sizes;
  std::size_t total_rows = 0;
  for (const auto& p : parts) {
    require_matrix(p.shape(), "concat_rows");
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column counts differ (" + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()) + ")");
    }
    ids.push_back(p.id());
    sizes.push_back(p.numel());
    total_rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(total_rows * n);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return parts[0].tape().record(mat(total_rows, n), std::move(out), parts,
                                [=](Tape& t, std::size_t, std::span<const double> g) {
                                  std::size_t off = 0;
                                  for (std::size_t k = 0; k < ids.size(); ++k) {
                                    if (t.needs_grad(ids[k])) {
                                      auto gp = t.grad(ids[k]);
                                      for (std::size_t i = 0; i < sizes[k]; ++i)
                                        gp[i] += g[off + i];
                                    }
                                    off += sizes[k];
                                  }
                                });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  require_matrix(x.shape(), "slice_rows");
  const std::size_t n = x.cols();
  if (count == 0 || begin + count > x.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_str(x.shape()));
  }
  auto xv = x.values();
  std::vector<double> out(xv.begin() + begin * n, xv.begin() + (begin + count) * n);
  const std::size_t ix = x.id();
  return x.tape().record(mat(count, n), std::move(out), {x},
                         [=](Tape& t, std::size_t, std::span<const double> g) {
                           auto gx = t.grad(ix);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[begin * n + i] += g[i];
                         });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  require_matrix(x.shape(), "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (count == 0 || begin + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_str(x.shape()));
  }
  auto xv = x.values();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(xv.data() + i * n + begin, count, out.data() + i * count);
  const std::size_t ix = x.id();
  return x.tape().record(mat(m, count), std::move(out), {x},
                         [=](Tape& t, std::size_t, std::span<const double> g) {
                           auto gx = t.grad(ix);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < count; ++j)
                               gx[i * n + begin + j] += g[i * count + j];
                         });
}

Var gather_rows(Var table, std::span<const std::size_t> indices) {
  require_matrix(table.shape(), "gather_rows");
  const std::size_t v = table.rows(), n = table.cols();
  if (indices.empty()) throw DimensionError("gather_rows: empty index list");
  for (auto idx : indices) {
    if (idx >= v) {
      throw RangeError("gather_rows: index " + std::to_string(idx) + " outside table of " +
                       std::to_string(v) + " rows");
    }
  }
  auto tv = table.values();
  std::vector<double> out(indices.size() * n);
  for (std::size_t k = 0; k < indices.size(); ++k)
    std::copy_n(tv.data() + indices[k] * n, n, out.data() + k * n);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const std::size_t it = table.id();
  return table.tape().record(mat(idx.size(), n), std::move(out), {table},
                             [=](Tape& t, std::size_t, std::span<const double> g) {
                               auto gt = t.grad(it);
                               for (std::size_t k = 0; k < idx.size(); ++k)
                                 for (std::size_t j = 0; j < n; ++j)
                                   gt[idx[k] * n + j] += g[k * n + j];
                             });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  const std::size_t ix = x.id();
  return x.tape().record(Shape{1}, {s}, {x}, [=](Tape& t, std::size_t, std::span<const double> g) {
    auto gx = t.grad(ix);
    for (auto& v : gx) v += g[0];
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.values()) s += v;
  const std::size_t ix = x.id();
  return x.tape().record(Shape{1}, {s / n}, {x},
                         [=](Tape& t, std::size_t, std::span<const double> g) {
                           auto gx = t.grad(ix);
                           for (auto& v : gx) v += g[0] / n;
                         });
}

Var abs(Var x) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(xv[i]);
  const std::size_t ix = x.id();
  return x.tape().record(x.shape(), std::move(out), {x},
                         [=](Tape& t, std::size_t, std::span<const double> g) {
                           auto xv = t.value(ix);
                           auto gx = t.grad(ix);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             const double s = xv[i] > 0.0 ? 1.0 : (xv[i] < 0.0 ? -1.0 : 0.0);
                             gx[i] += s * g[i];
                           }
                         });
}

Var square(Var x) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * xv[i];
  const std::size_t ix = x.id();
  return x.tape().record(x.shape(), std::move(out), {x},
                         [=](Tape& t, std::size_t, std::span<const double> g) {
                           auto xv = t.value(ix);
                           auto gx = t.grad(ix);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * xv[i] * g[i];
                         });
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

Var gelu(Var x) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * normal_cdf(xv[i]);
  const std::size_t ix = x.id();
  return x.tape().record(
      x.shape(), std::move(out), {x}, [=](Tape& t, std::size_t, std::span<const double> g) {
        constexpr double inv_sqrt_2pi = 0.3989422804014326779399460599343818684758586311649;
        auto xv = t.value(ix);
        auto gx = t.grad(ix);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double v = xv[i];
          const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
          gx[i] += g[i] * (normal_cdf(v) + v * pdf);
        }
      });
}

Var softmax_rows(Var x) {
  require_matrix(x.shape(), "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  auto xv = x.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(row[j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  const std::size_t ix = x.id();
  return x.tape().record(x.shape(), std::move(out), {x},
                         [=](Tape& t, std::size_t self, std::span<const double> g) {
                           auto y = t.value(self);
                           auto gx = t.grad(ix);
                           for (std::size_t i = 0; i < m; ++i) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
                             for (std::size_t j = 0; j < n; ++j)
                               gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
                           }
                         });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_matrix(x.shape(), "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " do not match last dimension of " +
                         shape_str(x.shape()));
  }
  auto xv = x.values(), gv = gain.values(), bv = bias.values();
  std::vector<double> out(m * n);
  // normalized values and inverse std, reused by the adjoint
  std::vector<double> xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = gv[j] * xhat[i * n + j] + bv[j];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().record(
      x.shape(), std::move(out), {x, gain, bias},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t,
                                                                std::span<const double> g) {
        auto gv = t.value(ig);
        if (t.needs_grad(ig)) {
          auto gg = t.grad(ig);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * xhat[i * n + j];
        }
        if (t.needs_grad(ib)) {
          auto gb = t.grad(ib);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        }
        if (t.needs_grad(ix)) {
          auto gx = t.grad(ix);
          const double dn = static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxhat = g[i * n + j] * gv[j];
              s1 += dxhat;
              s2 += dxhat * xhat[i * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
              const double dxhat = g[i * n + j] * gv[j];
              gx[i * n + j] += inv_std[i] * (dxhat - s1 / dn - xhat[i * n + j] * s2 / dn);
            }
          }
        }
      });
}

Var add_outer(Var w, Var u, Var v, double alpha) {
  require_matrix(w.shape(), "add_outer");
  const std::size_t m = w.rows(), n = w.cols();
  if (u.numel() != m || v.numel() != n) {
    throw DimensionError("add_outer: " + shape_str(u.shape()) + " x " + shape_str(v.shape()) +
                         " does not match " + shape_str(w.shape()));
  }
  auto wv = w.values(), uv = u.values(), vv = v.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = wv[i * n + j] + alpha * uv[i] * vv[j];
  const std::size_t iw = w.id(), iu = u.id(), iv = v.id();
  return w.tape().record(w.shape(), std::move(out), {w, u, v},
                         [=](Tape& t, std::size_t, std::span<const double> g) {
                           auto uv = t.value(iu);
                           auto vv = t.value(iv);
                           if (t.needs_grad(iw)) {
                             auto gw = t.grad(iw);
                             for (std::size_t i = 0; i < g.size(); ++i) gw[i] += g[i];
                           }
                           if (t.needs_grad(iu)) {
                             auto gu = t.grad(iu);
                             for (std::size_t i = 0; i < m; ++i) {
                               double s = 0.0;
                               for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * vv[j];
                               gu[i] += alpha * s;
                             }
                           }
                           if (t.needs_grad(iv)) {
                             auto gvv = t.grad(iv);
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j)
                                 gvv[j] += alpha * g[i * n + j] * uv[i];
                           }
                         });
}

// ---------------------------------------------------------------------------

GradCheckResult check_gradients(const std::function<Var(Tape&)>& f,
                                std::span<DArray* const> params, double step, double floor) {
  if (!(step > 0.0)) throw ArgumentError("check_gradients: step must be positive");
  auto evaluate = [&]() {
    Tape tape;
    const double v = f(tape).item();
    if (!std::isfinite(v)) throw EvaluationError("check_gradients: function value is not finite");
    return v;
  };

  std::vector<bool> saved_flags;
  for (auto* p : params) {
    saved_flags.push_back(p->requires_grad());
    p->set_requires_grad(true);
    p->zero_grad();
  }
  {
    Tape tape;
    Var loss = f(tape);
    if (!std::isfinite(loss.item())) {
      throw EvaluationError("check_gradients: function value is not finite");
    }
    tape.backward(loss);
  }

  GradCheckResult worst;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    DArray& p = *params[pi];
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    for (std::size_t c = 0; c < p.numel(); ++c) {
      const double saved = p[c];
      p[c] = saved + step;
      const double fp = evaluate();
      p[c] = saved - step;
      const double fm = evaluate();
      p[c] = saved;
      const double numeric = (fp - fm) / (2.0 * step);
      const double denom = std::max({std::fabs(analytic[c]), std::fabs(numeric), floor});
      const double rel = std::fabs(analytic[c] - numeric) / denom;
      if (rel > worst.max_rel_error || (pi == 0 && c == 0)) {
        worst = {rel, pi, c, analytic[c], numeric};
      }
    }
  }
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    params[pi]->clear_grad();
    params[pi]->set_requires_grad(saved_flags[pi]);
  }
  return worst;
}

}  // namespace drdt3::nx
