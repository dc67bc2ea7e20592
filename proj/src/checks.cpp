// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "drdt3/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "drdt3/config.hpp"
#include "drdt3/diffusion.hpp"
#include "drdt3/dt3.hpp"
#include "drdt3/envdata.hpp"
#include "drdt3/errors.hpp"
#include "drdt3/policy.hpp"
#include "drdt3/training.hpp"

namespace drdt3::checks {

using nx::DArray;
using nx::Shape;
using nx::Tape;
using nx::Var;

namespace {

DArray random_array(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  DArray a(std::move(shape));
  for (auto& v : a.values()) v = rng.uniform(lo, hi);
  a.set_requires_grad(true);
  return a;
}

void scramble(ParamList params, Rng& rng, double scale) {
  for (auto& p : params)
    for (auto& v : p.array->values()) v = rng.uniform(-scale, scale);
}

std::string describe(const nx::GradCheckResult& r, const std::string& param) {
  char buf[192];
  std::snprintf(buf, sizeof buf, "worst at %s[%zu]: analytic %.6g vs numeric %.6g", param.c_str(),
                r.coord, r.analytic, r.numeric);
  return buf;
}

using OpFn = std::function<Var(std::vector<Var>&)>;

/// sum(op(inputs) ⊙ R) over several random draws; the worst relative error.
double primitive_error(const std::vector<Shape>& shapes, const OpFn& op, std::uint64_t seed,
                       std::string& detail) {
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<DArray> inputs;
    for (const auto& s : shapes) inputs.push_back(random_array(s, rng));
    DArray weights;
    {
      Tape probe;
      std::vector<Var> vars;
      for (auto& in : inputs) vars.push_back(probe.leaf(in));
      weights = random_array(op(vars).shape(), rng);
    }
    std::vector<DArray*> params;
    for (auto& in : inputs) params.push_back(&in);
    const auto r = nx::check_gradients(
        [&](Tape& t) {
          std::vector<Var> vars;
          for (auto& in : inputs) vars.push_back(t.leaf(in));
          return nx::sum(nx::mul(op(vars), t.constant(weights)));
        },
        params);
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      detail = describe(r, "input" + std::to_string(r.param_index));
    }
  }
  return worst;
}

CheckCase primitive(std::string op_name, std::vector<Shape> shapes, OpFn op) {
  std::uint64_t seed = 1469598103934665603ULL;  // FNV-1a of the name
  for (unsigned char ch : op_name) seed = (seed ^ ch) * 1099511628211ULL;
  return {"numerics", "grad " + op_name, 1e-4,
          [shapes = std::move(shapes), op = std::move(op), seed](std::string& d) {
            return primitive_error(shapes, op, seed, d);
          }};
}

std::vector<CheckCase> numerics_cases() {
  return {
      primitive("matmul", {{3, 4}, {4, 2}}, [](auto& in) { return nx::matmul(in[0], in[1]); }),
      primitive("transpose", {{3, 4}}, [](auto& in) { return nx::transpose(in[0]); }),
      primitive("add", {{2, 3}, {2, 3}}, [](auto& in) { return nx::add(in[0], in[1]); }),
      primitive("sub", {{2, 3}, {2, 3}}, [](auto& in) { return nx::sub(in[0], in[1]); }),
      primitive("mul", {{2, 3}, {2, 3}}, [](auto& in) { return nx::mul(in[0], in[1]); }),
      primitive("scale", {{2, 3}}, [](auto& in) { return nx::scale(in[0], -1.7); }),
      primitive("add_scalar", {{2, 3}}, [](auto& in) { return nx::add_scalar(in[0], 0.3); }),
      primitive("add_row", {{3, 4}, {4}}, [](auto& in) { return nx::add_row(in[0], in[1]); }),
      primitive("concat_cols", {{2, 3}, {2, 1}},
                [](auto& in) { return nx::concat_cols({in[0], in[1]}); }),
      primitive("concat_rows", {{2, 3}, {1, 3}},
                [](auto& in) { return nx::concat_rows({in[0], in[1]}); }),
      primitive("slice_rows", {{4, 3}}, [](auto& in) { return nx::slice_rows(in[0], 1, 2); }),
      primitive("slice_cols", {{3, 5}}, [](auto& in) { return nx::slice_cols(in[0], 2, 2); }),
      primitive("gather_rows", {{4, 3}},
                [](auto& in) {
                  const std::size_t idx[] = {2, 0, 2, 3};
                  return nx::gather_rows(in[0], idx);
                }),
      primitive("sum", {{2, 3}}, [](auto& in) { return nx::sum(in[0]); }),
      primitive("mean", {{2, 3}}, [](auto& in) { return nx::mean(in[0]); }),
      primitive("abs", {{2, 3}}, [](auto& in) { return nx::abs(in[0]); }),
      primitive("square", {{2, 3}}, [](auto& in) { return nx::square(in[0]); }),
      primitive("gelu", {{2, 3}}, [](auto& in) { return nx::gelu(in[0]); }),
      primitive("softmax_rows", {{2, 4}}, [](auto& in) { return nx::softmax_rows(in[0]); }),
      primitive("layer_norm", {{3, 5}, {5}, {5}},
                [](auto& in) { return nx::layer_norm(in[0], in[1], in[2]); }),
      primitive("add_outer", {{3, 4}, {3, 1}, {1, 4}},
                [](auto& in) { return nx::add_outer(in[0], in[1], in[2], -0.8); }),
  };
}

// ---- dt3 --------------------------------------------------------------------

dt3::ModelConfig small_model(std::size_t heads = 1, std::size_t rank = 0) {
  dt3::ModelConfig c;
  c.state_dim = 3;
  c.action_dim = 2;
  c.embed_dim = 8;
  c.max_episode_len = 32;
  c.inner_lr = 0.1;
  c.n_heads = heads;
  c.ttt_proj_rank = rank;
  return c;
}

dt3::ContextWindow random_context(std::size_t k, std::size_t real, std::size_t t0, Rng& rng,
                                  const dt3::ModelConfig& c) {
  auto ctx = dt3::ContextWindow::empty(k, c.state_dim, c.action_dim);
  for (std::size_t t = k - real; t < k; ++t) {
    ctx.pad_mask[t] = true;
    ctx.timesteps[t] = t0 + (t - (k - real));
    ctx.rtgs[t] = rng.uniform(-1, 1);
    for (std::size_t j = 0; j < c.state_dim; ++j) ctx.states[t * c.state_dim + j] = rng.normal();
    for (std::size_t j = 0; j < c.action_dim; ++j)
      ctx.actions[t * c.action_dim + j] = rng.uniform(-1, 1);
  }
  return ctx;
}

double dt3_gradient_error(const dt3::ModelConfig& cfg, std::string& detail) {
  Rng rng(18);
  auto p = dt3::DT3Params::init(cfg, rng);
  scramble(p.parameters(), rng, 0.4);
  const std::vector<dt3::ContextWindow> batch = {random_context(3, 3, 0, rng, cfg),
                                                 random_context(3, 2, 4, rng, cfg)};
  const DArray target = random_array({3, cfg.action_dim}, rng);
  auto named = p.parameters();
  std::vector<DArray*> params;
  for (auto& np : named) params.push_back(np.array);
  const auto r = nx::check_gradients(
      [&](Tape& t) {
        Var total;
        for (const auto& ctx : batch) {
          Var term = nx::sum(nx::square(dt3::predict_coarse_actions(t, ctx, p) - t.constant(target)));
          total = total.valid() ? total + term : term;
        }
        return total;
      },
      params);
  detail = describe(r, named[r.param_index].name);
  return r.max_rel_error;
}

dt3::TTTLinearLayer random_ttt(std::size_t d, double lr, Rng& rng) {
  dt3::TTTLinearLayer layer;
  layer.w0 = random_array({d, d}, rng, -1, 1);
  layer.theta_q.full = random_array({d, d}, rng, -1, 1);
  layer.theta_k.full = random_array({d, d}, rng, -1, 1);
  layer.theta_v.full = random_array({d, d}, rng, -1, 1);
  layer.inner_lr = lr;
  return layer;
}

double matvec_row(const DArray& m, std::size_t i, const std::vector<double>& x) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += m(i, j) * x[j];
  return s;
}

/// ‖W θ_K x − θ_V x‖² in plain loops.
double reconstruction_loss(const DArray& w, const dt3::TTTLinearLayer& layer,
                           const std::vector<double>& x) {
  const std::size_t d = x.size();
  std::vector<double> k(d), v(d);
  for (std::size_t i = 0; i < d; ++i) {
    k[i] = matvec_row(layer.theta_k.full, i, x);
    v[i] = matvec_row(layer.theta_v.full, i, x);
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double r = matvec_row(w, i, k) - v[i];
    loss += r * r;
  }
  return loss;
}

/// Largest ℓ(W_t; x_t) − ℓ(W_{t−1}; x_t) over 1000 unit-norm tokens.
double ttt_descent_violation(double lr, std::string& detail) {
  Rng rng(10);
  const std::size_t d = 8, len = 1000;
  const auto layer = random_ttt(d, lr, rng);
  DArray x({len, d});
  for (std::size_t r = 0; r < len; ++r) {
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) norm += (x(r, j) = rng.normal()) * x(r, j);
    for (std::size_t j = 0; j < d; ++j) x(r, j) /= std::sqrt(norm);
  }
  Tape t;
  std::vector<DArray> fast;
  dt3::ttt_forward(t, t.constant(x), layer, std::vector<bool>(len, true), &fast);
  double worst = -std::numeric_limits<double>::infinity();
  const DArray* prev = &layer.w0;
  for (std::size_t r = 0; r < len; ++r) {
    const std::vector<double> xr(x.values().begin() + r * d, x.values().begin() + (r + 1) * d);
    const double diff = reconstruction_loss(fast[r], layer, xr) - reconstruction_loss(*prev, layer, xr);
    if (diff > worst) {
      worst = diff;
      detail = "token " + std::to_string(r);
    }
    prev = &fast[r];
  }
  return std::max(worst, 0.0);
}

std::vector<CheckCase> dt3_cases() {
  std::vector<CheckCase> out;
  out.push_back({"dt3", "grad dt3 model with inner loop", 1e-3,
                 [](std::string& d) { return dt3_gradient_error(small_model(), d); }});
  out.push_back({"dt3", "grad dt3 multi-head low-rank", 1e-3,
                 [](std::string& d) { return dt3_gradient_error(small_model(2, 2), d); }});
  out.push_back({"dt3", "ttt inner_lr=0 is a fixed linear map", 0.0, [](std::string&) {
                   Rng rng(9);
                   const std::size_t d = 8, len = 7;
                   const auto layer = random_ttt(d, 0.0, rng);
                   const DArray x = random_array({len, d}, rng);
                   Tape t;
                   Var z = dt3::ttt_forward(t, t.constant(x), layer, std::vector<bool>(len, true));
                   double err = 0.0;
                   for (std::size_t r = 0; r < len; ++r) {
                     const std::vector<double> xr(x.values().begin() + r * d,
                                                  x.values().begin() + (r + 1) * d);
                     std::vector<double> q(d);
                     for (std::size_t i = 0; i < d; ++i) q[i] = matvec_row(layer.theta_q.full, i, xr);
                     for (std::size_t i = 0; i < d; ++i)
                       err = std::max(err, std::fabs(z(r, i) - matvec_row(layer.w0, i, q)));
                   }
                   return err;
                 }});
  for (double lr : {1e-2, 1e-3}) {
    char name[64];
    std::snprintf(name, sizeof name, "ttt inner step descends (inner_lr=%g)", lr);
    out.push_back({"dt3", name, 0.0, [lr](std::string& d) { return ttt_descent_violation(lr, d); }});
  }
  out.push_back({"dt3", "ttt scalar case W1 = 2*inner_lr", 1e-12, [](std::string&) {
                   dt3::TTTLinearLayer layer;
                   layer.w0 = learnable({1, 1}, 0.0);
                   layer.theta_q.full = learnable({1, 1}, 1.0);
                   layer.theta_k.full = learnable({1, 1}, 1.0);
                   layer.theta_v.full = learnable({1, 1}, 1.0);
                   layer.inner_lr = 0.37;
                   Tape t;
                   std::vector<DArray> fast;
                   dt3::ttt_forward(t, t.constant(DArray({1, 1}, 1.0)), layer, {true}, &fast);
                   return std::fabs(fast.at(0)[0] - 2.0 * 0.37);
                 }});
  out.push_back({"dt3", "future tokens never change past outputs", 0.0, [](std::string& d) {
                   Rng rng(15);
                   const auto cfg = small_model(2);
                   auto p = dt3::DT3Params::init(cfg, rng);
                   scramble(p.parameters(), rng, 0.5);
                   const auto ctx = random_context(6, 6, 0, rng, cfg);
                   const auto base = dt3::predict_coarse_actions(ctx, p);
                   double err = 0.0;
                   for (std::size_t step = 0; step < 6; ++step) {
                     auto mod = ctx;
                     mod.rtgs[step] += 3.0;
                     mod.states[step * cfg.state_dim] -= 2.0;
                     mod.actions[step * cfg.action_dim + 1] += 0.9;
                     const auto out = dt3::predict_coarse_actions(mod, p);
                     for (std::size_t i = 0; i < step * cfg.action_dim; ++i) {
                       if (std::fabs(out[i] - base[i]) > err) {
                         err = std::fabs(out[i] - base[i]);
                         d = "perturbed step " + std::to_string(step);
                       }
                     }
                   }
                   return err;
                 }});
  out.push_back({"dt3", "real-step outputs invariant to padding", 1e-10, [](std::string& d) {
                   Rng rng(14);
                   const auto cfg = small_model(2, 3);
                   auto p = dt3::DT3Params::init(cfg, rng);
                   scramble(p.parameters(), rng, 0.5);
                   const std::size_t real = 3;
                   const auto base = random_context(real, real, 5, rng, cfg);
                   const auto ref = dt3::predict_coarse_actions(base, p);
                   double err = 0.0;
                   for (std::size_t pad = 0; pad <= 3; ++pad) {
                     auto ctx = dt3::ContextWindow::empty(real + pad, cfg.state_dim, cfg.action_dim);
                     for (std::size_t t = 0; t < real; ++t) {
                       const std::size_t dst = pad + t;
                       ctx.pad_mask[dst] = true;
                       ctx.timesteps[dst] = base.timesteps[t];
                       ctx.rtgs[dst] = base.rtgs[t];
                       std::copy_n(base.states.begin() + t * cfg.state_dim, cfg.state_dim,
                                   ctx.states.begin() + dst * cfg.state_dim);
                       std::copy_n(base.actions.begin() + t * cfg.action_dim, cfg.action_dim,
                                   ctx.actions.begin() + dst * cfg.action_dim);
                     }
                     const auto out = dt3::predict_coarse_actions(ctx, p);
                     for (std::size_t i = 0; i < ref.size(); ++i) {
                       if (std::fabs(out[pad * cfg.action_dim + i] - ref[i]) > err) {
                         err = std::fabs(out[pad * cfg.action_dim + i] - ref[i]);
                         d = "padding " + std::to_string(pad);
                       }
                     }
                   }
                   return err;
                 }});
  return out;
}

// ---- diffusion --------------------------------------------------------------

double noise_gradient_error(diffusion::NoiseVariant v, std::string& detail) {
  Rng rng(12);
  diffusion::NoiseConfig c;
  c.action_dim = 2;
  c.time_embed_dim = 4;
  c.hidden_dim = 6;
  c.expansion = 2;
  c.variant = v;
  auto p = diffusion::NoiseApproximatorParams::init(c, rng);
  scramble(p.parameters(), rng, 0.5);
  const auto s = diffusion::vp_schedule(3, 0.1, 10.0);
  const DArray a0 = random_array({4, 2}, rng), eps = random_array({4, 2}, rng);
  DArray cond = random_array({4, 2}, rng);
  const std::vector<std::size_t> steps = {1, 2, 3, 2};
  auto named = p.parameters();
  std::vector<DArray*> params = {&cond};
  for (auto& np : named) params.push_back(np.array);
  const auto r = nx::check_gradients(
      [&](Tape& t) { return diffusion::diffusion_loss(t, a0, t.leaf(cond), steps, eps, p, s); },
      params);
  detail = describe(r, r.param_index == 0 ? "cond" : named[r.param_index - 1].name);
  return r.max_rel_error;
}

std::vector<CheckCase> diffusion_cases() {
  std::vector<CheckCase> out;
  for (auto v : {diffusion::NoiseVariant::kFull, diffusion::NoiseVariant::kNoAdaLN,
                 diffusion::NoiseVariant::kNoGatedMLP, diffusion::NoiseVariant::kNoBoth}) {
    out.push_back({"diffusion", "grad noise approximator (" + std::string(to_string(v)) + ")", 1e-3,
                   [v](std::string& d) { return noise_gradient_error(v, d); }});
  }
  out.push_back({"diffusion", "single-step round trip recovers a0", 1e-12, [](std::string& d) {
                   Rng rng(5);
                   double err = 0.0;
                   for (double beta : {0.01, 0.3, 0.9, 0.999}) {
                     const auto s = diffusion::vp_schedule(1, beta, beta);
                     for (int trial = 0; trial < 20; ++trial) {
                       const std::vector<double> a0 = {rng.normal(), rng.normal()},
                                                 eps = {rng.normal(), rng.normal()};
                       const auto a1 = diffusion::forward_noise(a0, 1, eps, s);
                       const auto back =
                           diffusion::reverse_update(a1, eps, 1, s, std::vector<double>{0, 0}, false);
                       for (std::size_t j = 0; j < 2; ++j) {
                         if (std::fabs(back[j] - a0[j]) > err) {
                           err = std::fabs(back[j] - a0[j]);
                           d = "beta " + std::to_string(beta);
                         }
                       }
                     }
                   }
                   return err;
                 }});
  out.push_back({"diffusion", "zero-prediction chain telescopes to a_N/sqrt(alpha_bar_N)", 1e-10,
                 [](std::string& d) {
                   Rng rng(6);
                   double err = 0.0;
                   for (std::size_t n : {1u, 5u, 20u}) {
                     const auto s = diffusion::vp_schedule(n, 0.1, 10.0);
                     const std::vector<double> zero = {0.0, 0.0};
                     const std::vector<double> a_n = {rng.normal(), rng.normal()};
                     auto a = a_n;
                     for (std::size_t i = n; i >= 1; --i)
                       a = diffusion::reverse_update(a, zero, i, s, zero, false);
                     for (std::size_t j = 0; j < 2; ++j) {
                       const double want = a_n[j] / std::sqrt(s.alpha_bar_at(n));
                       // relative, the chain amplifies by 1/sqrt(alpha_bar_N)
                       const double e = std::fabs(a[j] - want) / std::max(1.0, std::fabs(want));
                       if (e > err) {
                         err = e;
                         d = "N=" + std::to_string(n);
                       }
                     }
                   }
                   return err;
                 }});
  out.push_back({"diffusion", "vp schedule invariants over config grid", 1e-15, [](std::string& d) {
                   double err = 0.0;
                   for (std::size_t n : {1u, 5u, 20u}) {
                     for (auto [lo, hi] : {std::pair{0.1, 10.0}, std::pair{1.0, 1.0}}) {
                       const auto s = diffusion::vp_schedule(n, lo, hi);
                       double prod = 1.0;
                       for (std::size_t i = 1; i <= n; ++i) {
                         prod *= s.alpha_at(i);
                         double e = std::max(std::fabs(s.beta_at(i) + s.alpha_at(i) - 1.0),
                                             std::fabs(s.alpha_bar_at(i) - prod));
                         if (!(s.beta_at(i) > 0.0 && s.beta_at(i) < 1.0)) e = 1.0;
                         if (i > 1 && !(s.alpha_bar_at(i) < s.alpha_bar_at(i - 1))) e = 1.0;
                         if (e > err) {
                           err = e;
                           d = "N=" + std::to_string(n) + " step " + std::to_string(i);
                         }
                       }
                     }
                   }
                   return err;
                 }});
  return out;
}

// ---- training ---------------------------------------------------------------

TrainConfig tiny_train_config() {
  TrainConfig c;
  c.embed_dim = 8;
  c.context_len = 3;
  c.diffusion_steps = 3;
  c.batch_size = 4;
  c.noise_hidden_dim = 8;
  c.time_embed_dim = 4;
  c.mlp_expansion = 2;
  c.epochs = 1;
  c.updates_per_epoch = 10;
  c.eval_episodes = 0;
  return c;
}

const envdata::TrajectoryStore& smoke_store() {
  static const auto store = envdata::generate_dataset(envdata::kPointReach, "medium", 2, 3);
  return store;
}

std::vector<CheckCase> training_cases() {
  std::vector<CheckCase> out;
  out.push_back({"training", "grad unified loss (4 windows, d=8, K=3, N=3)", 1e-3,
                 [](std::string& d) {
                   const auto c = tiny_train_config();
                   Rng rng(21);
                   auto bundle = PolicyBundle::create(c, envdata::env_spec(envdata::kPointReach),
                                                      Normalizer::from_store(smoke_store()), rng);
                   auto named = bundle.parameters();
                   scramble(named, rng, 0.5);
                   const auto batch = training::sample_batch(smoke_store(), bundle, 4, rng);
                   std::vector<DArray*> params;
                   for (auto& np : named) params.push_back(np.array);
                   const auto r = nx::check_gradients(
                       [&](Tape& t) { return training::compute_losses(t, batch, bundle).l_total; },
                       params);
                   d = describe(r, named[r.param_index].name);
                   return r.max_rel_error;
                 }});
  for (auto norm : {LossNorm::kL1, LossNorm::kL2}) {
    out.push_back({"training", "grad dt3 loss (" + std::string(to_string(norm)) + ")", 1e-4,
                   [norm](std::string& d) {
                     Rng rng(4);
                     DArray pred = random_array({3, 2}, rng);
                     const DArray target = random_array({3, 2}, rng);
                     std::vector<DArray*> params{&pred};
                     const auto r = nx::check_gradients(
                         [&](Tape& t) {
                           return training::dt3_loss(t.leaf(pred), t.constant(target),
                                                     {false, true, true}, 1.5, norm);
                         },
                         params);
                     d = describe(r, "prediction");
                     return r.max_rel_error;
                   }});
  }
  out.push_back({"training", "logged loss equals l_diff + zeta*l_dt3", 1e-12, [](std::string& d) {
                   const auto c = tiny_train_config();
                   training::Trainer tr(c, smoke_store());
                   tr.run_epoch();
                   double err = 0.0;
                   for (const auto& u : tr.log().updates) {
                     const double e =
                         std::fabs(u.l_total - training::unified_loss(u.l_diff, u.l_dt3, c.zeta));
                     if (e >= err) {
                       err = e;
                       d = "update " + std::to_string(u.update);
                     }
                   }
                   return err;
                 }});
  out.push_back({"training", "both parameter groups get gradients at update 1", 0.0,
                 [](std::string& d) {
                   training::Trainer tr(tiny_train_config(), smoke_store());
                   tr.step();
                   double dt3 = 0.0, noise = 0.0;
                   for (auto& p : tr.parameters()) {
                     if (!p.array->has_grad()) continue;
                     double& acc = p.name.starts_with("noise.") ? noise : dt3;
                     for (double g : p.array->grad()) acc += g * g;
                   }
                   d = "|g_dt3| " + std::to_string(std::sqrt(dt3)) + ", |g_noise| " +
                       std::to_string(std::sqrt(noise));
                   return (dt3 > 0.0 ? 0.0 : 1.0) + (noise > 0.0 ? 0.0 : 1.0);
                 }});
  return out;
}

}  // namespace

bool CheckReport::passed() const {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

const CheckResult* CheckReport::worst() const {
  const CheckResult* best = nullptr;
  auto ratio = [](const CheckResult& r) {
    if (!std::isfinite(r.error)) return std::numeric_limits<double>::infinity();
    if (r.tolerance <= 0.0) return r.error > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    return r.error / r.tolerance;
  };
  for (const auto& r : results) {
    if (!best || (!r.passed && best->passed) ||
        (r.passed == best->passed && ratio(r) > ratio(*best))) {
      best = &r;
    }
  }
  return best;
}

std::vector<std::string> scopes() { return {"numerics", "dt3", "diffusion", "training"}; }

std::vector<CheckCase> builtin_cases() {
  std::vector<CheckCase> all;
  for (auto part : {numerics_cases(), dt3_cases(), diffusion_cases(), training_cases()}) {
    all.insert(all.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return all;
}

CheckReport run_checks(const std::vector<CheckCase>& cases, std::string_view scope) {
  const auto known = scopes();
  if (scope != "all" && std::find(known.begin(), known.end(), scope) == known.end()) {
    throw ArgumentError("unknown check scope '" + std::string(scope) +
                        "' (expected numerics, dt3, diffusion, training or all)");
  }
  CheckReport report;
  for (const auto& c : cases) {
    if (scope != "all" && c.scope != scope) continue;
    CheckResult r{c.scope, c.name, 0.0, c.tolerance, false, ""};
    try {
      r.error = c.measure(r.detail);
      r.passed = std::isfinite(r.error) && r.error <= c.tolerance;
    } catch (const std::exception& e) {
      r.error = std::numeric_limits<double>::infinity();
      r.detail = std::string("threw: ") + e.what();
    }
    report.results.push_back(std::move(r));
  }
  return report;
}

CheckReport run_checks(std::string_view scope) { return run_checks(builtin_cases(), scope); }

CheckCase corrupted_adjoint_case() {
  auto bad_cube = [](std::vector<Var>& in) {
    Var v = in[0];
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
  return primitive("cube (corrupted adjoint)", {{2, 3}}, bad_cube);
}

}  // namespace drdt3::checks
