// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "drdt3/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "drdt3/errors.hpp"

namespace drdt3::diffusion {

using nx::DArray;
using nx::Tape;
using nx::Var;

DiffusionSchedule vp_schedule(std::size_t n_steps, double beta_min, double beta_max) {
  if (n_steps == 0) throw ArgumentError("diffusion n_steps must be >= 1");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !std::isfinite(beta_max)) {
    throw ArgumentError("need 0 < beta_min <= beta_max, got beta_min=" + std::to_string(beta_min) +
                        " beta_max=" + std::to_string(beta_max));
  }
  DiffusionSchedule s;
  s.n_steps = n_steps;
  const double n = static_cast<double>(n_steps);
  double prod = 1.0;
  for (std::size_t i = 1; i <= n_steps; ++i) {
    const double x = -beta_min / n - 0.5 * (beta_max - beta_min) * (2.0 * i - 1.0) / (n * n);
    const double beta = -std::expm1(x);
    const double alpha = std::exp(x);
    prod *= alpha;
    s.beta.push_back(beta);
    s.alpha.push_back(alpha);
    s.alpha_bar.push_back(prod);
  }
  return s;
}

namespace {

void check_step(std::size_t i, const DiffusionSchedule& sched) {
  if (i < 1 || i > sched.n_steps) {
    throw RangeError("diffusion step " + std::to_string(i) + " outside 1.." +
                     std::to_string(sched.n_steps));
  }
}

double fan_in_std(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

}  // namespace

std::vector<double> forward_noise(std::span<const double> a0, std::size_t i,
                                  std::span<const double> eps, const DiffusionSchedule& sched) {
  check_step(i, sched);
  if (a0.size() != eps.size()) throw DimensionError("forward_noise: a0 and eps sizes differ");
  const double ab = sched.alpha_bar_at(i);
  const double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
  std::vector<double> out(a0.size());
  for (std::size_t j = 0; j < a0.size(); ++j) out[j] = c0 * a0[j] + c1 * eps[j];
  return out;
}

std::string_view to_string(NoiseVariant v) {
  switch (v) {
    case NoiseVariant::kFull:
      return "full";
    case NoiseVariant::kNoAdaLN:
      return "no_adaln";
    case NoiseVariant::kNoGatedMLP:
      return "no_gated_mlp";
    case NoiseVariant::kNoBoth:
      return "no_both";
  }
  return "full";
}

NoiseVariant parse_noise_variant(std::string_view name) {
  for (auto v : {NoiseVariant::kFull, NoiseVariant::kNoAdaLN, NoiseVariant::kNoGatedMLP,
                 NoiseVariant::kNoBoth}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown noise_approx_variant '" + std::string(name) +
                    "' (expected full, no_adaln, no_gated_mlp or no_both)");
}

void NoiseConfig::validate() const {
  if (action_dim == 0 || hidden_dim == 0 || expansion == 0) {
    throw ArgumentError("noise approximator widths must be >= 1");
  }
  if (time_embed_dim == 0 || time_embed_dim % 2 != 0) {
    throw ArgumentError("time_embed_dim must be a positive even number");
  }
}

NoiseApproximatorParams NoiseApproximatorParams::init(const NoiseConfig& config, Rng& rng) {
  config.validate();
  const std::size_t da = config.action_dim, dh = config.hidden_dim, dc = config.time_embed_dim;
  const std::size_t wide = config.expansion * dh;
  NoiseApproximatorParams p;
  p.config = config;
  p.cond_proj = Linear::init(dc + da, dh, fan_in_std(dc + da), rng);
  if (config.uses_adaln()) {
    p.ada_head = Linear::zeros(dh, 3 * dh);
    p.input_proj = Linear::init(da, dh, fan_in_std(da), rng);
  } else {
    p.input_proj = Linear::init(dh + da, dh, fan_in_std(dh + da), rng);
    p.norm = LayerNormParams::init(dh);
  }
  if (config.uses_gated_mlp()) p.mlp_gate = Linear::init(dh, wide, fan_in_std(dh), rng);
  p.mlp_value = Linear::init(dh, wide, fan_in_std(dh), rng);
  p.mlp_out = Linear::init(wide, dh, fan_in_std(wide), rng);
  p.out_head = Linear::init(dh, da, fan_in_std(dh), rng);
  return p;
}

ParamList NoiseApproximatorParams::parameters() {
  ParamList out;
  cond_proj.collect("noise.cond_proj", out);
  if (config.uses_adaln()) {
    ada_head.collect("noise.ada_head", out);
  } else {
    norm.collect("noise.norm", out);
  }
  input_proj.collect("noise.input_proj", out);
  if (config.uses_gated_mlp()) mlp_gate.collect("noise.mlp_gate", out);
  mlp_value.collect("noise.mlp_value", out);
  mlp_out.collect("noise.mlp_out", out);
  out_head.collect("noise.out_head", out);
  return out;
}

std::vector<double> timestep_embedding(std::size_t i, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw ArgumentError("timestep embedding dim must be even");
  const std::size_t half = dim / 2;
  std::vector<double> e(dim);
  for (std::size_t k = 0; k < half; ++k) {
    const double f = std::exp(-std::log(10000.0) * static_cast<double>(k) / half);
    e[k] = std::sin(static_cast<double>(i) * f);
    e[half + k] = std::cos(static_cast<double>(i) * f);
  }
  return e;
}

Var predict_noise(Tape& tape, Var a_i, Var cond, std::span<const std::size_t> steps,
                  const NoiseApproximatorParams& params) {
  const auto& cfg = params.config;
  const std::size_t b = a_i.rows(), da = cfg.action_dim, dh = cfg.hidden_dim;
  if (a_i.cols() != da || cond.cols() != da) {
    throw DimensionError("predict_noise: expected " + std::to_string(da) + " action columns, got " +
                         nx::shape_str(a_i.shape()) + " and " + nx::shape_str(cond.shape()));
  }
  if (cond.rows() != b || steps.size() != b) {
    throw DimensionError("predict_noise: batch sizes differ (" + std::to_string(b) + ", " +
                         std::to_string(cond.rows()) + ", " + std::to_string(steps.size()) + ")");
  }

  const std::size_t dc = cfg.time_embed_dim;
  std::vector<double> temb;
  temb.reserve(b * dc);
  for (std::size_t s : steps) {
    auto e = timestep_embedding(s, dc);
    temb.insert(temb.end(), e.begin(), e.end());
  }
  Var c = nx::concat_cols({tape.constant({b, dc}, std::move(temb)), cond});
  Var c_emb = nx::gelu(params.cond_proj(tape, c));

  auto mlp = [&](Var m) {
    Var up = params.mlp_value(tape, m);
    if (cfg.uses_gated_mlp()) {
      up = nx::gelu(params.mlp_gate(tape, m)) * up;
    } else {
      up = nx::gelu(up);
    }
    return params.mlp_out(tape, up);
  };

  Var h_out;
  if (cfg.uses_adaln()) {
    Var mod = params.ada_head(tape, c_emb);
    Var gamma = nx::slice_cols(mod, 0, dh);
    Var shift = nx::slice_cols(mod, dh, dh);
    Var gate = nx::slice_cols(mod, 2 * dh, dh);
    Var h = params.input_proj(tape, a_i);
    Var hn = nx::layer_norm(h, tape.constant(DArray({dh}, 1.0)), tape.constant(DArray({dh}, 0.0)));
    Var m = hn + gamma * hn + shift;
    h_out = h + gate * mlp(m);
  } else {
    Var h = params.input_proj(tape, nx::concat_cols({c_emb, a_i}));
    h_out = h + mlp(params.norm(tape, h));
  }
  return params.out_head(tape, h_out);
}

std::vector<double> predict_noise(std::span<const double> a_i, std::span<const double> cond,
                                  std::size_t i, const NoiseApproximatorParams& params) {
  const std::size_t da = params.config.action_dim;
  Tape tape;
  const std::size_t step[1] = {i};
  Var out = predict_noise(tape, tape.constant({1, da}, {a_i.begin(), a_i.end()}),
                          tape.constant({1, da}, {cond.begin(), cond.end()}), step, params);
  return {out.values().begin(), out.values().end()};
}

std::vector<double> reverse_update(std::span<const double> a_i, std::span<const double> eps_hat,
                                   std::size_t i, const DiffusionSchedule& sched,
                                   std::span<const double> noise, bool sqrt_beta_noise) {
  check_step(i, sched);
  if (eps_hat.size() != a_i.size() || noise.size() != a_i.size()) {
    throw DimensionError("reverse_update: a_i, eps_hat and noise sizes differ");
  }
  if (i == 1 && std::any_of(noise.begin(), noise.end(), [](double v) { return v != 0.0; })) {
    throw ContractError("the final reverse step (i = 1) must not add noise");
  }
  const double alpha = sched.alpha_at(i), beta = sched.beta_at(i);
  const double coef = (1.0 - alpha) / std::sqrt(1.0 - sched.alpha_bar_at(i));
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  const double sigma = sqrt_beta_noise ? std::sqrt(beta) : beta;
  std::vector<double> out(a_i.size());
  for (std::size_t j = 0; j < a_i.size(); ++j) {
    out[j] = inv_sqrt_alpha * (a_i[j] - coef * eps_hat[j]) + sigma * noise[j];
  }
  return out;
}

std::vector<double> denoise_step(std::span<const double> a_i, std::span<const double> cond,
                                 std::size_t i, const NoiseApproximatorParams& params,
                                 const DiffusionSchedule& sched, std::span<const double> noise,
                                 bool sqrt_beta_noise) {
  check_step(i, sched);
  return reverse_update(a_i, predict_noise(a_i, cond, i, params), i, sched, noise,
                        sqrt_beta_noise);
}

std::vector<double> sample_action(std::span<const double> cond,
                                  const NoiseApproximatorParams& params,
                                  const DiffusionSchedule& sched, Rng& rng,
                                  const SampleOptions& options) {
  const std::size_t da = params.config.action_dim;
  if (cond.size() != da) throw DimensionError("sample_action: condition has wrong width");
  if (options.trace) options.trace->steps.clear();
  std::vector<double> a(da);
  for (auto& v : a) v = rng.normal();
  std::vector<double> noise(da);
  for (std::size_t i = sched.n_steps; i >= 1; --i) {
    for (auto& v : noise) v = i > 1 ? rng.normal() : 0.0;
    auto eps_hat = predict_noise(a, cond, i, params);
    auto next = reverse_update(a, eps_hat, i, sched, noise, options.sqrt_beta_noise);
    if (options.trace) options.trace->steps.push_back({i, a, eps_hat, next});
    a = std::move(next);
  }
  for (auto& v : a) v = std::clamp(v, options.action_low, options.action_high);
  return a;
}

Var diffusion_loss(Tape& tape, const DArray& a0, Var cond, std::span<const std::size_t> steps,
                   const DArray& eps, const NoiseApproximatorParams& params,
                   const DiffusionSchedule& sched) {
  const std::size_t b = a0.rows(), da = params.config.action_dim;
  if (eps.rows() != b || cond.rows() != b || steps.size() != b) {
    throw DimensionError("diffusion_loss: batch sizes differ (a0 " + nx::shape_str(a0.shape()) +
                         ", eps " + nx::shape_str(eps.shape()) + ", cond " +
                         nx::shape_str(cond.shape()) + ", steps " + std::to_string(steps.size()) +
                         ")");
  }
  if (a0.cols() != da || eps.cols() != da) {
    throw DimensionError("diffusion_loss: action width must be " + std::to_string(da));
  }
  std::vector<double> noisy(b * da);
  for (std::size_t r = 0; r < b; ++r) {
    check_step(steps[r], sched);
    const double ab = sched.alpha_bar_at(steps[r]);
    const double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
    for (std::size_t j = 0; j < da; ++j) noisy[r * da + j] = c0 * a0(r, j) + c1 * eps(r, j);
  }
  Var pred = predict_noise(tape, tape.constant({b, da}, std::move(noisy)), cond, steps, params);
  Var diff = tape.constant(eps) - pred;
  return nx::scale(nx::sum(nx::square(diff)), 1.0 / static_cast<double>(b));
}

}  // namespace drdt3::diffusion
