// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Conditional denoising diffusion over actions.
//
// The condition is the coarse action ã of the current step. A noise
// approximator ε_θ(a_i, ã, i) is trained with the simplified objective and
// sampled with an N-step ancestral chain. Diffusion timesteps are 1-based
// throughout: i ∈ {1..N}.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drdt3/layers.hpp"
#include "drdt3/numerics.hpp"
#include "drdt3/rng.hpp"

namespace drdt3::diffusion {

struct DiffusionSchedule {
  std::size_t n_steps = 0;
  std::vector<double> beta;  // index i-1 holds β_i
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  double beta_at(std::size_t i) const { return beta.at(i - 1); }
  double alpha_at(std::size_t i) const { return alpha.at(i - 1); }
  double alpha_bar_at(std::size_t i) const { return alpha_bar.at(i - 1); }
};

/// Variance-preserving schedule:
///   β_i = 1 − exp(−β_min/N − ½(β_max − β_min)(2i − 1)/N²).
/// Throws ArgumentError unless n_steps ≥ 1 and 0 < β_min ≤ β_max.
DiffusionSchedule vp_schedule(std::size_t n_steps, double beta_min, double beta_max);

/// a_i = √ᾱ_i · a0 + √(1 − ᾱ_i) · eps. Throws RangeError for i outside 1..N.
std::vector<double> forward_noise(std::span<const double> a0, std::size_t i,
                                  std::span<const double> eps, const DiffusionSchedule& sched);

enum class NoiseVariant {
  kFull,        // adaLN modulation + gated MLP
  kNoAdaLN,     // condition prepended to the input, learned-affine norm, no gate
  kNoGatedMLP,  // adaLN kept, plain two-layer MLP
  kNoBoth,
};

std::string_view to_string(NoiseVariant v);
/// Accepts full, no_adaln, no_gated_mlp, no_both; throws ConfigError otherwise.
NoiseVariant parse_noise_variant(std::string_view name);

struct NoiseConfig {
  std::size_t action_dim = 1;
  std::size_t time_embed_dim = 16;
  std::size_t hidden_dim = 64;
  std::size_t expansion = 4;
  NoiseVariant variant = NoiseVariant::kFull;

  bool uses_adaln() const {
    return variant == NoiseVariant::kFull || variant == NoiseVariant::kNoGatedMLP;
  }
  bool uses_gated_mlp() const {
    return variant == NoiseVariant::kFull || variant == NoiseVariant::kNoAdaLN;
  }
  void validate() const;
};

struct NoiseApproximatorParams {
  NoiseConfig config;
  Linear cond_proj;    // d_c + d_a → d_h
  Linear ada_head;     // d_h → 3·d_h (γ | β_shift | α_gate), zero at init
  Linear input_proj;   // d_a → d_h, or d_h + d_a → d_h without adaLN
  LayerNormParams norm;  // learnable only without adaLN
  Linear mlp_gate;     // d_h → M·d_h, gated variants only
  Linear mlp_value;    // d_h → M·d_h
  Linear mlp_out;      // M·d_h → d_h
  Linear out_head;     // d_h → d_a

  static NoiseApproximatorParams init(const NoiseConfig& config, Rng& rng);
  ParamList parameters();
};

/// Sinusoidal embedding of diffusion step i: [sin(i·f_k) | cos(i·f_k)] with
/// f_k = 10000^(−k/(dim/2)). dim must be even.
std::vector<double> timestep_embedding(std::size_t i, std::size_t dim);

/// ε_θ for a batch: a_i and cond are B × d_a, steps has B entries in 1..N.
nx::Var predict_noise(nx::Tape& tape, nx::Var a_i, nx::Var cond,
                      std::span<const std::size_t> steps, const NoiseApproximatorParams& params);

/// Single-sample inference form.
std::vector<double> predict_noise(std::span<const double> a_i, std::span<const double> cond,
                                  std::size_t i, const NoiseApproximatorParams& params);

/// The reverse update given a noise prediction:
///   a_{i−1} = (a_i − (1 − α_i)/√(1 − ᾱ_i) · ε̂) / √α_i + σ_i · noise
/// with σ_i = β_i, or √β_i when sqrt_beta_noise. Throws ContractError when
/// i = 1 and noise is nonzero.
std::vector<double> reverse_update(std::span<const double> a_i, std::span<const double> eps_hat,
                                   std::size_t i, const DiffusionSchedule& sched,
                                   std::span<const double> noise, bool sqrt_beta_noise);

/// reverse_update with ε̂ = ε_θ(a_i, cond, i).
std::vector<double> denoise_step(std::span<const double> a_i, std::span<const double> cond,
                                 std::size_t i, const NoiseApproximatorParams& params,
                                 const DiffusionSchedule& sched, std::span<const double> noise,
                                 bool sqrt_beta_noise = false);

struct ReverseStepRecord {
  std::size_t i = 0;
  std::vector<double> a_i;
  std::vector<double> eps_hat;
  std::vector<double> a_prev;
};

struct ReverseStepTrace {
  std::vector<ReverseStepRecord> steps;  // i = N first
};

struct SampleOptions {
  double action_low = -1.0;
  double action_high = 1.0;
  bool sqrt_beta_noise = false;
  ReverseStepTrace* trace = nullptr;
};

/// Draws a_N ~ N(0, I), runs the chain down to a_0 with fresh noise for i > 1,
/// then clamps a_0 to the action bounds.
std::vector<double> sample_action(std::span<const double> cond,
                                  const NoiseApproximatorParams& params,
                                  const DiffusionSchedule& sched, Rng& rng,
                                  const SampleOptions& options = {});

/// Mean over the batch of ‖eps − ε_θ(√ᾱ_i a0 + √(1 − ᾱ_i) eps, ã, i)‖².
/// Differentiable in the parameters and in `cond`. Throws DimensionError when
/// batch sizes disagree.
nx::Var diffusion_loss(nx::Tape& tape, const nx::DArray& a0, nx::Var cond,
                       std::span<const std::size_t> steps, const nx::DArray& eps,
                       const NoiseApproximatorParams& params, const DiffusionSchedule& sched);

}  // namespace drdt3::diffusion
