// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Decision-TTT sequence model.
//
// A K-step context of (return-to-go, state, action) triples is embedded as an
// interleaved token stream, passed through Attention-TTT blocks (masked
// self-attention, then a TTT-linear layer, each followed by residual add and
// layer norm) and read out at every state token by a linear action head. The
// last row of the readout is the coarse action for the current step.

#pragma once

#include <cstddef>
#include <vector>

#include "drdt3/layers.hpp"
#include "drdt3/numerics.hpp"
#include "drdt3/rng.hpp"

namespace drdt3::dt3 {

struct ModelConfig {
  std::size_t state_dim = 1;
  std::size_t action_dim = 1;
  std::size_t embed_dim = 128;
  /// Rows of the timestep embedding table; must cover the longest episode.
  std::size_t max_episode_len = 1000;
  std::size_t n_heads = 1;
  std::size_t n_blocks = 1;
  /// Step size of the fast-weight update. The update contracts only while
  /// 2·inner_lr·‖θ_K x‖² < 2, and at d = 128 a unit step already blows up at
  /// initialization.
  double inner_lr = 0.05;
  /// 0 keeps θ_Q/θ_K/θ_V full d×d; r > 0 factors each as (d×r)(r×d).
  std::size_t ttt_proj_rank = 0;
  bool include_action_tokens = true;
  /// Drops the TTT sub-layer, leaving a plain attention block.
  bool dt_mode = false;
  double init_std = 0.02;

  std::size_t tokens_per_step() const { return include_action_tokens ? 3 : 2; }
  void validate() const;
};

/// The K most recent steps of an episode, oldest first. Steps before the
/// episode start form a zero-filled prefix with pad_mask false.
struct ContextWindow {
  std::vector<double> rtgs;            // K
  std::vector<double> states;          // K × state_dim, row-major
  std::vector<double> actions;         // K × action_dim, row-major
  std::vector<std::size_t> timesteps;  // K
  std::vector<bool> pad_mask;          // true = real step

  static ContextWindow empty(std::size_t k, std::size_t state_dim, std::size_t action_dim);

  std::size_t len() const { return rtgs.size(); }
  std::size_t real_steps() const;
  /// Throws ContractError naming the violated invariant.
  void validate(std::size_t state_dim, std::size_t action_dim) const;
};

/// θ = full, or θ = left · right when low-rank.
struct Projection {
  nx::DArray full;
  nx::DArray left;
  nx::DArray right;

  bool low_rank() const { return left.numel() > 0; }
  nx::Var operator()(nx::Tape& tape) const;
  void collect(const std::string& prefix, ParamList& out);
};

struct TTTLinearLayer {
  nx::DArray w0;  // initial fast weight, d×d
  Projection theta_q;
  Projection theta_k;
  Projection theta_v;
  double inner_lr = 0.05;

  std::size_t dim() const { return w0.rows(); }
  void collect(const std::string& prefix, ParamList& out);
};

struct AttentionTTTBlock {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  std::size_t n_heads = 1;
  LayerNormParams attn_norm;
  TTTLinearLayer ttt;
  LayerNormParams ttt_norm;

  void collect(const std::string& prefix, ParamList& out);
};

struct DT3Params {
  ModelConfig config;
  Linear rtg_embed;
  Linear state_embed;
  Linear action_embed;
  nx::DArray timestep_table;  // max_episode_len × d
  std::vector<AttentionTTTBlock> blocks;
  LayerNormParams final_norm;
  Linear action_head;

  static DT3Params init(const ModelConfig& config, Rng& rng);
  ParamList parameters();
};

/// Per-token mask of the interleaved stream (true = real token).
std::vector<bool> token_mask(const ContextWindow& ctx, const ModelConfig& config);

/// Interleaved token sequence, tokens_per_step·K × d: each token is its
/// modality projection plus the timestep embedding of its step.
nx::Var embed_context(nx::Tape& tape, const ContextWindow& ctx, const DT3Params& params);

/// Multi-head attention output (before residual and norm). Query j sees keys
/// i ≤ j that are real, and always itself.
nx::Var masked_self_attention(nx::Tape& tape, nx::Var x, const AttentionTTTBlock& block,
                              const std::vector<bool>& key_mask);

/// LayerNorm(x + masked_self_attention(x)).
nx::Var causal_attention(nx::Tape& tape, nx::Var x, const AttentionTTTBlock& block,
                         const std::vector<bool>& key_mask);

/// Fast-weight recurrence. For each real token x_t, in order:
///   k = θ_K x_t, v = θ_V x_t, q = θ_Q x_t
///   W_t = W_{t-1} - η · 2 (W_{t-1} k - v) kᵀ
///   z_t = W_t q
/// W starts at W0 for every sequence; padded tokens leave W untouched. The
/// whole recurrence is on the tape, so outer-loop gradients reach W0 and the
/// projections through every inner step. Returns z (before residual/norm).
/// When `fast_weights` is non-null it receives W after each token.
nx::Var ttt_forward(nx::Tape& tape, nx::Var x, const TTTLinearLayer& layer,
                    const std::vector<bool>& token_mask,
                    std::vector<nx::DArray>* fast_weights = nullptr);

/// Runs the full model; returns K × action_dim predictions read at state tokens.
nx::Var predict_coarse_actions(nx::Tape& tape, const ContextWindow& ctx, const DT3Params& params);

/// Inference convenience: K × action_dim values, row-major.
std::vector<double> predict_coarse_actions(const ContextWindow& ctx, const DT3Params& params);

}  // namespace drdt3::dt3
