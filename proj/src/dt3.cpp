// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "drdt3/dt3.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "drdt3/errors.hpp"

namespace drdt3::dt3 {

using nx::DArray;
using nx::Tape;
using nx::Var;

void ModelConfig::validate() const {
  if (state_dim == 0 || action_dim == 0) throw ArgumentError("state and action dims must be >= 1");
  if (embed_dim == 0) throw ArgumentError("embed_dim must be >= 1");
  if (n_heads == 0 || embed_dim % n_heads != 0) {
    throw ArgumentError("embed_dim " + std::to_string(embed_dim) + " not divisible by n_heads " +
                        std::to_string(n_heads));
  }
  if (n_blocks == 0) throw ArgumentError("n_blocks must be >= 1");
  if (max_episode_len == 0) throw ArgumentError("max_episode_len must be >= 1");
  if (!(inner_lr >= 0.0) || !std::isfinite(inner_lr)) {
    throw ArgumentError("inner_lr must be finite and non-negative");
  }
  if (ttt_proj_rank > embed_dim) throw ArgumentError("ttt_proj_rank exceeds embed_dim");
  if (!(init_std > 0.0)) throw ArgumentError("init_std must be positive");
}

ContextWindow ContextWindow::empty(std::size_t k, std::size_t state_dim, std::size_t action_dim) {
  ContextWindow c;
  c.rtgs.assign(k, 0.0);
  c.states.assign(k * state_dim, 0.0);
  c.actions.assign(k * action_dim, 0.0);
  c.timesteps.assign(k, 0);
  c.pad_mask.assign(k, false);
  return c;
}

std::size_t ContextWindow::real_steps() const {
  std::size_t n = 0;
  for (bool m : pad_mask) n += m ? 1 : 0;
  return n;
}

void ContextWindow::validate(std::size_t state_dim, std::size_t action_dim) const {
  const std::size_t k = rtgs.size();
  if (k == 0) throw ContractError("context window is empty");
  if (states.size() != k * state_dim || actions.size() != k * action_dim ||
      timesteps.size() != k || pad_mask.size() != k) {
    throw ContractError("context window fields do not all have " + std::to_string(k) + " rows");
  }
  std::size_t first_real = k;
  for (std::size_t t = 0; t < k; ++t) {
    if (pad_mask[t]) {
      first_real = std::min(first_real, t);
    } else if (first_real < k) {
      throw ContractError("padding must be a contiguous prefix of the window");
    }
  }
  for (std::size_t t = 0; t < first_real; ++t) {
    bool zero = rtgs[t] == 0.0;
    for (std::size_t j = 0; j < state_dim; ++j) zero = zero && states[t * state_dim + j] == 0.0;
    for (std::size_t j = 0; j < action_dim; ++j) zero = zero && actions[t * action_dim + j] == 0.0;
    if (!zero) throw ContractError("padded row " + std::to_string(t) + " is not all-zero");
  }
  for (std::size_t t = first_real + 1; t < k; ++t) {
    if (timesteps[t] != timesteps[t - 1] + 1) {
      throw ContractError("timesteps of real rows must increase by exactly 1");
    }
  }
}

Var Projection::operator()(Tape& tape) const {
  if (low_rank()) return nx::matmul(tape.leaf(left), tape.leaf(right));
  return tape.leaf(full);
}

void Projection::collect(const std::string& prefix, ParamList& out) {
  if (low_rank()) {
    out.push_back({prefix + ".left", &left});
    out.push_back({prefix + ".right", &right});
  } else {
    out.push_back({prefix, &full});
  }
}

void TTTLinearLayer::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".w0", &w0});
  theta_q.collect(prefix + ".theta_q", out);
  theta_k.collect(prefix + ".theta_k", out);
  theta_v.collect(prefix + ".theta_v", out);
}

void AttentionTTTBlock::collect(const std::string& prefix, ParamList& out) {
  query.collect(prefix + ".attn.query", out);
  key.collect(prefix + ".attn.key", out);
  value.collect(prefix + ".attn.value", out);
  output.collect(prefix + ".attn.output", out);
  attn_norm.collect(prefix + ".attn_norm", out);
  ttt.collect(prefix + ".ttt", out);
  ttt_norm.collect(prefix + ".ttt_norm", out);
}

namespace {

Projection init_projection(std::size_t d, std::size_t rank, double stddev, Rng& rng) {
  Projection p;
  if (rank == 0) {
    p.full = normal_array({d, d}, stddev, rng);
  } else {
    // entries of left·right then have standard deviation `stddev`
    const double s = std::sqrt(stddev / std::sqrt(static_cast<double>(rank)));
    p.left = normal_array({d, rank}, s, rng);
    p.right = normal_array({rank, d}, s, rng);
  }
  return p;
}

}  // namespace

DT3Params DT3Params::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.embed_dim;
  const double sd = config.init_std;
  DT3Params p;
  p.config = config;
  p.rtg_embed = Linear::init(1, d, sd, rng);
  p.state_embed = Linear::init(config.state_dim, d, sd, rng);
  p.action_embed = Linear::init(config.action_dim, d, sd, rng);
  p.timestep_table = normal_array({config.max_episode_len, d}, sd, rng);
  for (std::size_t b = 0; b < config.n_blocks; ++b) {
    AttentionTTTBlock blk;
    blk.query = Linear::init(d, d, sd, rng);
    blk.key = Linear::init(d, d, sd, rng);
    blk.value = Linear::init(d, d, sd, rng);
    blk.output = Linear::init(d, d, sd, rng);
    blk.n_heads = config.n_heads;
    blk.attn_norm = LayerNormParams::init(d);
    blk.ttt.w0 = learnable({d, d});
    blk.ttt.theta_q = init_projection(d, config.ttt_proj_rank, sd, rng);
    blk.ttt.theta_k = init_projection(d, config.ttt_proj_rank, sd, rng);
    blk.ttt.theta_v = init_projection(d, config.ttt_proj_rank, sd, rng);
    blk.ttt.inner_lr = config.inner_lr;
    blk.ttt_norm = LayerNormParams::init(d);
    p.blocks.push_back(std::move(blk));
  }
  p.final_norm = LayerNormParams::init(d);
  p.action_head = Linear::init(d, config.action_dim, sd, rng);
  return p;
}

ParamList DT3Params::parameters() {
  ParamList out;
  rtg_embed.collect("dt3.embed.rtg", out);
  state_embed.collect("dt3.embed.state", out);
  action_embed.collect("dt3.embed.action", out);
  out.push_back({"dt3.embed.timestep", &timestep_table});
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    // dt_mode never touches the TTT weights; keep them out of the optimizer
    if (config.dt_mode) {
      ParamList all;
      blocks[b].collect("dt3.block" + std::to_string(b), all);
      for (auto& np : all) {
        if (np.name.find(".ttt") == std::string::npos) out.push_back(np);
      }
    } else {
      blocks[b].collect("dt3.block" + std::to_string(b), out);
    }
  }
  final_norm.collect("dt3.final_norm", out);
  action_head.collect("dt3.action_head", out);
  return out;
}

std::vector<bool> token_mask(const ContextWindow& ctx, const ModelConfig& config) {
  const std::size_t per = config.tokens_per_step();
  std::vector<bool> mask;
  mask.reserve(ctx.len() * per);
  for (std::size_t t = 0; t < ctx.len(); ++t)
    for (std::size_t j = 0; j < per; ++j) mask.push_back(ctx.pad_mask[t]);
  return mask;
}

Var embed_context(Tape& tape, const ContextWindow& ctx, const DT3Params& params) {
  const auto& cfg = params.config;
  ctx.validate(cfg.state_dim, cfg.action_dim);
  const std::size_t k = ctx.len();

  std::vector<std::size_t> steps(k);
  for (std::size_t t = 0; t < k; ++t) {
    steps[t] = ctx.pad_mask[t] ? ctx.timesteps[t] : 0;
    if (steps[t] >= params.timestep_table.rows()) {
      throw RangeError("timestep " + std::to_string(steps[t]) + " outside embedding table of " +
                       std::to_string(params.timestep_table.rows()) + " rows");
    }
  }
  Var time_emb = nx::gather_rows(tape.leaf(params.timestep_table), steps);

  Var rtg = tape.constant({k, 1}, ctx.rtgs);
  Var state = tape.constant({k, cfg.state_dim}, ctx.states);
  std::vector<Var> streams = {params.rtg_embed(tape, rtg) + time_emb,
                              params.state_embed(tape, state) + time_emb};
  if (cfg.include_action_tokens) {
    Var action = tape.constant({k, cfg.action_dim}, ctx.actions);
    streams.push_back(params.action_embed(tape, action) + time_emb);
  }
  // stacked rows are [all rtg | all state | all action]; reorder to
  // (g_0, s_0, a_0, g_1, ...)
  const std::size_t per = streams.size();
  std::vector<std::size_t> order;
  order.reserve(k * per);
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t m = 0; m < per; ++m) order.push_back(m * k + t);
  return nx::gather_rows(nx::concat_rows(streams), order);
}

Var masked_self_attention(Tape& tape, Var x, const AttentionTTTBlock& block,
                          const std::vector<bool>& key_mask) {
  const std::size_t len = x.rows();
  const std::size_t d = x.cols();
  if (key_mask.size() != len) throw DimensionError("attention mask length does not match tokens");
  const std::size_t heads = block.n_heads;
  const std::size_t dh = d / heads;

  std::vector<double> bias(len * len, 0.0);
  constexpr double kBlocked = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < len; ++j)
    for (std::size_t i = 0; i < len; ++i)
      if (i > j || (i != j && !key_mask[i])) bias[j * len + i] = kBlocked;
  Var mask = tape.constant({len, len}, std::move(bias));

  Var q = block.query(tape, x);
  Var k = block.key(tape, x);
  Var v = block.value(tape, x);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : nx::slice_cols(q, h * dh, dh);
    Var kh = heads == 1 ? k : nx::slice_cols(k, h * dh, dh);
    Var vh = heads == 1 ? v : nx::slice_cols(v, h * dh, dh);
    Var scores = nx::scale(nx::matmul(qh, nx::transpose(kh)), inv_sqrt) + mask;
    outs.push_back(nx::matmul(nx::softmax_rows(scores), vh));
  }
  Var merged = heads == 1 ? outs[0] : nx::concat_cols(outs);
  return block.output(tape, merged);
}

Var causal_attention(Tape& tape, Var x, const AttentionTTTBlock& block,
                     const std::vector<bool>& key_mask) {
  return block.attn_norm(tape, x + masked_self_attention(tape, x, block, key_mask));
}

Var ttt_forward(Tape& tape, Var x, const TTTLinearLayer& layer, const std::vector<bool>& token_mask,
                std::vector<nx::DArray>* fast_weights) {
  const std::size_t len = x.rows();
  if (x.cols() != layer.dim()) {
    throw DimensionError("ttt_forward: token width " + std::to_string(x.cols()) +
                         " does not match fast weight " + nx::shape_str(layer.w0.shape()));
  }
  if (token_mask.size() != len) throw DimensionError("ttt_forward: mask length mismatch");

  // column t of each is θ x_t
  Var xt = nx::transpose(x);
  Var keys = nx::matmul(layer.theta_k(tape), xt);
  Var values = nx::matmul(layer.theta_v(tape), xt);
  Var queries = nx::matmul(layer.theta_q(tape), xt);

  Var w = tape.leaf(layer.w0);
  std::vector<Var> outputs;
  outputs.reserve(len);
  for (std::size_t t = 0; t < len; ++t) {
    Var q = nx::slice_cols(queries, t, 1);
    if (token_mask[t]) {
      Var k = nx::slice_cols(keys, t, 1);
      Var v = nx::slice_cols(values, t, 1);
      // ∇_W ‖W k - v‖² = 2 (W k - v) kᵀ
      Var err = nx::matmul(w, k) - v;
      w = nx::add_outer(w, err, k, -2.0 * layer.inner_lr);
    }
    if (fast_weights) fast_weights->emplace_back(w.shape(), std::vector<double>(w.values().begin(), w.values().end()));
    outputs.push_back(nx::matmul(w, q));
  }
  return nx::transpose(nx::concat_cols(outputs));
}

Var predict_coarse_actions(Tape& tape, const ContextWindow& ctx, const DT3Params& params) {
  const auto& cfg = params.config;
  Var x = embed_context(tape, ctx, params);
  const auto mask = token_mask(ctx, cfg);
  for (const auto& block : params.blocks) {
    x = causal_attention(tape, x, block, mask);
    if (!cfg.dt_mode) x = block.ttt_norm(tape, x + ttt_forward(tape, x, block.ttt, mask));
  }
  const std::size_t per = cfg.tokens_per_step();
  std::vector<std::size_t> state_tokens(ctx.len());
  for (std::size_t t = 0; t < ctx.len(); ++t) state_tokens[t] = t * per + 1;
  Var h = params.final_norm(tape, nx::gather_rows(x, state_tokens));
  return params.action_head(tape, h);
}

std::vector<double> predict_coarse_actions(const ContextWindow& ctx, const DT3Params& params) {
  Tape tape;
  Var out = predict_coarse_actions(tape, ctx, params);
  return {out.values().begin(), out.values().end()};
}

}  // namespace drdt3::dt3
