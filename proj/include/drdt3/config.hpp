// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration and its flat `key = value` text form.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "drdt3/diffusion.hpp"
#include "drdt3/dt3.hpp"

namespace drdt3 {

enum class LossNorm { kL1, kL2 };
enum class EvalMode { kDrdt3, kDt3Only };

std::string_view to_string(LossNorm n);
std::string_view to_string(EvalMode m);
/// Accept l1/l2 and drdt3/dt3-only; throw ConfigError otherwise.
LossNorm parse_loss_norm(std::string_view s);
EvalMode parse_eval_mode(std::string_view s);

struct TrainConfig {
  // optimization
  std::size_t context_len = 6;
  std::size_t batch_size = 64;
  double learning_rate = 3e-4;
  std::size_t epochs = 20;
  std::size_t updates_per_epoch = 200;
  double zeta = 0.2;
  LossNorm dt3_loss_norm = LossNorm::kL1;
  double weight_decay = 1e-4;
  double grad_clip = 0.25;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  // sequence model
  std::size_t embed_dim = 128;
  std::size_t n_heads = 1;
  std::size_t n_blocks = 1;
  double inner_lr = 0.05;
  std::size_t ttt_proj_rank = 0;
  bool include_action_tokens = true;
  bool dt_mode = false;
  double init_std = 0.02;

  // diffusion
  std::size_t diffusion_steps = 5;
  double beta_min = 0.1;
  double beta_max = 10.0;
  diffusion::NoiseVariant noise_approx_variant = diffusion::NoiseVariant::kFull;
  std::size_t mlp_expansion = 4;
  std::size_t time_embed_dim = 16;
  std::size_t noise_hidden_dim = 64;
  bool sqrt_beta_noise = false;

  // ablations of the objective
  bool use_diffusion_loss = true;
  bool condition_on_rtg = true;

  // evaluation between epochs
  std::size_t eval_episodes = 10;
  double rtg_scale = 1.0;
  EvalMode eval_mode = EvalMode::kDrdt3;

  /// Throws ConfigError naming the first offending field.
  void validate() const;

  dt3::ModelConfig model_config(std::size_t state_dim, std::size_t action_dim,
                                std::size_t max_episode_len) const;
  diffusion::NoiseConfig noise_config(std::size_t action_dim) const;
};

/// Every key accepted in a config file, in serialization order.
std::vector<std::string> config_keys();

/// Canonical text: one `key = value` line per field in config_keys() order,
/// doubles with 17 significant digits.
std::string serialize_config(const TrainConfig& config);

/// Parses `key = value` lines; `#` starts a comment and blank lines are
/// skipped. Missing keys keep their defaults. Throws ConfigError carrying
/// `source:line:` for unknown keys, duplicates and malformed values, then
/// runs validate().
TrainConfig parse_config(std::string_view text, std::string_view source = "<config>");
TrainConfig load_config(const std::filesystem::path& path);

/// Applies a single `key`/`value` override with the same typing rules.
void set_config_value(TrainConfig& config, std::string_view key, std::string_view value);

/// Lowercase hex SHA-256 of serialize_config(config).
std::string config_hash(const TrainConfig& config);

}  // namespace drdt3
