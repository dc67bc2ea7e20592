// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0
//
// A trained policy (sequence model + action diffusion + normalization) and
// the evaluation loop that drives it through an environment.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "drdt3/config.hpp"
#include "drdt3/diffusion.hpp"
#include "drdt3/dt3.hpp"
#include "drdt3/envdata.hpp"
#include "drdt3/rng.hpp"

namespace drdt3 {

/// Input scaling learned from the training data.
struct Normalizer {
  std::vector<double> state_mean;
  std::vector<double> state_std;
  double return_scale = 1.0;  // max |trajectory return|, 1 when all returns are 0
  double best_return = 0.0;   // drives the initial return-to-go at evaluation

  static Normalizer from_store(const envdata::TrajectoryStore& store);
};

struct PolicyBundle {
  TrainConfig config;
  std::string env_id;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  double action_max = 1.0;
  std::size_t max_episode_len = 0;
  Normalizer norm;
  dt3::DT3Params dt3;
  diffusion::NoiseApproximatorParams noise;
  diffusion::DiffusionSchedule schedule;

  /// Fresh parameters for `spec`, drawn from `rng`.
  static PolicyBundle create(const TrainConfig& config, const envdata::EnvSpec& spec,
                             Normalizer norm, Rng& rng);

  /// DT3 parameters first, then the noise approximator's.
  ParamList parameters();
  /// Pure-attention baseline (TTT sub-layer disabled).
  bool is_dt_baseline() const { return config.dt_mode; }
};

inline constexpr std::string_view kBundleFormat = "drdt3-bundle/1";

/// Same container layout as trajectory files: JSON header (config text, dims,
/// normalization, parameter names and shapes), then each parameter as a
/// little-endian u64 count and f64 values.
std::string serialize_bundle(const PolicyBundle& bundle);
PolicyBundle deserialize_bundle(std::string_view bytes);
void save_bundle(const PolicyBundle& bundle, const std::filesystem::path& path);
PolicyBundle load_bundle(const std::filesystem::path& path);

/// Context window as the model sees it: states standardized and, when the
/// bundle conditions on return, RTGs divided by the return scale (zero
/// otherwise).
dt3::ContextWindow normalize_context(const dt3::ContextWindow& raw, const PolicyBundle& bundle);

/// Action for the last step of a raw context window. dt3-only executes the
/// clamped coarse action; drdt3 refines it with the reverse diffusion chain.
std::vector<double> select_action(const PolicyBundle& bundle, const dt3::ContextWindow& raw,
                                  EvalMode mode, Rng& rng);

struct EvalConfig {
  double rtg_scale = 1.0;
  std::size_t episodes = 10;
  std::uint64_t seed = 0;
  EvalMode mode = EvalMode::kDrdt3;
};

struct EpisodeResult {
  double episode_return = 0.0;
  std::size_t length = 0;
  bool success = false;
  double initial_rtg = 0.0;
  std::vector<double> rtgs;  // conditioning target seen at every step
  envdata::Trajectory trajectory;
};

/// One episode. Throws ContractError when the bundle's dims do not match env.
EpisodeResult rollout(const PolicyBundle& bundle, envdata::Env& env, const EvalConfig& config,
                      Rng& rng);

struct EvalSummary {
  std::vector<EpisodeResult> episodes;
  double mean_return = 0.0;
  double std_return = 0.0;
  double success_rate = 0.0;
  double normalized_score = 0.0;
};

/// `config.episodes` rollouts; episode k draws from its own generator seeded
/// from (seed, k), so results do not depend on evaluation order.
EvalSummary evaluate(const PolicyBundle& bundle, const EvalConfig& config);

/// Per-episode CSV: episode,return,length,success,norm_score,initial_rtg.
std::string eval_csv(const EvalSummary& summary, const envdata::EnvSpec& spec);

/// Seed for the k-th independent stream derived from `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k);

}  // namespace drdt3
