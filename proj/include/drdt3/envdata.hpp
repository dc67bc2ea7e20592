// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Toy environments, offline datasets and their on-disk format.
//
// PointReach is a 2-D point mass that must settle at the origin. StitchChain
// is a 1-D corridor whose only reward sits at its far end; its "stitch"
// dataset is built so that no single trajectory crosses the whole corridor.

#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drdt3/rng.hpp"

namespace drdt3::envdata {

inline constexpr std::string_view kPointReach = "pointreach";
inline constexpr std::string_view kStitchChain = "stitchchain";

struct EnvSpec {
  std::string id;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  double action_max = 1.0;  // every action coordinate lies in [-a_max, a_max]
  std::size_t horizon = 1;
  bool dense_reward = true;
  double random_score = 0.0;
  double expert_score = 1.0;
  double gamma = 1.0;  // kept for reference; returns-to-go are undiscounted
};

struct StepResult {
  std::vector<double> state;
  double reward = 0.0;
  bool done = false;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual std::vector<double> reset(Rng& rng) = 0;
  /// Clamps the action to the bounds, advances one step. `done` is also set
  /// once the horizon is reached.
  virtual StepResult step(std::span<const double> action) = 0;
  virtual std::vector<double> observe() const = 0;
  virtual bool success() const = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
};

class PointReach final : public Env {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kSuccessRadius = 0.2;

  const EnvSpec& spec() const override;
  std::vector<double> reset(Rng& rng) override;
  StepResult step(std::span<const double> action) override;
  std::vector<double> observe() const override { return {px_, py_, vx_, vy_}; }
  /// Final distance to the goal under kSuccessRadius.
  bool success() const override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<PointReach>(*this); }

  void set_state(double px, double py, double vx, double vy);

 private:
  double px_ = 0, py_ = 0, vx_ = 0, vy_ = 0;
  std::size_t t_ = 0;
};

class StitchChain final : public Env {
 public:
  static constexpr double kGoal = 8.0;

  const EnvSpec& spec() const override;
  /// Always starts at 0; consumes no randomness.
  std::vector<double> reset(Rng& rng) override;
  StepResult step(std::span<const double> action) override;
  std::vector<double> observe() const override { return {pos_}; }
  bool success() const override { return reached_; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<StitchChain>(*this); }

  /// Moves the agent without stepping (used to build the second data family).
  void set_position(double pos);

 private:
  double pos_ = 0.0;
  std::size_t t_ = 0;
  bool reached_ = false;
};

/// Spec with reference scores filled in (computed once, then cached).
/// Throws ArgumentError for unknown ids.
const EnvSpec& env_spec(std::string_view env_id);
std::unique_ptr<Env> make_env(std::string_view env_id);

/// Hand-coded controllers used for reference scores and data collection.
std::vector<double> expert_action(std::string_view env_id, std::span<const double> state);
std::vector<double> random_action(const EnvSpec& spec, Rng& rng);

/// 100 · (raw − random) / (expert − random). Throws ArgumentError when
/// expert_score ≤ random_score.
double normalized_score(double raw, const EnvSpec& spec);

/// Suffix sums ĝ_t = Σ_{t' ≥ t} r_{t'}. Throws ArgumentError on empty input.
std::vector<double> compute_rtg(std::span<const double> rewards);

struct Trajectory {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<double> states;   // T × state_dim
  std::vector<double> actions;  // T × action_dim
  std::vector<double> rewards;  // T
  std::vector<double> rtgs;     // T, derived

  /// Validates lengths and derives rtgs. Throws DimensionError.
  static Trajectory make(std::size_t state_dim, std::size_t action_dim,
                         std::vector<double> states, std::vector<double> actions,
                         std::vector<double> rewards);

  std::size_t length() const { return rewards.size(); }
  double total_return() const { return rtgs.empty() ? 0.0 : rtgs.front(); }
  std::span<const double> state(std::size_t t) const {
    return {states.data() + t * state_dim, state_dim};
  }
  std::span<const double> action(std::size_t t) const {
    return {actions.data() + t * action_dim, action_dim};
  }
};

struct DatasetStats {
  std::vector<double> state_mean;
  std::vector<double> state_std;  // population std, 1 where degenerate
  double max_abs_return = 0.0;
  double best_return = 0.0;
  double mean_return = 0.0;
  std::size_t count = 0;
};

class TrajectoryStore {
 public:
  TrajectoryStore() = default;
  TrajectoryStore(std::string env_id, std::size_t state_dim, std::size_t action_dim);

  const std::string& env_id() const { return env_id_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  const DatasetStats& stats() const { return stats_; }
  std::size_t size() const { return trajectories_.size(); }
  bool empty() const { return trajectories_.empty(); }

  /// Throws DimensionError when the trajectory's dims differ from the store's.
  void add(Trajectory traj);

 private:
  void recompute_stats();

  std::string env_id_;
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
  std::vector<Trajectory> trajectories_;
  DatasetStats stats_;
};

/// Conditioning target at t = 0: η·G for G ≥ 0, G/η otherwise, where G is
/// the best return in the data.
double initial_rtg(double best_return, double eta);
double initial_rtg(const TrajectoryStore& store, double eta);

/// True when the trajectory begins where the env's own episodes begin
/// (StitchChain: position 0; PointReach starts anywhere).
bool starts_like_episode(const Trajectory& traj, std::string_view env_id);
/// Best return over trajectories that start like an episode, or nullopt when
/// there are none.
std::optional<double> best_episode_return(const TrajectoryStore& store);

/// Standard deviation of the Gaussian action noise that brings the PointReach
/// expert down to a normalized score of about 33.
inline constexpr double kPointReachMediumNoise = 3.85;

/// Tiers: pointreach {medium, medium-replay}; stitchchain {stitch}. Throws
/// ArgumentError for other pairs or n_traj = 0.
TrajectoryStore generate_dataset(std::string_view env_id, std::string_view tier,
                                 std::size_t n_traj, std::uint64_t seed);

/// Binary container: one JSON header line, then per trajectory a little-endian
/// u64 length followed by states, actions and rewards as little-endian f64.
void save_store(const TrajectoryStore& store, const std::filesystem::path& path);
std::string serialize_store(const TrajectoryStore& store);
/// Throws VersionError, TruncationError or FormatError.
TrajectoryStore load_store(const std::filesystem::path& path);
TrajectoryStore deserialize_store(std::string_view bytes);

/// One JSON object per line with states/actions as nested lists.
void export_jsonl(const TrajectoryStore& store, const std::filesystem::path& path);

}  // namespace drdt3::envdata
