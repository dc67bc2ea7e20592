// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "drdt3/envdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>

#include "drdt3/binary_io.hpp"
#include "drdt3/errors.hpp"

namespace drdt3::envdata {

namespace {

constexpr std::uint64_t kReferenceSeed = 0x5eed5c0e;
constexpr std::size_t kReferenceEpisodes = 100;
constexpr const char* kStoreFormat = "drdt3/1";

EnvSpec base_spec(std::string_view id) {
  EnvSpec s;
  if (id == kPointReach) {
    s.id = std::string(kPointReach);
    s.state_dim = 4;
    s.action_dim = 2;
    s.horizon = 50;
    s.dense_reward = true;
  } else if (id == kStitchChain) {
    s.id = std::string(kStitchChain);
    s.state_dim = 1;
    s.action_dim = 1;
    s.horizon = 20;
    s.dense_reward = false;
  } else {
    throw ArgumentError("unknown env '" + std::string(id) + "' (expected pointreach or stitchchain)");
  }
  return s;
}

double clamp_unit(double a) { return std::clamp(a, -1.0, 1.0); }

template <class Policy>
double mean_return(std::string_view id, Policy&& policy, Rng& rng) {
  double total = 0.0;
  for (std::size_t ep = 0; ep < kReferenceEpisodes; ++ep) {
    auto env = make_env(id);
    auto s = env->reset(rng);
    for (;;) {
      auto r = env->step(policy(s, rng));
      total += r.reward;
      s = std::move(r.state);
      if (r.done) break;
    }
  }
  return total / kReferenceEpisodes;
}

}  // namespace

// ---- PointReach ------------------------------------------------------------

const EnvSpec& PointReach::spec() const { return env_spec(kPointReach); }

std::vector<double> PointReach::reset(Rng& rng) {
  px_ = rng.uniform(-2.0, 2.0);
  py_ = rng.uniform(-2.0, 2.0);
  vx_ = vy_ = 0.0;
  t_ = 0;
  return observe();
}

StepResult PointReach::step(std::span<const double> action) {
  if (action.size() != 2) throw ContractError("pointreach expects a 2-D action");
  const double ax = clamp_unit(action[0]), ay = clamp_unit(action[1]);
  px_ += kDt * vx_;
  py_ += kDt * vy_;
  vx_ += kDt * ax;
  vy_ += kDt * ay;
  ++t_;
  return {observe(), -std::hypot(px_, py_), t_ >= 50};
}

bool PointReach::success() const { return std::hypot(px_, py_) < kSuccessRadius; }

void PointReach::set_state(double px, double py, double vx, double vy) {
  px_ = px;
  py_ = py;
  vx_ = vx;
  vy_ = vy;
}

// ---- StitchChain -----------------------------------------------------------

const EnvSpec& StitchChain::spec() const { return env_spec(kStitchChain); }

std::vector<double> StitchChain::reset(Rng&) {
  pos_ = 0.0;
  t_ = 0;
  reached_ = false;
  return observe();
}

StepResult StitchChain::step(std::span<const double> action) {
  if (action.size() != 1) throw ContractError("stitchchain expects a 1-D action");
  pos_ = std::clamp(pos_ + clamp_unit(action[0]), 0.0, kGoal);
  ++t_;
  double reward = 0.0;
  if (pos_ >= kGoal && !reached_) {
    reached_ = true;
    reward = 1.0;
  }
  return {observe(), reward, reached_ || t_ >= 20};
}

void StitchChain::set_position(double pos) { pos_ = std::clamp(pos, 0.0, kGoal); }

// ---- registry --------------------------------------------------------------

std::unique_ptr<Env> make_env(std::string_view env_id) {
  if (env_id == kPointReach) return std::make_unique<PointReach>();
  if (env_id == kStitchChain) return std::make_unique<StitchChain>();
  base_spec(env_id);  // throws with the list of valid ids
  return nullptr;
}

const EnvSpec& env_spec(std::string_view env_id) {
  static std::mutex mu;
  static std::map<std::string, EnvSpec, std::less<>> cache;
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(env_id); it != cache.end()) return it->second;
  }
  EnvSpec s = base_spec(env_id);
  Rng rng(kReferenceSeed);
  s.random_score = mean_return(env_id, [&](const auto&, Rng& r) { return random_action(s, r); }, rng);
  s.expert_score =
      mean_return(env_id, [&](const auto& st, Rng&) { return expert_action(env_id, st); }, rng);
  std::lock_guard lock(mu);
  return cache.emplace(s.id, s).first->second;
}

std::vector<double> expert_action(std::string_view env_id, std::span<const double> state) {
  if (env_id == kPointReach) {
    // critically damped PD toward the origin
    constexpr double kp = 1.0, kd = 2.0;
    return {clamp_unit(-kp * state[0] - kd * state[2]), clamp_unit(-kp * state[1] - kd * state[3])};
  }
  if (env_id == kStitchChain) return {1.0};
  throw ArgumentError("unknown env '" + std::string(env_id) + "'");
}

std::vector<double> random_action(const EnvSpec& spec, Rng& rng) {
  std::vector<double> a(spec.action_dim);
  for (auto& v : a) v = rng.uniform(-spec.action_max, spec.action_max);
  return a;
}

double normalized_score(double raw, const EnvSpec& spec) {
  if (!(spec.expert_score > spec.random_score)) {
    throw ArgumentError("normalized score needs expert_score > random_score for " + spec.id);
  }
  return 100.0 * (raw - spec.random_score) / (spec.expert_score - spec.random_score);
}

std::vector<double> compute_rtg(std::span<const double> rewards) {
  if (rewards.empty()) throw ArgumentError("compute_rtg needs at least one reward");
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc += rewards[t];
    g[t] = acc;
  }
  return g;
}

// ---- trajectories ----------------------------------------------------------

Trajectory Trajectory::make(std::size_t state_dim, std::size_t action_dim,
                            std::vector<double> states, std::vector<double> actions,
                            std::vector<double> rewards) {
  const std::size_t t = rewards.size();
  if (t == 0) throw DimensionError("trajectory has no steps");
  if (states.size() != t * state_dim || actions.size() != t * action_dim) {
    throw DimensionError("trajectory of length " + std::to_string(t) + " has " +
                         std::to_string(states.size()) + " state and " +
                         std::to_string(actions.size()) + " action values (d_s=" +
                         std::to_string(state_dim) + ", d_a=" + std::to_string(action_dim) + ")");
  }
  Trajectory tr;
  tr.state_dim = state_dim;
  tr.action_dim = action_dim;
  tr.rtgs = compute_rtg(rewards);
  tr.states = std::move(states);
  tr.actions = std::move(actions);
  tr.rewards = std::move(rewards);
  return tr;
}

TrajectoryStore::TrajectoryStore(std::string env_id, std::size_t state_dim, std::size_t action_dim)
    : env_id_(std::move(env_id)), state_dim_(state_dim), action_dim_(action_dim) {
  recompute_stats();
}

void TrajectoryStore::add(Trajectory traj) {
  if (traj.state_dim != state_dim_ || traj.action_dim != action_dim_) {
    throw DimensionError("trajectory dims (" + std::to_string(traj.state_dim) + ", " +
                         std::to_string(traj.action_dim) + ") do not match store (" +
                         std::to_string(state_dim_) + ", " + std::to_string(action_dim_) + ")");
  }
  trajectories_.push_back(std::move(traj));
  recompute_stats();
}

void TrajectoryStore::recompute_stats() {
  DatasetStats s;
  s.count = trajectories_.size();
  s.state_mean.assign(state_dim_, 0.0);
  s.state_std.assign(state_dim_, 1.0);
  if (trajectories_.empty()) {
    stats_ = std::move(s);
    return;
  }
  std::size_t n = 0;
  std::vector<double> sum(state_dim_, 0.0);
  for (const auto& tr : trajectories_)
    for (std::size_t t = 0; t < tr.length(); ++t, ++n)
      for (std::size_t j = 0; j < state_dim_; ++j) sum[j] += tr.state(t)[j];
  for (std::size_t j = 0; j < state_dim_; ++j) s.state_mean[j] = sum[j] / n;
  std::vector<double> sq(state_dim_, 0.0);
  for (const auto& tr : trajectories_)
    for (std::size_t t = 0; t < tr.length(); ++t)
      for (std::size_t j = 0; j < state_dim_; ++j) {
        const double d = tr.state(t)[j] - s.state_mean[j];
        sq[j] += d * d;
      }
  for (std::size_t j = 0; j < state_dim_; ++j) {
    const double sd = std::sqrt(sq[j] / n);
    s.state_std[j] = sd > 1e-6 ? sd : 1.0;
  }
  s.best_return = trajectories_.front().total_return();
  double total = 0.0;
  for (const auto& tr : trajectories_) {
    const double g = tr.total_return();
    s.best_return = std::max(s.best_return, g);
    s.max_abs_return = std::max(s.max_abs_return, std::fabs(g));
    total += g;
  }
  s.mean_return = total / s.count;
  stats_ = std::move(s);
}

double initial_rtg(double best_return, double eta) {
  if (!(eta > 0.0)) throw ArgumentError("rtg scale must be > 0");
  return best_return >= 0.0 ? eta * best_return : best_return / eta;
}

double initial_rtg(const TrajectoryStore& store, double eta) {
  if (store.empty()) throw ArgumentError("initial_rtg needs a non-empty store");
  return initial_rtg(store.stats().best_return, eta);
}

bool starts_like_episode(const Trajectory& traj, std::string_view env_id) {
  if (traj.length() == 0) return false;
  if (env_id == kStitchChain) return traj.state(0)[0] == 0.0;
  env_spec(env_id);
  return true;
}

std::optional<double> best_episode_return(const TrajectoryStore& store) {
  std::optional<double> best;
  for (const auto& tr : store.trajectories()) {
    if (starts_like_episode(tr, store.env_id()) && (!best || tr.total_return() > *best)) {
      best = tr.total_return();
    }
  }
  return best;
}

// ---- dataset generation ----------------------------------------------------

namespace {

template <class Policy>
Trajectory collect(Env& env, std::vector<double> s, Policy&& policy) {
  const auto& spec = env.spec();
  std::vector<double> states, actions, rewards;
  for (;;) {
    auto a = policy(s);
    for (auto& v : a) v = std::clamp(v, -spec.action_max, spec.action_max);
    states.insert(states.end(), s.begin(), s.end());
    actions.insert(actions.end(), a.begin(), a.end());
    auto r = env.step(a);
    rewards.push_back(r.reward);
    s = std::move(r.state);
    if (r.done) break;
  }
  return Trajectory::make(spec.state_dim, spec.action_dim, std::move(states), std::move(actions),
                          std::move(rewards));
}

Trajectory noisy_expert(Rng& rng, double sigma) {
  PointReach env;
  auto s = env.reset(rng);
  return collect(env, s, [&](const std::vector<double>& st) {
    auto a = expert_action(kPointReach, st);
    for (auto& v : a) v += sigma * rng.normal();
    return a;
  });
}

}  // namespace

TrajectoryStore generate_dataset(std::string_view env_id, std::string_view tier,
                                 std::size_t n_traj, std::uint64_t seed) {
  if (n_traj == 0) throw ArgumentError("n_traj must be >= 1");
  const EnvSpec& spec = env_spec(env_id);
  TrajectoryStore store(spec.id, spec.state_dim, spec.action_dim);
  Rng rng(seed);

  if (env_id == kPointReach && tier == "medium") {
    for (std::size_t k = 0; k < n_traj; ++k) store.add(noisy_expert(rng, kPointReachMediumNoise));
  } else if (env_id == kPointReach && tier == "medium-replay") {
    // a replay-buffer-like mix: some purely random episodes, the rest noisy
    // experts ranging from medium quality down to poor
    for (std::size_t k = 0; k < n_traj; ++k) {
      if (rng.uniform() < 0.25) {
        PointReach env;
        auto s = env.reset(rng);
        store.add(collect(env, s, [&](const auto&) { return random_action(spec, rng); }));
      } else {
        store.add(noisy_expert(rng, kPointReachMediumNoise * rng.uniform(1.0, 3.0)));
      }
    }
  } else if (env_id == kStitchChain && tier == "stitch") {
    for (std::size_t k = 0; k < n_traj; ++k) {
      StitchChain env;
      auto s = env.reset(rng);
      if (k % 2 == 0) {
        // from the start, up to 4, then a random walk inside [4, 4.9]
        store.add(collect(env, s, [&](const std::vector<double>& st) {
          const double pos = st[0];
          if (pos < 4.0) return std::vector<double>{rng.uniform(0.6, 1.0)};
          return std::vector<double>{std::clamp(0.3 * rng.normal(), 4.0 - pos, 4.9 - pos)};
        }));
      } else {
        // teleported to 4, straight to the goal
        env.set_position(4.0);
        store.add(collect(env, env.observe(),
                          [&](const auto&) { return std::vector<double>{rng.uniform(0.6, 1.0)}; }));
      }
    }
    for (const auto& tr : store.trajectories()) {
      if (tr.state(0)[0] == 0.0 && tr.total_return() > 0.0) {
        throw EvaluationError("stitch dataset contains a full start-to-goal trajectory");
      }
    }
  } else {
    throw ArgumentError("unsupported dataset tier '" + std::string(tier) + "' for env '" +
                        std::string(env_id) +
                        "' (pointreach: medium, medium-replay; stitchchain: stitch)");
  }
  return store;
}

// ---- persistence -----------------------------------------------------------

namespace {

nlohmann::ordered_json stats_json(const DatasetStats& s) {
  nlohmann::ordered_json j;
  j["state_mean"] = s.state_mean;
  j["state_std"] = s.state_std;
  j["max_abs_return"] = s.max_abs_return;
  j["best_return"] = s.best_return;
  j["mean_return"] = s.mean_return;
  return j;
}

}  // namespace

std::string serialize_store(const TrajectoryStore& store) {
  nlohmann::ordered_json h;
  h["format"] = kStoreFormat;
  h["kind"] = "trajectories";
  h["env"] = store.env_id();
  h["state_dim"] = store.state_dim();
  h["action_dim"] = store.action_dim();
  h["count"] = store.size();
  h["stats"] = stats_json(store.stats());
  io::ByteWriter w;
  w.header(h.dump());
  for (const auto& tr : store.trajectories()) {
    w.u64(tr.length());
    w.f64s(tr.states);
    w.f64s(tr.actions);
    w.f64s(tr.rewards);
  }
  return w.bytes();
}

void save_store(const TrajectoryStore& store, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_store(store));
}

TrajectoryStore deserialize_store(std::string_view bytes) {
  io::ByteReader r(bytes, "trajectory file");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.header());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("trajectory file header is not valid JSON: ") + e.what());
  }
  if (!h.is_object() || !h.contains("format")) throw FormatError("trajectory file has no format tag");
  if (h["format"] != kStoreFormat) {
    throw VersionError("trajectory file version " + h["format"].dump() + " is not supported (want " +
                       kStoreFormat + ")");
  }
  std::string env;
  std::size_t ds = 0, da = 0, count = 0;
  try {
    if (h.at("kind") != "trajectories") throw FormatError("file does not hold trajectories");
    env = h.at("env").get<std::string>();
    ds = h.at("state_dim").get<std::size_t>();
    da = h.at("action_dim").get<std::size_t>();
    count = h.at("count").get<std::size_t>();
    if (h.at("stats").at("state_mean").size() != ds || h.at("stats").at("state_std").size() != ds) {
      throw FormatError("header stats do not match state_dim " + std::to_string(ds));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("trajectory file header is malformed: ") + e.what());
  }
  if (ds == 0 || da == 0) throw FormatError("trajectory file declares a zero dimension");
  TrajectoryStore store(env, ds, da);
  for (std::size_t k = 0; k < count; ++k) {
    const std::uint64_t t = r.u64();
    if (t == 0) throw FormatError("trajectory " + std::to_string(k) + " has length 0");
    auto states = r.f64s(t * ds);
    auto actions = r.f64s(t * da);
    auto rewards = r.f64s(t);
    store.add(Trajectory::make(ds, da, std::move(states), std::move(actions), std::move(rewards)));
  }
  r.expect_end();
  return store;
}

TrajectoryStore load_store(const std::filesystem::path& path) {
  return deserialize_store(io::read_file(path));
}

void export_jsonl(const TrajectoryStore& store, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& tr : store.trajectories()) {
    nlohmann::ordered_json j;
    j["env"] = store.env_id();
    auto rows = [](const std::vector<double>& flat, std::size_t width) {
      nlohmann::json arr = nlohmann::json::array();
      for (std::size_t i = 0; i < flat.size(); i += width)
        arr.push_back(std::vector<double>(flat.begin() + i, flat.begin() + i + width));
      return arr;
    };
    j["states"] = rows(tr.states, tr.state_dim);
    j["actions"] = rows(tr.actions, tr.action_dim);
    j["rewards"] = tr.rewards;
    j["rtgs"] = tr.rtgs;
    out << j.dump() << '\n';
  }
}

}  // namespace drdt3::envdata
