// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "drdt3/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>

#include "drdt3/binary_io.hpp"
#include "drdt3/errors.hpp"

namespace drdt3 {

Normalizer Normalizer::from_store(const envdata::TrajectoryStore& store) {
  if (store.empty()) throw ArgumentError("cannot derive normalization from an empty dataset");
  const auto& s = store.stats();
  Normalizer n;
  n.state_mean = s.state_mean;
  n.state_std = s.state_std;
  n.return_scale = s.max_abs_return > 0.0 ? s.max_abs_return : 1.0;
  n.best_return = s.best_return;
  return n;
}

PolicyBundle PolicyBundle::create(const TrainConfig& config, const envdata::EnvSpec& spec,
                                  Normalizer norm, Rng& rng) {
  config.validate();
  if (norm.state_mean.size() != spec.state_dim || norm.state_std.size() != spec.state_dim) {
    throw DimensionError("normalizer has " + std::to_string(norm.state_mean.size()) +
                         " state entries, env " + spec.id + " has d_s=" +
                         std::to_string(spec.state_dim));
  }
  PolicyBundle b;
  b.config = config;
  b.env_id = spec.id;
  b.state_dim = spec.state_dim;
  b.action_dim = spec.action_dim;
  b.action_max = spec.action_max;
  b.max_episode_len = spec.horizon;
  b.norm = std::move(norm);
  b.dt3 = dt3::DT3Params::init(config.model_config(spec.state_dim, spec.action_dim, spec.horizon),
                               rng);
  b.noise = diffusion::NoiseApproximatorParams::init(config.noise_config(spec.action_dim), rng);
  b.schedule = diffusion::vp_schedule(config.diffusion_steps, config.beta_min, config.beta_max);
  return b;
}

ParamList PolicyBundle::parameters() {
  ParamList out = dt3.parameters();
  for (auto& p : noise.parameters()) out.push_back(p);
  return out;
}

// ---- persistence -----------------------------------------------------------

std::string serialize_bundle(const PolicyBundle& bundle) {
  PolicyBundle copy = bundle;
  const ParamList params = copy.parameters();
  nlohmann::ordered_json h;
  h["format"] = kBundleFormat;
  h["env"] = bundle.env_id;
  h["state_dim"] = bundle.state_dim;
  h["action_dim"] = bundle.action_dim;
  h["action_max"] = bundle.action_max;
  h["max_episode_len"] = bundle.max_episode_len;
  h["seed"] = bundle.config.seed;
  h["dt_baseline"] = bundle.is_dt_baseline();
  h["config"] = serialize_config(bundle.config);
  h["normalizer"] = {{"state_mean", bundle.norm.state_mean},
                     {"state_std", bundle.norm.state_std},
                     {"return_scale", bundle.norm.return_scale},
                     {"best_return", bundle.norm.best_return}};
  h["schedule"] = {{"n_steps", bundle.config.diffusion_steps},
                   {"beta_min", bundle.config.beta_min},
                   {"beta_max", bundle.config.beta_max}};
  auto& list = h["params"] = nlohmann::ordered_json::array();
  for (const auto& p : params) list.push_back({{"name", p.name}, {"shape", p.array->shape()}});
  io::ByteWriter w;
  w.header(h.dump());
  for (const auto& p : params) {
    w.u64(p.array->numel());
    w.f64s(p.array->values());
  }
  return w.bytes();
}

PolicyBundle deserialize_bundle(std::string_view bytes) {
  io::ByteReader r(bytes, "policy bundle");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.header());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("policy bundle header is not valid JSON: ") + e.what());
  }
  if (!h.is_object() || !h.contains("format")) throw FormatError("policy bundle has no format tag");
  if (h["format"] != kBundleFormat) {
    throw VersionError("policy bundle version " + h["format"].dump() + " is not supported (want " +
                       std::string(kBundleFormat) + ")");
  }
  PolicyBundle b;
  nlohmann::json plist;
  try {
    const TrainConfig config = parse_config(h.at("config").get<std::string>(), "bundle config");
    envdata::EnvSpec spec;
    spec.id = h.at("env").get<std::string>();
    spec.state_dim = h.at("state_dim").get<std::size_t>();
    spec.action_dim = h.at("action_dim").get<std::size_t>();
    spec.action_max = h.at("action_max").get<double>();
    spec.horizon = h.at("max_episode_len").get<std::size_t>();
    Normalizer norm;
    const auto& n = h.at("normalizer");
    norm.state_mean = n.at("state_mean").get<std::vector<double>>();
    norm.state_std = n.at("state_std").get<std::vector<double>>();
    norm.return_scale = n.at("return_scale").get<double>();
    norm.best_return = n.at("best_return").get<double>();
    Rng scratch(0);
    b = PolicyBundle::create(config, spec, std::move(norm), scratch);
    plist = h.at("params");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("policy bundle header is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("policy bundle config is invalid: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("policy bundle is inconsistent: ") + e.what());
  }
  ParamList params = b.parameters();
  if (plist.size() != params.size()) {
    throw FormatError("policy bundle lists " + std::to_string(plist.size()) +
                      " parameters, the configured model has " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (plist[k].value("name", "") != p.name ||
        plist[k].value("shape", nx::Shape{}) != p.array->shape()) {
      throw FormatError("policy bundle parameter " + std::to_string(k) + " is " +
                        plist[k].dump() + ", expected " + p.name + " " +
                        nx::shape_str(p.array->shape()));
    }
    const std::uint64_t n = r.u64();
    if (n != p.array->numel()) throw FormatError("size mismatch for parameter " + p.name);
    const auto vals = r.f64s(n);
    std::copy(vals.begin(), vals.end(), p.array->values().begin());
  }
  r.expect_end();
  return b;
}

void save_bundle(const PolicyBundle& bundle, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_bundle(bundle));
}

PolicyBundle load_bundle(const std::filesystem::path& path) {
  return deserialize_bundle(io::read_file(path));
}

// ---- acting ----------------------------------------------------------------

dt3::ContextWindow normalize_context(const dt3::ContextWindow& raw, const PolicyBundle& bundle) {
  dt3::ContextWindow c = raw;
  const std::size_t ds = bundle.state_dim;
  for (std::size_t t = 0; t < c.len(); ++t) {
    if (!c.pad_mask[t]) continue;
    c.rtgs[t] = bundle.config.condition_on_rtg ? raw.rtgs[t] / bundle.norm.return_scale : 0.0;
    for (std::size_t j = 0; j < ds; ++j) {
      c.states[t * ds + j] = (raw.states[t * ds + j] - bundle.norm.state_mean[j]) /
                             bundle.norm.state_std[j];
    }
  }
  return c;
}

std::vector<double> select_action(const PolicyBundle& bundle, const dt3::ContextWindow& raw,
                                  EvalMode mode, Rng& rng) {
  const auto ctx = normalize_context(raw, bundle);
  const auto pred = dt3::predict_coarse_actions(ctx, bundle.dt3);
  const std::size_t da = bundle.action_dim;
  std::vector<double> coarse(pred.end() - static_cast<std::ptrdiff_t>(da), pred.end());
  if (mode == EvalMode::kDt3Only) {
    for (auto& v : coarse) v = std::clamp(v, -bundle.action_max, bundle.action_max);
    return coarse;
  }
  diffusion::SampleOptions opt;
  opt.action_low = -bundle.action_max;
  opt.action_high = bundle.action_max;
  opt.sqrt_beta_noise = bundle.config.sqrt_beta_noise;
  return diffusion::sample_action(coarse, bundle.noise, bundle.schedule, rng, opt);
}

EpisodeResult rollout(const PolicyBundle& bundle, envdata::Env& env, const EvalConfig& config,
                      Rng& rng) {
  const auto& spec = env.spec();
  if (spec.state_dim != bundle.state_dim || spec.action_dim != bundle.action_dim) {
    throw ContractError("policy expects d_s=" + std::to_string(bundle.state_dim) +
                        ", d_a=" + std::to_string(bundle.action_dim) + " but env " + spec.id +
                        " has d_s=" + std::to_string(spec.state_dim) +
                        ", d_a=" + std::to_string(spec.action_dim));
  }
  const std::size_t k = bundle.config.context_len, ds = spec.state_dim, da = spec.action_dim;
  EpisodeResult res;
  res.initial_rtg = envdata::initial_rtg(bundle.norm.best_return, config.rtg_scale);
  double g = res.initial_rtg;
  std::vector<double> states, actions, rewards;
  auto s = env.reset(rng);
  for (std::size_t t = 0;; ++t) {
    states.insert(states.end(), s.begin(), s.end());
    res.rtgs.push_back(g);
    const std::size_t real = std::min(t + 1, k);
    auto ctx = dt3::ContextWindow::empty(k, ds, da);
    for (std::size_t i = 0; i < real; ++i) {
      const std::size_t row = k - real + i, step = t + 1 - real + i;
      ctx.pad_mask[row] = true;
      ctx.timesteps[row] = step;
      ctx.rtgs[row] = res.rtgs[step];
      std::copy_n(states.begin() + step * ds, ds, ctx.states.begin() + row * ds);
      // the current step's action is still unknown; its slot stays zero
      if (step < t) std::copy_n(actions.begin() + step * da, da, ctx.actions.begin() + row * da);
    }
    auto a = select_action(bundle, ctx, config.mode, rng);
    actions.insert(actions.end(), a.begin(), a.end());
    auto r = env.step(a);
    rewards.push_back(r.reward);
    res.episode_return += r.reward;
    g -= r.reward;
    s = std::move(r.state);
    if (r.done) break;
  }
  res.length = rewards.size();
  res.success = env.success();
  res.trajectory =
      envdata::Trajectory::make(ds, da, std::move(states), std::move(actions), std::move(rewards));
  return res;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k) {
  // splitmix64 finalizer over (seed, k)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

EvalSummary evaluate(const PolicyBundle& bundle, const EvalConfig& config) {
  if (config.episodes == 0) throw ArgumentError("evaluation needs at least one episode");
  EvalSummary sum;
  const auto& spec = envdata::env_spec(bundle.env_id);
  std::size_t successes = 0;
  for (std::size_t ep = 0; ep < config.episodes; ++ep) {
    Rng rng(derive_seed(config.seed, ep));
    auto env = envdata::make_env(bundle.env_id);
    sum.episodes.push_back(rollout(bundle, *env, config, rng));
    sum.mean_return += sum.episodes.back().episode_return;
    successes += sum.episodes.back().success ? 1 : 0;
  }
  const double n = static_cast<double>(config.episodes);
  sum.mean_return /= n;
  double var = 0.0;
  for (const auto& e : sum.episodes) var += (e.episode_return - sum.mean_return) *
                                           (e.episode_return - sum.mean_return);
  sum.std_return = std::sqrt(var / n);
  sum.success_rate = successes / n;
  sum.normalized_score = envdata::normalized_score(sum.mean_return, spec);
  return sum;
}

std::string eval_csv(const EvalSummary& summary, const envdata::EnvSpec& spec) {
  std::string out = "episode,return,length,success,norm_score,initial_rtg\n";
  char buf[256];
  for (std::size_t k = 0; k < summary.episodes.size(); ++k) {
    const auto& e = summary.episodes[k];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%zu,%d,%.17g,%.17g\n", k, e.episode_return, e.length,
                  e.success ? 1 : 0, envdata::normalized_score(e.episode_return, spec),
                  e.initial_rtg);
    out += buf;
  }
  return out;
}

}  // namespace drdt3
