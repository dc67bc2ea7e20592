// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "drdt3/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>

#include "drdt3/binary_io.hpp"
#include "drdt3/errors.hpp"

namespace drdt3::training {

using nx::DArray;
using nx::Tape;
using nx::Var;

Var dt3_loss(Var pred, Var target, const std::vector<bool>& pad_mask, double a_max,
             LossNorm norm) {
  if (!(a_max > 0.0)) throw ArgumentError("dt3_loss: a_max must be > 0");
  if (pred.shape() != target.shape()) {
    throw DimensionError("dt3_loss: prediction " + nx::shape_str(pred.shape()) + " vs target " +
                         nx::shape_str(target.shape()));
  }
  const std::size_t k = pred.rows(), da = pred.cols();
  if (pad_mask.size() != k) throw DimensionError("dt3_loss: mask length differs from K");
  std::vector<double> mask(k * da);
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t j = 0; j < da; ++j) mask[t * da + j] = pad_mask[t] ? 1.0 : 0.0;
  Tape& tape = pred.tape();
  Var diff = (pred - target) * tape.constant(pred.shape(), std::move(mask));
  Var per = norm == LossNorm::kL1 ? nx::abs(diff) : nx::square(diff);
  return nx::scale(nx::sum(per), 1.0 / (static_cast<double>(k) * a_max));
}

double unified_loss(double l_diff, double l_dt3, double zeta) { return l_diff + zeta * l_dt3; }

Var unified_loss(Var l_diff, Var l_dt3, double zeta) { return l_diff + nx::scale(l_dt3, zeta); }

AdamWConfig AdamWConfig::from(const TrainConfig& c) {
  return {c.learning_rate, c.adam_beta1, c.adam_beta2, c.adam_eps, c.weight_decay};
}

void adamw_step(const ParamList& params, AdamWState& state, const AdamWConfig& config) {
  for (const auto& p : params) {
    if (!p.array->has_grad()) continue;
    for (double g : p.array->grad()) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient in parameter " + p.name);
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.array->numel(), 0.0);
      state.v.emplace_back(p.array->numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError("optimizer state tracks " + std::to_string(state.m.size()) +
                        " parameters, got " + std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t), c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto vals = params[k].array->values();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != vals.size()) throw ContractError("optimizer moments for " + params[k].name +
                                                     " have the wrong size");
    const bool has = params[k].array->has_grad();
    const auto grad = has ? params[k].array->grad() : std::span<double>{};
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double g = has ? grad[i] : 0.0;
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      vals[i] -= config.lr * config.weight_decay * vals[i];
      vals[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

double global_grad_norm(const ParamList& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.array->has_grad()) continue;
    for (double g : p.array->grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(const ParamList& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (const auto& p : params) {
      if (!p.array->has_grad()) continue;
      for (auto& g : p.array->grad()) g *= s;
    }
  }
  return norm;
}

dt3::ContextWindow window_at(const envdata::Trajectory& traj, std::size_t end, std::size_t k) {
  if (end >= traj.length()) throw RangeError("window end past trajectory length");
  const std::size_t ds = traj.state_dim, da = traj.action_dim;
  const std::size_t real = std::min(end + 1, k);
  auto ctx = dt3::ContextWindow::empty(k, ds, da);
  for (std::size_t i = 0; i < real; ++i) {
    const std::size_t row = k - real + i, step = end + 1 - real + i;
    ctx.pad_mask[row] = true;
    ctx.timesteps[row] = step;
    ctx.rtgs[row] = traj.rtgs[step];
    std::copy_n(traj.state(step).begin(), ds, ctx.states.begin() + row * ds);
    std::copy_n(traj.action(step).begin(), da, ctx.actions.begin() + row * da);
  }
  return ctx;
}

Batch sample_batch(const envdata::TrajectoryStore& store, const PolicyBundle& bundle,
                   std::size_t batch_size, Rng& rng) {
  if (store.empty()) throw ArgumentError("cannot sample from an empty dataset");
  const auto& trajs = store.trajectories();
  std::vector<std::size_t> cum;
  std::size_t total = 0;
  for (const auto& tr : trajs) cum.push_back(total += tr.length());

  const std::size_t k = bundle.config.context_len, da = bundle.action_dim;
  Batch b;
  b.final_actions = DArray({batch_size, da});
  b.eps = DArray({batch_size, da});
  for (std::size_t r = 0; r < batch_size; ++r) {
    const std::size_t flat = rng.uniform_int(0, total - 1);
    const std::size_t ti = std::upper_bound(cum.begin(), cum.end(), flat) - cum.begin();
    const std::size_t end = flat - (ti == 0 ? 0 : cum[ti - 1]);
    const auto raw = window_at(trajs[ti], end, k);
    b.targets.emplace_back(nx::Shape{k, da}, raw.actions);
    b.contexts.push_back(normalize_context(raw, bundle));
    for (std::size_t j = 0; j < da; ++j) b.final_actions(r, j) = trajs[ti].action(end)[j];
  }
  for (std::size_t r = 0; r < batch_size; ++r) {
    b.steps.push_back(rng.uniform_int(1, bundle.schedule.n_steps));
  }
  for (auto& v : b.eps.values()) v = rng.normal();
  return b;
}

LossTerms compute_losses(Tape& tape, const Batch& batch, const PolicyBundle& bundle) {
  const std::size_t n = batch.contexts.size();
  if (n == 0) throw ArgumentError("empty batch");
  const std::size_t k = bundle.config.context_len;
  std::vector<Var> per_window, last;
  per_window.reserve(n);
  last.reserve(n);
  for (std::size_t b = 0; b < n; ++b) {
    Var pred = dt3::predict_coarse_actions(tape, batch.contexts[b], bundle.dt3);
    per_window.push_back(dt3_loss(pred, tape.constant(batch.targets[b]),
                                  batch.contexts[b].pad_mask, bundle.action_max,
                                  bundle.config.dt3_loss_norm));
    // the diffusion model only sees the current step's coarse action
    last.push_back(nx::slice_rows(pred, k - 1, 1));
  }
  LossTerms terms;
  terms.l_dt3 = nx::scale(nx::sum(nx::concat_rows(per_window)), 1.0 / static_cast<double>(n));
  terms.l_diff = diffusion::diffusion_loss(tape, batch.final_actions, nx::concat_rows(last),
                                           batch.steps, batch.eps, bundle.noise, bundle.schedule);
  terms.l_total = bundle.config.use_diffusion_loss
                      ? unified_loss(terms.l_diff, terms.l_dt3, bundle.config.zeta)
                      : nx::scale(terms.l_dt3, bundle.config.zeta);
  return terms;
}

namespace {

void append_row(std::string& out, const char* fmt, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, args...);
  out += buf;
}

constexpr const char* kStateFormat = "drdt3-trainer/1";

}  // namespace

std::string MetricsLog::updates_csv() const {
  std::string out = "update_idx,l_diff,l_dt3,l_total\n";
  for (const auto& u : updates)
    append_row(out, "%zu,%.17g,%.17g,%.17g\n", u.update, u.l_diff, u.l_dt3, u.l_total);
  return out;
}

std::string MetricsLog::epochs_csv() const {
  std::string out = "epoch,mean_return,success_rate,norm_score\n";
  for (const auto& e : epochs)
    append_row(out, "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.mean_return, e.success_rate,
               e.norm_score);
  return out;
}

Trainer::Trainer(const TrainConfig& config, const envdata::TrajectoryStore& store)
    : config_(config), store_(&store), rng_(config.seed) {
  config_.validate();
  if (store.empty()) throw ArgumentError("training needs a non-empty dataset");
  const auto& spec = envdata::env_spec(store.env_id());
  if (spec.state_dim != store.state_dim() || spec.action_dim != store.action_dim()) {
    throw DimensionError("dataset dims (" + std::to_string(store.state_dim()) + ", " +
                         std::to_string(store.action_dim()) + ") do not match env " + spec.id);
  }
  bundle_ = PolicyBundle::create(config_, spec, Normalizer::from_store(store), rng_);
}

const UpdateRecord& Trainer::step() {
  const Batch batch = sample_batch(*store_, bundle_, config_.batch_size, rng_);
  Tape tape;
  const LossTerms terms = compute_losses(tape, batch, bundle_);
  UpdateRecord rec{update_ + 1, terms.l_diff.item(), terms.l_dt3.item(), terms.l_total.item()};
  if (!std::isfinite(rec.l_diff) || !std::isfinite(rec.l_dt3) || !std::isfinite(rec.l_total)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "non-finite loss at update %zu (l_diff=%g, l_dt3=%g)",
                  rec.update, rec.l_diff, rec.l_dt3);
    throw NonFiniteError(buf);
  }
  const ParamList params = bundle_.parameters();
  zero_grads(params);
  tape.backward(terms.l_total);
  if (config_.grad_clip > 0.0) clip_grad_norm(params, config_.grad_clip);
  adamw_step(params, adam_, AdamWConfig::from(config_));
  ++update_;
  log_.updates.push_back(rec);
  return log_.updates.back();
}

const EpochRecord& Trainer::run_epoch() {
  if (finished()) throw ContractError("training already finished");
  const std::size_t target = (epoch_ + 1) * config_.updates_per_epoch;
  while (update_ < target) step();
  ++epoch_;
  EpochRecord rec{epoch_, 0.0, 0.0, 0.0};
  if (config_.eval_episodes > 0) {
    EvalConfig ec{config_.rtg_scale, config_.eval_episodes, derive_seed(config_.seed, 1000 + epoch_),
                  config_.eval_mode};
    const auto summary = evaluate(bundle_, ec);
    rec.mean_return = summary.mean_return;
    rec.success_rate = summary.success_rate;
    rec.norm_score = summary.normalized_score;
  }
  log_.epochs.push_back(rec);
  return log_.epochs.back();
}

namespace {

// Everything except the run length, which a resumed run may extend.
TrainConfig without_epochs(TrainConfig c) {
  c.epochs = 0;
  return c;
}

}  // namespace

std::string Trainer::serialize_state() const {
  nlohmann::ordered_json h;
  h["format"] = kStateFormat;
  h["config_hash"] = config_hash(without_epochs(config_));
  h["epoch"] = epoch_;
  h["update"] = update_;
  h["adam_step"] = adam_.step;
  h["rng"] = rng_.save_state();
  h["moments"] = adam_.m.size();
  auto& ups = h["updates"] = nlohmann::ordered_json::array();
  for (const auto& u : log_.updates) ups.push_back({u.update, u.l_diff, u.l_dt3, u.l_total});
  auto& eps = h["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : log_.epochs)
    eps.push_back({e.epoch, e.mean_return, e.success_rate, e.norm_score});
  io::ByteWriter w;
  w.header(h.dump());
  for (std::size_t k = 0; k < adam_.m.size(); ++k) {
    w.u64(adam_.m[k].size());
    w.f64s(adam_.m[k]);
    w.f64s(adam_.v[k]);
  }
  return w.bytes();
}

void Trainer::restore(PolicyBundle bundle, std::string_view state_bytes) {
  io::ByteReader r(state_bytes, "trainer checkpoint");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.header());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("trainer checkpoint header is not valid JSON: ") + e.what());
  }
  if (!h.is_object() || h.value("format", "") != kStateFormat) {
    throw VersionError("trainer checkpoint is not in format " + std::string(kStateFormat));
  }
  if (serialize_config(without_epochs(bundle.config)) != serialize_config(without_epochs(config_))) {
    throw FormatError("checkpoint bundle was trained with a different config");
  }
  AdamWState adam;
  MetricsLog log;
  std::size_t epoch = 0, update = 0;
  std::string rng_state;
  try {
    if (h.at("config_hash") != config_hash(without_epochs(config_))) {
      throw FormatError("trainer checkpoint config hash does not match the run config");
    }
    epoch = h.at("epoch").get<std::size_t>();
    update = h.at("update").get<std::size_t>();
    adam.step = h.at("adam_step").get<std::uint64_t>();
    rng_state = h.at("rng").get<std::string>();
    for (const auto& u : h.at("updates"))
      log.updates.push_back({u.at(0).get<std::size_t>(), u.at(1).get<double>(),
                             u.at(2).get<double>(), u.at(3).get<double>()});
    for (const auto& e : h.at("epochs"))
      log.epochs.push_back({e.at(0).get<std::size_t>(), e.at(1).get<double>(),
                            e.at(2).get<double>(), e.at(3).get<double>()});
    const std::size_t n = h.at("moments").get<std::size_t>();
    const ParamList params = bundle.parameters();
    if (n != 0 && n != params.size()) {
      throw FormatError("trainer checkpoint has moments for " + std::to_string(n) +
                        " parameters, bundle has " + std::to_string(params.size()));
    }
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint64_t len = r.u64();
      if (len != params[k].array->numel()) {
        throw FormatError("moment size mismatch for " + params[k].name);
      }
      adam.m.push_back(r.f64s(len));
      adam.v.push_back(r.f64s(len));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("trainer checkpoint header is malformed: ") + e.what());
  }
  r.expect_end();
  if (update != epoch * config_.updates_per_epoch || log.updates.size() != update) {
    throw FormatError("trainer checkpoint is not at an epoch boundary");
  }
  rng_.restore_state(rng_state);
  bundle_ = std::move(bundle);
  bundle_.config = config_;
  adam_ = std::move(adam);
  log_ = std::move(log);
  epoch_ = epoch;
  update_ = update;
}

TrainResult train(const TrainConfig& config, const envdata::TrajectoryStore& store,
                  const TrainHooks& hooks) {
  Trainer trainer(config, store);
  while (!trainer.finished()) {
    trainer.run_epoch();
    if (hooks.on_epoch_end) hooks.on_epoch_end(trainer);
  }
  return {trainer.bundle(), trainer.log()};
}

}  // namespace drdt3::training
