// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "drdt3/experiments.hpp"

#include <algorithm>
#include <chrono>

#include "drdt3/diffusion.hpp"
#include "drdt3/envdata.hpp"
#include "drdt3/errors.hpp"
#include "drdt3/policy.hpp"
#include "drdt3/rng.hpp"
#include "drdt3/training.hpp"

namespace drdt3::experiments {

bool TwoModeReport::bimodal() const {
  if (histogram.empty()) return false;
  const std::size_t v = histogram[valley];
  return histogram[left_peak] >= 2 * v && histogram[right_peak] >= 2 * v &&
         left_peak < valley && valley < right_peak;
}

TwoModeReport two_mode_sanity(const TwoModeOptions& o) {
  if (o.samples == 0 || o.bins < 2 || o.bins % 2 || o.data_size == 0 || o.batch_size == 0 ||
      o.diffusion_steps == 0) {
    throw ArgumentError("two_mode_sanity: samples, data_size, batch_size and diffusion_steps must "
                        "be positive and bins even");
  }
  Rng rng(o.seed);
  std::vector<double> data(o.data_size);
  for (std::size_t k = 0; k < o.data_size; ++k) {
    data[k] = (k % 2 ? o.mode : -o.mode) + o.jitter * rng.normal();
  }

  const TrainConfig defaults;
  auto noise_cfg = defaults.noise_config(1);
  auto params = diffusion::NoiseApproximatorParams::init(noise_cfg, rng);
  const auto sched =
      diffusion::vp_schedule(o.diffusion_steps, defaults.beta_min, defaults.beta_max);
  const ParamList plist = params.parameters();
  training::AdamWState adam;
  training::AdamWConfig opt;
  opt.lr = o.learning_rate;
  opt.weight_decay = 0.0;

  TwoModeReport rep;
  const std::size_t b = o.batch_size;
  const nx::DArray cond({b, 1}, 0.0);
  for (std::size_t u = 0; u < o.updates; ++u) {
    nx::DArray a0({b, 1}), eps({b, 1});
    std::vector<std::size_t> steps(b);
    for (std::size_t r = 0; r < b; ++r) a0[r] = data[rng.uniform_int(0, o.data_size - 1)];
    for (auto& s : steps) s = rng.uniform_int(1, sched.n_steps);
    for (auto& e : eps.values()) e = rng.normal();
    nx::Tape tape;
    auto loss = diffusion::diffusion_loss(tape, a0, tape.constant(cond), steps, eps, params, sched);
    zero_grads(plist);
    tape.backward(loss);
    training::clip_grad_norm(plist, 1.0);
    training::adamw_step(plist, adam, opt);
    rep.final_loss = loss.item();
  }

  std::vector<double> samples(o.samples);
  const std::vector<double> zero{0.0};
  for (auto& s : samples) s = diffusion::sample_action(zero, params, sched, rng)[0];

  rep.histogram.assign(o.bins, 0);
  const double width = 2.0 / static_cast<double>(o.bins);
  for (double s : samples) {
    const auto bin = static_cast<std::size_t>(std::clamp((s + 1.0) / width, 0.0,
                                                         static_cast<double>(o.bins) - 1.0));
    ++rep.histogram[bin];
  }
  const auto h = rep.histogram.begin();
  const std::size_t half = o.bins / 2;
  rep.left_peak = std::max_element(h, h + half) - h;
  rep.right_peak = std::max_element(h + half, rep.histogram.end()) - h;
  rep.valley = std::min_element(h + rep.left_peak, h + rep.right_peak + 1) - h;

  const double split = -1.0 + (static_cast<double>(rep.valley) + 0.5) * width;
  double ls = 0.0, rs = 0.0;
  std::size_t ln = 0, rn = 0;
  for (double s : samples) {
    if (s < split) {
      ls += s;
      ++ln;
    } else {
      rs += s;
      ++rn;
    }
  }
  rep.left_mean = ln ? ls / ln : 0.0;
  rep.right_mean = rn ? rs / rn : 0.0;
  rep.left_mass = static_cast<double>(ln) / static_cast<double>(o.samples);
  return rep;
}

TrainConfig stitch_config() {
  TrainConfig c;
  c.embed_dim = 32;
  c.noise_hidden_dim = 32;
  c.batch_size = 64;
  c.epochs = 20;
  c.updates_per_epoch = 200;
  c.eval_episodes = 10;
  return c;
}

TrainConfig behavior_cloning_ablation(TrainConfig base) {
  base.use_diffusion_loss = false;
  base.condition_on_rtg = false;
  base.eval_mode = EvalMode::kDt3Only;
  return base;
}

bool StitchReport::ordering_holds() const {
  return drdt3_success > 0.0 && drdt3_success >= dt3_only_success &&
         drdt3_success > bc_success && dt3_only_success > bc_success;
}

StitchReport stitching_benchmark(const TrainConfig& config, const StitchOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto store = envdata::generate_dataset(envdata::kStitchChain, "stitch", o.n_traj,
                                               o.data_seed);
  StitchReport rep;
  const auto full = training::train(config, store);
  const auto drdt3 = evaluate(full.bundle, {1.0, o.episodes, o.eval_seed, EvalMode::kDrdt3});
  const auto coarse = evaluate(full.bundle, {1.0, o.episodes, o.eval_seed, EvalMode::kDt3Only});
  const auto bc = training::train(behavior_cloning_ablation(config), store);
  const auto bce = evaluate(bc.bundle, {1.0, o.episodes, o.eval_seed, EvalMode::kDt3Only});
  rep.drdt3_success = drdt3.success_rate;
  rep.dt3_only_success = coarse.success_rate;
  rep.bc_success = bce.success_rate;
  rep.drdt3_return = drdt3.mean_return;
  rep.dt3_only_return = coarse.mean_return;
  rep.bc_return = bce.mean_return;
  rep.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace drdt3::experiments
