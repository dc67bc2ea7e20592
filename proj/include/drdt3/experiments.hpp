// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end experiments shared by the acceptance suite and the CLI: a
// two-mode generative sanity run for the action diffusion and the stitching
// benchmark.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "drdt3/config.hpp"

namespace drdt3::experiments {

struct TwoModeOptions {
  double mode = 0.8;          // data sits at ±mode
  double jitter = 0.05;       // std of each mode
  std::size_t data_size = 2000;
  std::size_t updates = 1500;
  std::size_t batch_size = 256;
  double learning_rate = 2e-3;
  std::size_t diffusion_steps = 20;
  std::size_t samples = 10000;
  std::size_t bins = 40;      // histogram over [-1, 1]
  std::uint64_t seed = 0;
};

struct TwoModeReport {
  std::vector<std::size_t> histogram;
  std::size_t left_peak = 0;   // bin index of the tallest bin below 0
  std::size_t right_peak = 0;  // tallest bin at or above 0
  std::size_t valley = 0;      // smallest bin between the peaks
  double left_mean = 0.0;      // sample mean below the valley
  double right_mean = 0.0;     // sample mean above the valley
  double left_mass = 0.0;
  double final_loss = 0.0;

  /// Both peaks at least twice as tall as the valley.
  bool bimodal() const;
};

/// Trains a noise approximator on 1-D actions drawn from two equal modes at
/// ±mode with a constant zero condition, then samples the reverse chain.
TwoModeReport two_mode_sanity(const TwoModeOptions& options = {});

struct StitchOptions {
  std::size_t n_traj = 200;
  std::uint64_t data_seed = 1;
  std::size_t episodes = 50;
  std::uint64_t eval_seed = 7;
};

/// Settings for the stitching run: the default schedule (20 × 200 updates)
/// with a model small enough for one core.
TrainConfig stitch_config();
/// Behaviour-cloning style ablation of `base`: no diffusion term, no return
/// conditioning, coarse actions executed directly.
TrainConfig behavior_cloning_ablation(TrainConfig base);

struct StitchReport {
  double drdt3_success = 0.0;     // full sampler
  double dt3_only_success = 0.0;  // same bundle, coarse actions
  double bc_success = 0.0;
  double drdt3_return = 0.0;
  double dt3_only_return = 0.0;
  double bc_return = 0.0;
  double seconds = 0.0;

  /// DRDT3 > 0, DRDT3 ≥ dt3-only, and both above the ablation.
  bool ordering_holds() const;
};

StitchReport stitching_benchmark(const TrainConfig& config, const StitchOptions& options = {});

}  // namespace drdt3::experiments
