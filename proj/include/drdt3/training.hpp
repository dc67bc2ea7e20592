// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Joint single-stage training of the sequence model and the action diffusion.
//
// Each update samples K-step windows, predicts coarse actions for the whole
// window, and combines
//   L = L_diff + ζ · L_dt3
// where L_dt3 is the action reconstruction error over every real step and
// L_diff is the denoising objective with the window's last coarse action as
// condition. Gradients of L_diff reach the sequence model through that
// condition.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "drdt3/config.hpp"
#include "drdt3/envdata.hpp"
#include "drdt3/layers.hpp"
#include "drdt3/numerics.hpp"
#include "drdt3/policy.hpp"
#include "drdt3/rng.hpp"

namespace drdt3::training {

/// (1/(K·a_max)) Σ_{real t} ‖a_t − ã_t‖₁, or squared coordinates for L2.
/// K counts padded rows too. Throws ArgumentError when a_max ≤ 0 and
/// DimensionError on shape mismatch.
nx::Var dt3_loss(nx::Var pred, nx::Var target, const std::vector<bool>& pad_mask, double a_max,
                 LossNorm norm = LossNorm::kL1);

double unified_loss(double l_diff, double l_dt3, double zeta);
nx::Var unified_loss(nx::Var l_diff, nx::Var l_dt3, double zeta);

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;

  static AdamWConfig from(const TrainConfig& c);
};

struct AdamWState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// p ← p − lr·wd·p − lr·m̂/(√v̂ + eps) with bias-corrected moments. Missing
/// gradients count as zero. Throws NonFiniteError naming the parameter when a
/// gradient is not finite; nothing is modified in that case.
void adamw_step(const ParamList& params, AdamWState& state, const AdamWConfig& config);

double global_grad_norm(const ParamList& params);
/// Rescales all gradients so their joint norm is at most max_norm. Returns
/// the norm before clipping.
double clip_grad_norm(const ParamList& params, double max_norm);

/// Window of K steps ending at step `end` (inclusive), zero-padded in front
/// when end < K − 1. Raw (unnormalized) values.
dt3::ContextWindow window_at(const envdata::Trajectory& traj, std::size_t end, std::size_t k);

struct Batch {
  std::vector<dt3::ContextWindow> contexts;  // normalized, model-ready
  std::vector<nx::DArray> targets;           // K × d_a dataset actions per window
  nx::DArray final_actions;                  // B × d_a, action at each window's last step
  std::vector<std::size_t> steps;            // diffusion step per sample, 1..N
  nx::DArray eps;                            // B × d_a standard normal
};

/// Windows end at a step chosen uniformly over all dataset steps (so a
/// trajectory is picked with probability proportional to its length).
Batch sample_batch(const envdata::TrajectoryStore& store, const PolicyBundle& bundle,
                   std::size_t batch_size, Rng& rng);

struct LossTerms {
  nx::Var l_diff;
  nx::Var l_dt3;  // mean over the batch
  nx::Var l_total;
};

/// Builds the full objective for a batch on `tape`.
LossTerms compute_losses(nx::Tape& tape, const Batch& batch, const PolicyBundle& bundle);

struct UpdateRecord {
  std::size_t update = 0;  // 1-based
  double l_diff = 0.0;
  double l_dt3 = 0.0;
  double l_total = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_return = 0.0;
  double success_rate = 0.0;
  double norm_score = 0.0;
};

struct MetricsLog {
  std::vector<UpdateRecord> updates;
  std::vector<EpochRecord> epochs;

  /// update_idx,l_diff,l_dt3,l_total
  std::string updates_csv() const;
  /// epoch,mean_return,success_rate,norm_score
  std::string epochs_csv() const;
};

class Trainer {
 public:
  /// Initializes a fresh bundle from config.seed. Throws ArgumentError for an
  /// empty dataset or an unknown env.
  Trainer(const TrainConfig& config, const envdata::TrajectoryStore& store);

  /// One gradient update. Throws NonFiniteError (parameters untouched) when
  /// the loss or a gradient is not finite.
  const UpdateRecord& step();
  /// Runs the remaining updates of the current epoch, then evaluates.
  const EpochRecord& run_epoch();
  bool finished() const { return epoch_ >= config_.epochs; }

  const PolicyBundle& bundle() const { return bundle_; }
  PolicyBundle& bundle() { return bundle_; }
  const MetricsLog& log() const { return log_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t update() const { return update_; }
  /// Gradients left on the parameters by the most recent step().
  ParamList parameters() { return bundle_.parameters(); }

  /// Optimizer moments, counters, RNG state and metrics (the bundle is saved
  /// separately).
  std::string serialize_state() const;
  /// Restores a checkpoint taken at an epoch boundary. The run config may
  /// differ from the checkpoint's in `epochs` only. Throws FormatError when it
  /// does not fit the bundle.
  void restore(PolicyBundle bundle, std::string_view state_bytes);

 private:
  TrainConfig config_;
  const envdata::TrajectoryStore* store_;
  PolicyBundle bundle_;
  AdamWState adam_;
  Rng rng_;
  MetricsLog log_;
  std::size_t epoch_ = 0;   // completed epochs
  std::size_t update_ = 0;  // completed updates
};

struct TrainHooks {
  /// Called after every completed epoch (after evaluation).
  std::function<void(const Trainer&)> on_epoch_end;
};

struct TrainResult {
  PolicyBundle bundle;
  MetricsLog log;
};

TrainResult train(const TrainConfig& config, const envdata::TrajectoryStore& store,
                  const TrainHooks& hooks = {});

}  // namespace drdt3::training
