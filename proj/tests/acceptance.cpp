// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// to run a subset (`acceptance 1 4`). Exits 1 when any selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "drdt3/checks.hpp"
#include "drdt3/envdata.hpp"
#include "drdt3/experiments.hpp"
#include "drdt3/policy.hpp"
#include "drdt3/training.hpp"

namespace {

using namespace drdt3;

struct Verdict {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Runs the built-in checks selected by `keep` and summarizes them.
Verdict run_selected(const std::function<bool(const checks::CheckCase&)>& keep) {
  std::vector<checks::CheckCase> cases;
  for (auto& c : checks::builtin_cases())
    if (keep(c)) cases.push_back(std::move(c));
  const auto report = checks::run_checks(cases, "all");
  Verdict v{report.passed() && !cases.empty(), ""};
  std::size_t failed = 0;
  for (const auto& r : report.results) failed += r.passed ? 0 : 1;
  v.detail = std::to_string(cases.size() - failed) + "/" + std::to_string(cases.size()) +
             " checks";
  if (const auto* w = report.worst()) {
    v.detail += ", worst " + w->name + " error " + fmt("%.2g", w->error) + " (tol " +
                fmt("%.0g", w->tolerance) + ")";
  }
  return v;
}

bool named(const checks::CheckCase& c, std::initializer_list<const char*> parts) {
  for (const char* p : parts)
    if (c.name.find(p) != std::string::npos) return true;
  return false;
}

TrainConfig smoke_config() {
  TrainConfig c;
  c.embed_dim = 8;
  c.context_len = 3;
  c.diffusion_steps = 3;
  c.batch_size = 4;
  c.noise_hidden_dim = 8;
  c.time_embed_dim = 4;
  c.mlp_expansion = 2;
  c.epochs = 2;
  c.updates_per_epoch = 10;
  c.eval_episodes = 2;
  return c;
}

const envdata::TrajectoryStore& smoke_store() {
  static const auto store = envdata::generate_dataset(envdata::kPointReach, "medium", 2, 3);
  return store;
}

Verdict gradient_suite() {
  return run_selected([](const auto& c) { return c.name.starts_with("grad "); });
}

Verdict ttt_mechanics() {
  return run_selected([](const auto& c) {
    return c.scope == "dt3" && named(c, {"inner_lr=0", "descends", "scalar case"});
  });
}

Verdict diffusion_identities() {
  return run_selected([](const auto& c) {
    return c.scope == "diffusion" && !c.name.starts_with("grad ");
  });
}

Verdict generative_sanity() {
  const experiments::TwoModeOptions o;
  const auto r = experiments::two_mode_sanity(o);
  const bool ok = r.bimodal() && std::fabs(r.left_mean + o.mode) <= 0.1 &&
                  std::fabs(r.right_mean - o.mode) <= 0.1;
  return {ok, "mode means " + fmt("%.3f", r.left_mean) + " / " + fmt("%.3f", r.right_mean) +
                  ", left mass " + fmt("%.2f", r.left_mass) + ", peaks " +
                  std::to_string(r.histogram[r.left_peak]) + "/" +
                  std::to_string(r.histogram[r.right_peak]) + " over valley " +
                  std::to_string(r.histogram[r.valley])};
}

Verdict causality_padding() {
  return run_selected([](const auto& c) {
    return c.scope == "dt3" && named(c, {"future tokens", "padding"});
  });
}

Verdict unified_objective() {
  return run_selected([](const auto& c) {
    return c.scope == "training" && named(c, {"logged loss", "parameter groups"});
  });
}

Verdict stitching() {
  const auto r = experiments::stitching_benchmark(experiments::stitch_config());
  return {r.ordering_holds(), "success drdt3 " + fmt("%.2f", r.drdt3_success) + ", dt3-only " +
                                  fmt("%.2f", r.dt3_only_success) + ", bc ablation " +
                                  fmt("%.2f", r.bc_success) + " over 50 episodes"};
}

Verdict ablation_plumbing() {
  std::vector<TrainConfig> variants;
  for (auto v : {diffusion::NoiseVariant::kFull, diffusion::NoiseVariant::kNoAdaLN,
                 diffusion::NoiseVariant::kNoGatedMLP, diffusion::NoiseVariant::kNoBoth}) {
    auto c = smoke_config();
    c.noise_approx_variant = v;
    variants.push_back(c);
  }
  auto l2 = smoke_config();
  l2.dt3_loss_norm = LossNorm::kL2;
  variants.push_back(l2);

  std::set<std::string> logs;
  for (const auto& c : variants) {
    const auto a = training::train(c, smoke_store());
    const auto b = training::train(c, smoke_store());
    for (const auto& u : a.log.updates) {
      if (!std::isfinite(u.l_total)) {
        return {false, std::string(to_string(c.noise_approx_variant)) + " loss not finite"};
      }
    }
    if (a.log.updates_csv() != b.log.updates_csv()) {
      return {false, std::string(to_string(c.noise_approx_variant)) + " log not reproducible"};
    }
    logs.insert(a.log.updates_csv());
  }
  return {logs.size() == variants.size(),
          std::to_string(logs.size()) + " distinct reproducible logs from " +
              std::to_string(variants.size()) + " variants"};
}

Verdict determinism_persistence() {
  const auto c = smoke_config();
  const auto a = training::train(c, smoke_store());
  const auto b = training::train(c, smoke_store());
  if (a.log.updates_csv() != b.log.updates_csv() || a.log.epochs_csv() != b.log.epochs_csv()) {
    return {false, "metrics logs differ under one seed"};
  }
  const auto& spec = envdata::env_spec(envdata::kPointReach);
  const EvalConfig ec{1.0, 5, 11, EvalMode::kDrdt3};
  const std::string csv = eval_csv(evaluate(a.bundle, ec), spec);
  if (csv != eval_csv(evaluate(b.bundle, ec), spec)) return {false, "eval CSVs differ"};

  const std::string bytes = serialize_bundle(a.bundle);
  const auto reloaded = deserialize_bundle(bytes);
  if (serialize_bundle(reloaded) != bytes) return {false, "bundle round trip changed bytes"};
  if (eval_csv(evaluate(reloaded, ec), spec) != csv) return {false, "reloaded bundle differs"};

  for (const auto& store :
       {smoke_store(), envdata::generate_dataset(envdata::kStitchChain, "stitch", 20, 1)}) {
    const std::string s = envdata::serialize_store(store);
    if (envdata::serialize_store(envdata::deserialize_store(s)) != s) {
      return {false, "store round trip changed bytes"};
    }
  }
  return {true, "logs, eval CSVs and round trips identical"};
}

struct Criterion {
  int id;
  const char* title;
  double budget_s;  // 0 = none
  Verdict (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const Criterion all[] = {
      {1, "gradient suite", 120, gradient_suite},
      {2, "ttt mechanics", 0, ttt_mechanics},
      {3, "diffusion identities", 0, diffusion_identities},
      {4, "generative sanity", 300, generative_sanity},
      {5, "causality and padding", 0, causality_padding},
      {6, "unified objective", 0, unified_objective},
      {7, "stitching", 900, stitching},
      {8, "ablation plumbing", 0, ablation_plumbing},
      {9, "determinism and persistence", 0, determinism_persistence},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      v.passed = false;
      v.detail += ", over the " + fmt("%.0f", c.budget_s) + " s budget";
    }
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", v.passed ? "PASS" : "FAIL", c.id, c.title,
                v.detail.c_str(), secs);
    std::fflush(stdout);
    failed += v.passed ? 0 : 1;
  }
  return failed ? 1 : 0;
}
