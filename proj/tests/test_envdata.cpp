// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "drdt3/binary_io.hpp"
#include "drdt3/envdata.hpp"
#include "drdt3/errors.hpp"

namespace drdt3::envdata {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("drdt3_envdata_" + name);
}

TEST(ComputeRtgTest, Examples) {
  EXPECT_EQ(compute_rtg(std::vector<double>{1, 2, 3}), (std::vector<double>{6, 5, 3}));
  EXPECT_EQ(compute_rtg(std::vector<double>{0, 0, 0}), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(compute_rtg(std::vector<double>{-2.5}), (std::vector<double>{-2.5}));
  EXPECT_THROW(compute_rtg(std::vector<double>{}), ArgumentError);
}

TEST(InitialRtgTest, Examples) {
  EXPECT_NEAR(initial_rtg(100.0, 1.1), 110.0, 1e-12);
  EXPECT_EQ(initial_rtg(-10.0, 2.0), -5.0);
  EXPECT_EQ(initial_rtg(37.5, 1.0), 37.5);
  EXPECT_EQ(initial_rtg(-37.5, 1.0), -37.5);
  EXPECT_THROW(initial_rtg(1.0, 0.0), ArgumentError);
}

TEST(InitialRtgTest, UsesBestReturnOfStore) {
  TrajectoryStore store("stitchchain", 1, 1);
  EXPECT_THROW(initial_rtg(store, 1.0), ArgumentError);
  store.add(Trajectory::make(1, 1, {0.0, 1.0}, {1.0, 1.0}, {0.0, 3.0}));
  store.add(Trajectory::make(1, 1, {0.0}, {1.0}, {1.0}));
  EXPECT_EQ(initial_rtg(store, 2.0), 6.0);
}

TEST(StitchChainTest, ReachingTheGoal) {
  StitchChain env;
  Rng rng(0);
  env.reset(rng);
  env.set_position(7.5);
  auto r = env.step(std::vector<double>{1.0});
  EXPECT_EQ(r.state[0], 8.0);
  EXPECT_EQ(r.reward, 1.0);
  EXPECT_TRUE(r.done);
  EXPECT_TRUE(env.success());
}

TEST(StitchChainTest, IdleEpisodeHasZeroReturn) {
  StitchChain env;
  Rng rng(0);
  env.reset(rng);
  double ret = 0.0;
  std::size_t steps = 0;
  for (bool done = false; !done; ++steps) {
    auto r = env.step(std::vector<double>{0.0});
    ret += r.reward;
    done = r.done;
  }
  EXPECT_EQ(ret, 0.0);
  EXPECT_EQ(steps, env.spec().horizon);
}

TEST(StitchChainTest, ActionsAreClampedAndPositionBounded) {
  StitchChain env;
  Rng rng(0);
  env.reset(rng);
  EXPECT_EQ(env.step(std::vector<double>{5.0}).state[0], 1.0);
  EXPECT_EQ(env.step(std::vector<double>{-5.0}).state[0], 0.0);
  EXPECT_EQ(env.step(std::vector<double>{-1.0}).state[0], 0.0);
}

TEST(PointReachTest, RestingPointStaysPut) {
  PointReach env;
  env.set_state(0.6, -0.8, 0.0, 0.0);
  for (int t = 0; t < 10; ++t) {
    auto r = env.step(std::vector<double>{0.0, 0.0});
    EXPECT_EQ(r.state[0], 0.6);
    EXPECT_EQ(r.state[1], -0.8);
    EXPECT_NEAR(r.reward, -1.0, 1e-15);
  }
}

TEST(PointReachTest, EulerStep) {
  PointReach env;
  env.set_state(1.0, 2.0, 0.5, -0.5);
  auto r = env.step(std::vector<double>{1.0, -2.0});
  EXPECT_NEAR(r.state[0], 1.05, 1e-15);
  EXPECT_NEAR(r.state[1], 1.95, 1e-15);
  EXPECT_NEAR(r.state[2], 0.6, 1e-15);
  EXPECT_NEAR(r.state[3], -0.6, 1e-15);  // action clamped to -1
}

TEST(EnvSpecTest, ReferenceScoresAreOrdered) {
  for (auto id : {kPointReach, kStitchChain}) {
    const auto& s = env_spec(id);
    EXPECT_GT(s.expert_score, s.random_score) << id;
    EXPECT_EQ(normalized_score(s.expert_score, s), 100.0);
    EXPECT_EQ(normalized_score(s.random_score, s), 0.0);
  }
  EXPECT_THROW(env_spec("hopper"), ArgumentError);
  EXPECT_THROW(make_env("hopper"), ArgumentError);
}

TEST(NormalizedScoreTest, Examples) {
  EnvSpec s;
  s.random_score = 0.0;
  s.expert_score = 10.0;
  EXPECT_EQ(normalized_score(5.0, s), 50.0);
  s.expert_score = 0.0;
  EXPECT_THROW(normalized_score(1.0, s), ArgumentError);
}

TEST(NormalizedScoreTest, PreservesOrdering) {
  const auto& s = env_spec(kPointReach);
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> raw(5);
    for (auto& v : raw) v = rng.uniform(-100, 0);
    const auto best_raw = std::max_element(raw.begin(), raw.end()) - raw.begin();
    std::vector<double> norm;
    for (double v : raw) norm.push_back(normalized_score(v, s));
    EXPECT_EQ(std::max_element(norm.begin(), norm.end()) - norm.begin(), best_raw);
  }
}

TEST(StitchDatasetTest, NoTrajectoryCrossesFromStartToGoal) {
  auto store = generate_dataset(kStitchChain, "stitch", 200, 3);
  ASSERT_EQ(store.size(), 200u);
  bool crosses = false;
  double best_from_start = 0.0;
  std::size_t from_start = 0, teleported = 0;
  for (const auto& tr : store.trajectories()) {
    const bool starts_at_0 = tr.state(0)[0] == 0.0;
    bool reaches_8 = false;
    for (std::size_t t = 0; t < tr.length(); ++t) reaches_8 |= tr.rewards[t] > 0.0;
    crosses |= starts_at_0 && reaches_8;
    if (starts_at_0) {
      ++from_start;
      best_from_start = std::max(best_from_start, tr.total_return());
      for (std::size_t t = 0; t < tr.length(); ++t) EXPECT_LT(tr.state(t)[0], 5.0);
    } else {
      ++teleported;
      EXPECT_EQ(tr.state(0)[0], 4.0);
      EXPECT_EQ(tr.total_return(), 1.0);
    }
  }
  EXPECT_FALSE(crosses);
  EXPECT_EQ(best_from_start, 0.0);
  EXPECT_EQ(from_start, 100u);
  EXPECT_EQ(teleported, 100u);
}

TEST(MediumDatasetTest, ScoresAboutOneThirdOfExpert) {
  auto store = generate_dataset(kPointReach, "medium", 1000, 11);
  const double score = normalized_score(store.stats().mean_return, env_spec(kPointReach));
  EXPECT_GT(score, 100.0 / 3.0 * 0.85);
  EXPECT_LT(score, 100.0 / 3.0 * 1.15);
}

TEST(MediumReplayDatasetTest, SpansPoorToMedium) {
  auto store = generate_dataset(kPointReach, "medium-replay", 400, 12);
  const auto& spec = env_spec(kPointReach);
  double lo = 1e9, hi = -1e9;
  for (const auto& tr : store.trajectories()) {
    lo = std::min(lo, normalized_score(tr.total_return(), spec));
    hi = std::max(hi, normalized_score(tr.total_return(), spec));
  }
  EXPECT_LT(normalized_score(store.stats().mean_return, spec), 100.0 / 3.0);
  EXPECT_LT(lo, 0.0);
  EXPECT_GT(hi, 33.0);
}

TEST(GenerateDatasetTest, RejectsBadRequests) {
  EXPECT_THROW(generate_dataset(kStitchChain, "medium", 10, 0), ArgumentError);
  EXPECT_THROW(generate_dataset(kPointReach, "stitch", 10, 0), ArgumentError);
  EXPECT_THROW(generate_dataset(kPointReach, "medium", 0, 0), ArgumentError);
}

TEST(GenerateDatasetTest, SameSeedSameBytes) {
  EXPECT_EQ(serialize_store(generate_dataset(kPointReach, "medium", 20, 5)),
            serialize_store(generate_dataset(kPointReach, "medium", 20, 5)));
  EXPECT_NE(serialize_store(generate_dataset(kPointReach, "medium", 20, 5)),
            serialize_store(generate_dataset(kPointReach, "medium", 20, 6)));
}

TEST(TrajectoryStoreTest, RtgsAreSuffixSums) {
  auto store = generate_dataset(kPointReach, "medium-replay", 30, 2);
  for (const auto& tr : store.trajectories()) {
    double acc = 0.0;
    for (std::size_t t = tr.length(); t-- > 0;) {
      acc += tr.rewards[t];
      EXPECT_EQ(tr.rtgs[t], acc);
    }
    EXPECT_EQ(tr.rtgs.back(), tr.rewards.back());
  }
}

TEST(TrajectoryStoreTest, RejectsMismatchedDims) {
  TrajectoryStore store("pointreach", 4, 2);
  EXPECT_THROW(store.add(Trajectory::make(1, 1, {0.0}, {0.0}, {0.0})), DimensionError);
  EXPECT_THROW(Trajectory::make(2, 1, {0.0}, {0.0}, {0.0}), DimensionError);
}

TEST(TrajectoryStoreTest, StatsTrackMutation) {
  TrajectoryStore store("stitchchain", 1, 1);
  store.add(Trajectory::make(1, 1, {1.0, 3.0}, {0.0, 0.0}, {0.0, -4.0}));
  EXPECT_EQ(store.stats().state_mean[0], 2.0);
  EXPECT_EQ(store.stats().state_std[0], 1.0);
  EXPECT_EQ(store.stats().max_abs_return, 4.0);
  store.add(Trajectory::make(1, 1, {2.0}, {0.0}, {2.0}));
  EXPECT_EQ(store.stats().count, 2u);
  EXPECT_EQ(store.stats().best_return, 2.0);
  EXPECT_EQ(store.stats().mean_return, -1.0);
}

TEST(PersistenceTest, SaveLoadSaveIsByteIdentical) {
  auto store = generate_dataset(kPointReach, "medium", 15, 8);
  const auto path = temp_path("roundtrip.bin");
  save_store(store, path);
  const std::string first = io::read_file(path);
  auto loaded = load_store(path);
  save_store(loaded, path);
  EXPECT_EQ(io::read_file(path), first);
  ASSERT_EQ(loaded.size(), store.size());
  for (std::size_t k = 0; k < store.size(); ++k) {
    EXPECT_EQ(loaded.trajectories()[k].states, store.trajectories()[k].states);
    EXPECT_EQ(loaded.trajectories()[k].rtgs, store.trajectories()[k].rtgs);
  }
  fs::remove(path);
}

TEST(PersistenceTest, EmptyStoreKeepsIdentity) {
  TrajectoryStore store("stitchchain", 1, 1);
  auto loaded = deserialize_store(serialize_store(store));
  EXPECT_EQ(loaded.env_id(), "stitchchain");
  EXPECT_EQ(loaded.state_dim(), 1u);
  EXPECT_EQ(loaded.action_dim(), 1u);
  EXPECT_TRUE(loaded.empty());
}

TEST(PersistenceTest, TruncationIsReported) {
  const std::string bytes = serialize_store(generate_dataset(kStitchChain, "stitch", 4, 1));
  for (std::size_t cut : {bytes.size() - 1, bytes.size() - 8, bytes.find('\n') + 3}) {
    EXPECT_THROW(deserialize_store(bytes.substr(0, cut)), TruncationError) << cut;
  }
  EXPECT_THROW(deserialize_store(bytes.substr(0, 10)), TruncationError);
}

TEST(PersistenceTest, VersionMismatch) {
  std::string bytes = serialize_store(TrajectoryStore("stitchchain", 1, 1));
  bytes.replace(bytes.find("drdt3/1"), 7, "drdt3/9");
  EXPECT_THROW(deserialize_store(bytes), VersionError);
}

TEST(PersistenceTest, InconsistentHeaderAndTrailingBytes) {
  std::string bytes = serialize_store(generate_dataset(kStitchChain, "stitch", 2, 1));
  EXPECT_THROW(deserialize_store(bytes + "x"), FormatError);
  std::string bad = bytes;
  bad.replace(bad.find("\"state_dim\":1"), 13, "\"state_dim\":2");
  EXPECT_THROW(deserialize_store(bad), FormatError);
  EXPECT_THROW(deserialize_store("not json\n"), FormatError);
}

TEST(PersistenceTest, JsonlExportHasOneLinePerTrajectory) {
  auto store = generate_dataset(kStitchChain, "stitch", 6, 4);
  const auto path = temp_path("export.jsonl");
  export_jsonl(store, path);
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    EXPECT_NE(line.find("\"states\":[["), std::string::npos);
  }
  EXPECT_EQ(n, 6u);
  fs::remove(path);
}

}  // namespace
}  // namespace drdt3::envdata
