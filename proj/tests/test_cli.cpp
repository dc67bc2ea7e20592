// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "drdt3/cli.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <limits>
#include <nlohmann/json.hpp>
#include <regex>
#include <set>
#include <sstream>

#include "drdt3/binary_io.hpp"
#include "drdt3/envdata.hpp"
#include "drdt3/errors.hpp"

namespace drdt3::cli {
namespace {

namespace fs = std::filesystem;

struct Out {
  int code = -1;
  std::string out, err;
};

Out call(std::vector<std::string> args) {
  std::ostringstream o, e;
  Out r;
  r.code = run(args, o, e);
  r.out = o.str();
  r.err = e.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("drdt3_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string tiny_data() {
    const auto r = call({"gen-data", "--env", "pointreach", "--tier", "medium", "--n-traj", "2",
                         "--seed", "3", "--out", path("data.bin")});
    EXPECT_EQ(r.code, kExitOk) << r.err;
    return path("data.bin");
  }

  std::vector<std::string> train_args(const std::string& data, const std::string& out,
                                      const std::string& epochs = "2") {
    std::vector<std::string> a = {"train", "--data", data, "--out", out};
    for (const char* kv : {"embed_dim=8", "context_len=3", "diffusion_steps=3", "batch_size=4",
                           "noise_hidden_dim=8", "time_embed_dim=4", "mlp_expansion=2",
                           "updates_per_epoch=4", "eval_episodes=2"}) {
      a.push_back("--set");
      a.push_back(kv);
    }
    a.push_back("--set");
    a.push_back("epochs=" + epochs);
    return a;
  }

  fs::path dir_;
};

TEST_F(CliTest, HelpAndUnknownCommand) {
  EXPECT_EQ(call({"--help"}).code, kExitOk);
  const auto r = call({"frobnicate"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("usage error"), std::string::npos);
  EXPECT_EQ(call({"gen-data", "--env", "pointreach"}).code, kExitUsage);
}

TEST_F(CliTest, GenDataStitchReportsZeroBestReturn) {
  const auto r = call({"gen-data", "--env", "stitchchain", "--tier", "stitch", "--n-traj", "20",
                       "--seed", "1", "--out", path("s.bin")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("count: 20\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("best return: 0\n"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(path("s.bin")));
}

TEST_F(CliTest, GenDataRejectsZeroTrajectories) {
  const auto r = call({"gen-data", "--env", "pointreach", "--tier", "medium", "--n-traj", "0",
                       "--out", path("z.bin")});
  EXPECT_NE(r.code, kExitOk);
  EXPECT_FALSE(r.err.empty());
  EXPECT_FALSE(fs::exists(path("z.bin")));
}

TEST_F(CliTest, GenDataSameSeedSameBytes) {
  for (const char* name : {"a.bin", "b.bin"}) {
    ASSERT_EQ(call({"gen-data", "--env", "pointreach", "--tier", "medium-replay", "--n-traj", "5",
                    "--seed", "9", "--out", path(name), "--jsonl", path(name) + ".jsonl"})
                  .code,
              kExitOk);
  }
  EXPECT_EQ(io::read_file(path("a.bin")), io::read_file(path("b.bin")));
  EXPECT_EQ(io::read_file(path("a.bin.jsonl")), io::read_file(path("b.bin.jsonl")));
}

TEST_F(CliTest, TrainWritesRunArtifacts) {
  const auto data = tiny_data();
  const auto r = call(train_args(data, path("run")));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"bundle.bin", "trainer_state.bin", "train_metrics.csv", "eval_metrics.csv",
                        "config.txt", "run_manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  }
  const auto m = nlohmann::json::parse(io::read_file(path("run/run_manifest.json")));
  EXPECT_EQ(m["status"], "completed");
  EXPECT_EQ(m["epochs_completed"], 2);
  EXPECT_EQ(m["updates_completed"], 8);
  EXPECT_EQ(m["dt_baseline"], false);
  EXPECT_EQ(m["config_hash"].get<std::string>().size(), 64u);
  EXPECT_TRUE(fs::path(m["paths"]["bundle"].get<std::string>()).is_absolute());
  EXPECT_EQ(io::read_file(path("run/train_metrics.csv")).rfind("update_idx,l_diff,l_dt3,l_total\n", 0),
            0u);
  EXPECT_EQ(r.out.find("DT baseline"), std::string::npos);
}

TEST_F(CliTest, TrainDtModeIsLabelledAsBaseline) {
  const auto data = tiny_data();
  auto args = train_args(data, path("dt"), "1");
  args.insert(args.end(), {"--set", "dt_mode=true"});
  const auto r = call(args);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("(DT baseline)"), std::string::npos);
  const auto m = nlohmann::json::parse(io::read_file(path("dt/run_manifest.json")));
  EXPECT_EQ(m["dt_baseline"], true);
}

TEST_F(CliTest, ResumeContinuesUpdateIndices) {
  const auto data = tiny_data();
  ASSERT_EQ(call(train_args(data, path("full"), "3")).code, kExitOk);

  ASSERT_EQ(call(train_args(data, path("part"), "1")).code, kExitOk);
  const auto id = nlohmann::json::parse(io::read_file(path("part/run_manifest.json")))["run_id"];
  auto args = train_args(data, path("part"), "3");
  args.push_back("--resume");
  const auto r = call(args);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("resumed at epoch 1 (update 4)"), std::string::npos) << r.out;
  EXPECT_EQ(io::read_file(path("part/train_metrics.csv")),
            io::read_file(path("full/train_metrics.csv")));
  EXPECT_EQ(io::read_file(path("part/bundle.bin")), io::read_file(path("full/bundle.bin")));
  const auto m = nlohmann::json::parse(io::read_file(path("part/run_manifest.json")));
  EXPECT_EQ(m["run_id"], id);
  EXPECT_EQ(m["updates_completed"], 12);
}

TEST_F(CliTest, ResumeWithoutCheckpointFails) {
  const auto data = tiny_data();
  auto args = train_args(data, path("none"));
  args.push_back("--resume");
  const auto r = call(args);
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("no checkpoint"), std::string::npos);
}

TEST_F(CliTest, DivergentTrainingAbortsAndKeepsCheckpoint) {
  const auto data = tiny_data();
  ASSERT_EQ(call(train_args(data, path("run"), "1")).code, kExitOk);
  const std::string good = io::read_file(path("run/bundle.bin"));

  // A fresh divergent run has nothing to keep.
  auto fresh = train_args(data, path("fresh"));
  fresh.insert(fresh.end(), {"--set", "learning_rate=1e200"});
  const auto f = call(fresh);
  EXPECT_EQ(f.code, kExitAbort);
  EXPECT_NE(f.err.find("no checkpoint was written"), std::string::npos) << f.err;
  EXPECT_FALSE(fs::exists(path("fresh/bundle.bin")));
  EXPECT_EQ(nlohmann::json::parse(io::read_file(path("fresh/run_manifest.json")))["status"],
            "aborted");

  // A checkpoint whose weights went bad: resuming aborts and leaves it alone.
  std::string b = good;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(b.data() + b.size() - sizeof nan, &nan, sizeof nan);
  io::write_file_atomic(path("run/bundle.bin"), b);
  const std::string state = io::read_file(path("run/trainer_state.bin"));
  auto args = train_args(data, path("run"), "3");
  args.push_back("--resume");
  const auto r = call(args);
  EXPECT_EQ(r.code, kExitAbort) << r.out << r.err;
  EXPECT_NE(r.err.find("last good checkpoint: epoch 1"), std::string::npos) << r.err;
  EXPECT_EQ(io::read_file(path("run/bundle.bin")), b);
  EXPECT_EQ(io::read_file(path("run/trainer_state.bin")), state);
}

TEST_F(CliTest, EvalIsReproducibleAndEtaOnlyMovesInitialRtg) {
  const auto data = tiny_data();
  ASSERT_EQ(call(train_args(data, path("run"), "1")).code, kExitOk);
  const auto bundle = path("run/bundle.bin");
  auto ev = [&](const std::string& eta, const std::string& out) {
    return call({"eval", "--bundle", bundle, "--episodes", "3", "--seed", "5", "--eta", eta,
                 "--out", path(out)});
  };
  const auto a = ev("1", "a.csv"), b = ev("1", "b.csv"), c = ev("0.5", "c.csv");
  ASSERT_EQ(a.code, kExitOk) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(io::read_file(path("a.csv")), io::read_file(path("b.csv")));
  EXPECT_NE(a.out.find("normalized score: "), std::string::npos);

  std::istringstream sa(io::read_file(path("a.csv"))), sc(io::read_file(path("c.csv")));
  std::string la, lc;
  std::getline(sa, la);
  std::getline(sc, lc);
  ASSERT_EQ(la, lc);
  std::vector<std::string> cols;
  {
    std::istringstream h(la);
    for (std::string f; std::getline(h, f, ',');) cols.push_back(f);
  }
  const auto rtg_col = std::find(cols.begin(), cols.end(), "initial_rtg") - cols.begin();
  ASSERT_LT(static_cast<std::size_t>(rtg_col), cols.size()) << la;
  while (std::getline(sa, la) && std::getline(sc, lc)) {
    std::vector<std::string> fa, fc;
    std::istringstream x(la), y(lc);
    for (std::string f; std::getline(x, f, ',');) fa.push_back(f);
    for (std::string f; std::getline(y, f, ',');) fc.push_back(f);
    ASSERT_EQ(fa.size(), cols.size());
    EXPECT_DOUBLE_EQ(envdata::initial_rtg(std::stod(fa[rtg_col]), 0.5), std::stod(fc[rtg_col]));
  }
}

TEST_F(CliTest, EvalRejectsMismatchedEnvironment) {
  const auto data = tiny_data();
  ASSERT_EQ(call(train_args(data, path("run"), "1")).code, kExitOk);
  const auto r = call({"eval", "--bundle", path("run/bundle.bin"), "--env", "stitchchain"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("d_s=4"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("d_s=1"), std::string::npos) << r.err;
  EXPECT_EQ(call({"eval", "--bundle", path("missing.bin")}).code, kExitUsage);
}

TEST_F(CliTest, CheckNumericsPasses) {
  const auto r = call({"check", "--scope", "numerics"});
  EXPECT_EQ(r.code, kExitOk) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  EXPECT_NE(r.out.find("checks passed"), std::string::npos);
}

TEST_F(CliTest, CheckNegativeControlFails) {
  const auto r = call({"check", "--scope", "numerics", "--negative-control"});
  EXPECT_EQ(r.code, kExitCheck);
  EXPECT_NE(r.out.find("FAIL [numerics] grad cube (corrupted adjoint)"), std::string::npos)
      << r.out;
  EXPECT_NE(r.out.find("worst: [numerics] grad cube (corrupted adjoint)"), std::string::npos);
  EXPECT_EQ(call({"check", "--scope", "nope"}).code, kExitUsage);
}

TEST(MovingAverageTest, TrailingWindow) {
  std::vector<double> v(9, 0.0);
  v.push_back(10.0);
  const auto s = moving_average(v, 10);
  EXPECT_DOUBLE_EQ(s.back(), 1.0);
  EXPECT_DOUBLE_EQ(s.front(), 0.0);
  EXPECT_EQ(moving_average({1, 2, 3}, 1), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(moving_average({1, 2, 3}, 2), (std::vector<double>{1, 1.5, 2.5}));
  EXPECT_TRUE(moving_average({}, 4).empty());
}

TEST(MovingAverageTest, ConstantStaysConstant) {
  const auto s = moving_average(std::vector<double>(50, 0.3), 7);
  for (double x : s) EXPECT_DOUBLE_EQ(x, 0.3);
}

TEST_F(CliTest, PlotWritesSmoothedSvg) {
  std::string csv = "update,loss,flat\n";
  for (int i = 1; i <= 10; ++i) {
    csv += std::to_string(i) + "," + (i == 10 ? "10" : "0") + ",2.5\n";
  }
  io::write_file_atomic(path("m.csv"), csv);
  const auto r = call({"plot", "--metrics", path("m.csv"), "--out", path("m.svg")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const std::string svg = io::read_file(path("m.svg"));
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_NE(svg.find("\nsmoothed\n"), std::string::npos);
  EXPECT_NE(svg.find("\n10,1,2.5\n-->"), std::string::npos);

  // the smoothed curve of the constant column is one horizontal line
  std::vector<std::string> lines;
  const std::regex poly("points=\"([^\"]*)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), poly); it != std::sregex_iterator();
       ++it) {
    lines.push_back((*it)[1]);
  }
  ASSERT_EQ(lines.size(), 4u);
  std::istringstream pts(lines[3]);
  std::set<std::string> ys;
  for (std::string p; pts >> p;) ys.insert(p.substr(p.find(',') + 1));
  EXPECT_EQ(ys.size(), 1u);
}

TEST_F(CliTest, PlotRejectsEmptyAndMalformed) {
  io::write_file_atomic(path("empty.csv"), "update,loss\n");
  auto r = call({"plot", "--metrics", path("empty.csv"), "--out", path("e.svg")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_FALSE(fs::exists(path("e.svg")));

  io::write_file_atomic(path("bad.csv"), "update,loss\n1,0.5\n2,abc\n");
  r = call({"plot", "--metrics", path("bad.csv"), "--out", path("b.svg")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("bad.csv:3:"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("b.svg")));

  EXPECT_THROW(parse_numeric_csv("", "x"), FormatError);
  EXPECT_THROW(parse_numeric_csv("a,b\n1\n", "x"), FormatError);
}

}  // namespace
}  // namespace drdt3::cli
