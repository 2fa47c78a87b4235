// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "trendvirality/pipeline.hpp"
#include "trendvirality/synth.hpp"

namespace tv {
namespace {

TEST(Config, EnvOverridesSectionsAndScalars) {
  Json j = RunConfig{}.to_json();
  const std::map<std::string, std::string> env = {
      {"TV_TRAIN_LR", "0.002"}, {"TV_SEED", "7"}, {"TV_MODEL_VARIANT", "text"}, {"TV_PATHS_WORK", "/tmp/x y"}};
  apply_env_overrides(j, [&](const std::string& k) -> const char* {
    auto it = env.find(k);
    return it == env.end() ? nullptr : it->second.c_str();
  });
  const auto c = RunConfig::from_json(j);
  EXPECT_EQ(c.train.lr, 0.002);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.variant, "text");
  EXPECT_EQ(c.work, "/tmp/x y");
}

TEST(Config, FileMergesOverDefaultsAndPathsResolveAgainstIt) {
  const auto dir = fs::temp_directory_path() / "tv_cfg_test";
  fs::remove_all(dir);
  write_file(dir / "run.json", R"({"train": {"batch_size": 16}, "paths": {"work": "w"}, "seed": 3})");
  const auto c = load_run_config(dir / "run.json");
  EXPECT_EQ(c.train.batch_size, 16);
  EXPECT_EQ(c.train.max_epochs, TrainConfig{}.max_epochs);
  EXPECT_EQ(c.train.seed, 3u);
  EXPECT_EQ(c.work_dir(), dir / "w");
  EXPECT_THROW(load_run_config(dir / "absent.json"), Error);
  write_file(dir / "bad.json", R"({"model": {"variant": "bogus"}})");
  EXPECT_THROW(load_run_config(dir / "bad.json"), Error);
  fs::remove_all(dir);
}

class PipelineRun : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("tv_pipe_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    synth::SynthConfig sc;
    sc.days = 24;
    sc.posts_per_day = 40;
    sc.n_subreddits = 3;
    synth::write_corpus(root_ / "data", synth::generate(sc));
    cfg_.base_dir = root_;
    cfg_.posts = "data/posts.ndjson";
    cfg_.pageviews = "data/pageviews.tsv";
    cfg_.work = "work";
    cfg_.train.max_epochs = 2;
    cfg_.train.warmup_epochs = 1;
    cfg_.train.batch_size = 32;
    cfg_.bootstrap = 50;
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path root_;
  RunConfig cfg_;
};

TEST_F(PipelineRun, FullRunThenSkipThenConfigGuard) {
  std::ostringstream log;
  const auto first = run_pipeline(cfg_, {}, false, &log);
  ASSERT_EQ(first.size(), stage_order().size());
  for (const auto& r : first) EXPECT_FALSE(r.skipped) << r.stage;
  const auto report_path = cfg_.report_dir() / "report.json";
  ASSERT_TRUE(fs::exists(report_path));
  const auto report = Json::parse(read_file(report_path));
  EXPECT_GE(report.at("auc_pr").get<double>(), 0.0);
  EXPECT_LE(report.at("auc_pr").get<double>(), 1.0);
  EXPECT_EQ(report.at("variant"), "full");
  const std::string ckpt = read_file(cfg_.checkpoint_dir() / "model.ckpt");

  const auto second = run_pipeline(cfg_, {}, false, &log);
  for (const auto& r : second) EXPECT_TRUE(r.skipped) << r.stage;
  EXPECT_EQ(read_file(cfg_.checkpoint_dir() / "model.ckpt"), ckpt);

  // A damaged output reruns its stage even though nothing else changed.
  write_file(cfg_.split_dir() / "split.csv", "post_id,split\n");
  const auto third = run_pipeline(cfg_, {"split"}, false, &log);
  EXPECT_FALSE(third[0].skipped);

  RunConfig changed = cfg_;
  changed.label.percentile = 80.0;
  EXPECT_THROW(run_pipeline(changed, {"label"}, false, &log), Error);
  EXPECT_NO_THROW(run_pipeline(changed, {"label"}, true, &log));
}

TEST_F(PipelineRun, MissingUpstreamIsADependencyError) {
  std::ostringstream log;
  EXPECT_THROW(run_pipeline(cfg_, {"eval"}, false, &log), DependencyError);
  EXPECT_THROW(run_pipeline(cfg_, {"spikes"}, false, &log), DependencyError);
  RunConfig no_input = cfg_;
  no_input.posts = "data/nothing.ndjson";
  EXPECT_THROW(run_pipeline(no_input, {"ingest"}, false, &log), DependencyError);
  EXPECT_THROW(run_pipeline(cfg_, {"bogus"}, false, &log), Error);
}

TEST_F(PipelineRun, StagesRunInPipelineOrderRegardlessOfRequestOrder) {
  std::ostringstream log;
  const auto r = run_pipeline(cfg_, {"spikes", "ingest", "spikes"}, false, &log);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].stage, "ingest");
  EXPECT_EQ(r[1].stage, "spikes");
  EXPECT_TRUE(fs::exists(cfg_.trend_dir() / "evergreen.json"));
}

}  // namespace
}  // namespace tv
