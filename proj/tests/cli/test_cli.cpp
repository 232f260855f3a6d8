// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "tnt/cli/checkpoint.hpp"
#include "tnt/cli/commands.hpp"
#include "tnt/cli/config.hpp"

namespace tnt::cli {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("tnt_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

json tiny_config(const fs::path& out) {
  json j = json::parse(R"({
    "schema_version": 1, "seed": 0, "eval_sequences": 2,
    "task": { "kind": "copy", "vocab": 8, "length": 16, "seed": 0 },
    "model": { "vocab": 8, "dim": 4, "global_chunk": 8, "locals": [ { "chunk": 2, "shard": 8 } ] },
    "schedule": { "steps": 3, "batch_size": 2 }
  })");
  j["output_dir"] = out.string();
  return j;
}

int run(std::vector<std::string> args, std::string* out_text = nullptr,
        std::string* err_text = nullptr) {
  std::vector<const char*> argv{"tnt"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

TEST(Config, RoundTripsThroughJson) {
  RunConfig c = default_run_config();
  c.seed = 17;
  c.model.locals = {{2, 8}};
  c.schedule.stage = model::Stage::kStage2;
  c.schedule.stage2_chunks = {1};
  const RunConfig back = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.model, c.model);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  json j = tiny_config("x");
  j["modle"] = json::object();
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = tiny_config("x");
  j["schema_version"] = 2;
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = tiny_config("x");
  j["model"]["dim"] = -3;
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = tiny_config("x");
  j["task"]["kind"] = "sorting";
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = tiny_config("x");
  j["model"]["locals"][0]["chunk"] = 3;
  EXPECT_THROW(run_config_from_json(j).validate(), ConfigError);
}

TEST(Checkpoint, RoundTripsExactly) {
  TempDir dir;
  Checkpoint c;
  c.config.vocab = 8;
  c.config.dim = 4;
  c.config.arch = memory::Arch::kMlp2;
  c.config.locals = {{2, 8}};
  c.task = {tasks::TaskKind::kNeedle, 8, 16, 3};
  c.weights = model::SlowWeights::initialize(c.config, 5);
  save_checkpoint(dir.path() / "c.json", c);
  const Checkpoint back = load_checkpoint(dir.path() / "c.json");
  EXPECT_EQ(back.config, c.config);
  EXPECT_EQ(back.weights, c.weights);
  EXPECT_EQ(back.task.kind, c.task.kind);
  EXPECT_EQ(back.task.seed, 3u);
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run({}), kExitConfig);
  EXPECT_EQ(run({"frobnicate"}), kExitConfig);
  EXPECT_EQ(run({"train", "--config", "/nonexistent/config.json"}), kExitConfig);
  EXPECT_EQ(run({"--workers", "0", "verify"}), kExitConfig);
  EXPECT_EQ(run({"verify", "--inject-fault", "other"}), kExitConfig);
  EXPECT_EQ(run({"sweep"}), kExitConfig);
  EXPECT_EQ(run({"--help"}), kExitOk);
}

TEST(Cli, MalformedJsonExitsOne) {
  TempDir dir;
  std::ofstream(dir.path() / "bad.json") << "{ \"schema_version\": 1, ";
  std::string err;
  EXPECT_EQ(run({"train", "--config", (dir.path() / "bad.json").string()}, nullptr, &err),
            kExitConfig);
  EXPECT_FALSE(err.empty());
}

TEST(Cli, VerifyPassesAndFaultExitsTwo) {
  std::string out;
  EXPECT_EQ(run({"verify"}, &out), kExitOk);
  EXPECT_NE(out.find("PASS memory.chunk1_equals_sequential"), std::string::npos);
  EXPECT_EQ(out.find("FAIL"), std::string::npos);
  EXPECT_EQ(run({"verify", "--inject-fault", "inner_grad_sign"}, &out), kExitProperty);
  EXPECT_NE(out.find("FAIL memory.inner_grad_fd"), std::string::npos);
  EXPECT_FALSE(memory::inner_grad_sign_fault());
}

TEST(Cli, DivergenceExitsThree) {
  TempDir dir;
  json j = tiny_config(dir.path() / "run");
  j["schedule"]["learning_rate"] = 1e300;
  j["schedule"]["grad_clip"] = 0.0;
  write_json_file(dir.path() / "c.json", j);
  EXPECT_EQ(run({"train", "--config", (dir.path() / "c.json").string()}), kExitDivergence);
}

TEST(Cli, TrainWritesArtifactsAndSweepReadsThem) {
  TempDir dir;
  write_json_file(dir.path() / "c.json", tiny_config(dir.path() / "run"));
  ASSERT_EQ(run({"train", "--config", (dir.path() / "c.json").string()}), kExitOk);
  for (const char* f : {"config.json", "loss.csv", "checkpoint.json", "summary.json"})
    EXPECT_TRUE(fs::exists(dir.path() / "run" / f)) << f;
  const auto loss = lines(dir.path() / "run" / "loss.csv");
  ASSERT_EQ(loss.size(), 4u);
  EXPECT_EQ(loss[0], "step,loss");
  const json summary = read_json_file(dir.path() / "run" / "summary.json");
  EXPECT_EQ(summary.at("steps").get<std::size_t>(), 3u);

  const auto ckpt = (dir.path() / "run" / "checkpoint.json").string();
  const auto sweep_dir = (dir.path() / "sweep").string();
  ASSERT_EQ(run({"--out", sweep_dir, "sweep", "--checkpoint", ckpt, "--chunks", "2",
                 "--sequences", "2"}),
            kExitOk);
  const auto rows = lines(dir.path() / "sweep" / "sweep.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], "chunk_size,loss,perplexity");
  double loss_v = 0, ppl = 0;
  ASSERT_EQ(std::sscanf(rows[1].c_str(), "2,%lf,%lf", &loss_v, &ppl), 2);
  EXPECT_NEAR(ppl, std::exp(loss_v), 1e-12 * ppl);

  EXPECT_EQ(run({"sweep", "--checkpoint", ckpt, "--chunks", "0"}), kExitConfig);
  EXPECT_EQ(run({"sweep", "--checkpoint", ckpt, "--chunks", "two"}), kExitConfig);
}

TEST(Cli, TrainIsReproducible) {
  TempDir dir;
  write_json_file(dir.path() / "c.json", tiny_config(dir.path() / "a"));
  const auto cfg = (dir.path() / "c.json").string();
  ASSERT_EQ(run({"train", "--config", cfg}), kExitOk);
  ASSERT_EQ(run({"--workers", "3", "--out", (dir.path() / "b").string(), "train", "--config", cfg}),
            kExitOk);
  EXPECT_EQ(lines(dir.path() / "a" / "loss.csv"), lines(dir.path() / "b" / "loss.csv"));
  EXPECT_EQ(read_json_file(dir.path() / "a" / "checkpoint.json"),
            read_json_file(dir.path() / "b" / "checkpoint.json"));
}

TEST(Cli, AblateReportsEveryRequestedVariant) {
  TempDir dir;
  write_json_file(dir.path() / "c.json", tiny_config(dir.path() / "abl"));
  ASSERT_EQ(run({"ablate", "--config", (dir.path() / "c.json").string(), "--variants",
                 "no_global,locals_2"}),
            kExitOk);
  const json report = read_json_file(dir.path() / "abl" / "ablation.json");
  const auto& variants = report.at("variants");
  EXPECT_EQ(variants.size(), 3u);
  for (const char* v : {"base", "no_global", "locals_2"}) {
    ASSERT_TRUE(variants.contains(v)) << v;
    EXPECT_TRUE(variants.at(v).contains("eval_loss"));
  }
  EXPECT_EQ(run({"ablate", "--config", (dir.path() / "c.json").string(), "--variants", "bogus"}),
            kExitConfig);
}

TEST(Ablation, VariantConfigs) {
  model::ModelConfig base;
  base.locals = {{8, 32}};
  EXPECT_FALSE(ablation_variant(base, "no_global").global_enabled);
  EXPECT_EQ(ablation_variant(base, "no_projection").projection, hierarchy::ProjectionMode::kNone);
  const auto l4 = ablation_variant(base, "locals_4");
  ASSERT_EQ(l4.locals.size(), 4u);
  EXPECT_EQ(l4.locals[0].chunk, 4u);
  EXPECT_EQ(l4.locals[3].chunk, 32u);
  EXPECT_EQ(ablation_variant(base, "base"), base);
  EXPECT_THROW(ablation_variant(base, "locals_9"), ConfigError);
}

json bench_json(std::size_t lengths) {
  json j = {{"schema_version", 1}, {"tokens_per_batch", 256}, {"dim", 4},
            {"warmup", 0},         {"repetitions", 1}};
  j["lengths"] = lengths == 1 ? json::array({64}) : json::array({32, 64, 128});
  j["configs"] = json::array(
      {{{"name", "tnt"}, {"kind", "tnt"}, {"global_chunk", 16},
        {"locals", json::array({{{"chunk", 4}, {"shard", 16}}})}}});
  if (lengths != 1) j["configs"].push_back({{"name", "attention"}, {"kind", "attention"}});
  return j;
}

TEST(Cli, BenchWritesOneRowPerConfigAndLength) {
  TempDir dir;
  for (std::size_t grid : {1, 3}) {
    write_json_file(dir.path() / "g.json", bench_json(grid));
    const auto out = (dir.path() / ("b" + std::to_string(grid))).string();
    std::string text;
    ASSERT_EQ(run({"--config", (dir.path() / "g.json").string(), "--out", out, "bench"}, &text),
              kExitOk);
    const auto rows = lines(fs::path(out) / "bench.csv");
    ASSERT_FALSE(rows.empty());
    EXPECT_EQ(rows[0], exec::bench_csv_header());
    EXPECT_EQ(rows.size() - 1, grid == 1 ? 1u : 6u);
  }
  json bad = bench_json(1);
  bad["configs"][0]["kind"] = "rnn";
  write_json_file(dir.path() / "bad.json", bad);
  EXPECT_EQ(run({"--config", (dir.path() / "bad.json").string(), "bench"}), kExitConfig);
}

}  // namespace
}  // namespace tnt::cli
