// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cstdlib>
#include <map>
#include <string>

#include <gtest/gtest.h>

#include "sepforge/fixture.hpp"
#include "sepforge/pipeline.hpp"
#include "sepforge/util.hpp"
#include "test_support.hpp"

namespace sepforge::pipeline {
namespace {

using testing::TempDir;
using json = nlohmann::json;

// Relative path -> sha256 of every file under root.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    out[fs::relative(e.path(), root).string()] = util::sha256_hex(util::read_text(e.path()));
  }
  return out;
}

std::map<std::string, fs::file_time_type> mtimes(const fs::path& root) {
  std::map<std::string, fs::file_time_type> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = e.last_write_time();
  }
  return out;
}

void run_all(const PipelineConfig& c, bool resume = false) {
  RunOptions o;
  o.resume = resume;
  for (Stage s : kAllStages) run_stage(s, c, o);
}

class Fixture : public ::testing::Test {
 protected:
  void SetUp() override { config = load_config(fixture::write_fixture(dir.path())); }
  TempDir dir;
  PipelineConfig config;
};

TEST(Config, CollectsEveryProblem) {
  const json j = {{"paths", {{"output_root", "out"}, {"bogus_path", "x"}}},
                  {"segment", {{"window_s", 0}, {"hop_s", -1}}},
                  {"align", {{"passes", 0}, {"audio_transfer", "carrier pigeon"}}},
                  {"mix", {{"snr_range", {5, -5}}, {"count_weights", {1.0}}}},
                  {"colour", "blue"}};
  try {
    config_from_json(j, "/tmp");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    std::string all;
    for (const auto& p : e.problems()) all += p + "\n";
    for (const char* needle : {"bogus_path", "colour", "window_s", "hop_s", "passes",
                               "audio_transfer", "snr_range", "mix:"}) {
      EXPECT_NE(all.find(needle), std::string::npos) << needle << " missing from\n" << all;
    }
    EXPECT_GE(e.problems().size(), 8u);
  }
}

TEST(Config, WrongTypesAndMissingFile) {
  EXPECT_THROW(config_from_json({{"seed", "seven"}}, "/tmp"), ValidationError);
  EXPECT_THROW(config_from_json({{"standardize", {{"target_rate", 48000}}}}, "/tmp"),
               ValidationError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ValidationError);
}

TEST(Config, RoundTripsThroughJson) {
  TempDir dir;
  const auto c = load_config(fixture::write_fixture(dir.path()));
  const auto back = config_from_json(to_json(c), "/");
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_TRUE(c.output_root.is_absolute());
  EXPECT_EQ(c.split_sizes.at("train"), 12u);
}

TEST_F(Fixture, MissingPrerequisitesNameTheFile) {
  try {
    run_stage(Stage::kMix, config);
    FAIL() << "expected PrerequisiteError";
  } catch (const PrerequisiteError& e) {
    EXPECT_EQ(e.missing(), stage_dir(config, Stage::kStandardize) / "pool.jsonl");
  }
  for (Stage s : {Stage::kAlign, Stage::kStandardize, Stage::kStats}) {
    EXPECT_THROW(run_stage(s, config), PrerequisiteError) << to_string(s);
  }
  auto no_matrix = config;
  no_matrix.matrix.clear();
  no_matrix.pool = dir.path() / "pool.jsonl";
  util::write_atomic(no_matrix.pool, std::string());
  EXPECT_THROW(run_stage(Stage::kMix, no_matrix), PrerequisiteError);
  EXPECT_FALSE(fs::exists(stage_dir(config, Stage::kMix) / "manifest.jsonl"));
}

TEST_F(Fixture, RunsEveryStageEndToEnd) {
  std::map<Stage, json> summary;
  for (Stage s : kAllStages) {
    const auto out = run_stage(s, config);
    EXPECT_FALSE(out.skipped);
    summary[s] = out.summary;
  }
  EXPECT_EQ(summary[Stage::kSegment]["files"], 10);
  EXPECT_GT(summary[Stage::kSegment]["discarded"].get<int>(), 0);
  EXPECT_GT(summary[Stage::kAlign]["accepted"].get<int>(), 0);
  EXPECT_EQ(summary[Stage::kAlign]["transient_errors"], 0);
  EXPECT_EQ(summary[Stage::kMix]["mixtures"], 20);
  EXPECT_EQ(summary[Stage::kMix]["per_split"]["train"], 12);
  EXPECT_EQ(summary[Stage::kEval]["study"]["trials"], 20);

  const auto mix = stage_dir(config, Stage::kMix);
  EXPECT_EQ(util::lines(util::read_text(mix / "manifest.jsonl")).size(), 20u);
  for (const char* f : {"label_counts.csv", "source_counts.csv", "report.json"}) {
    EXPECT_TRUE(fs::exists(stage_dir(config, Stage::kStats) / f)) << f;
  }
  EXPECT_TRUE(fs::exists(stage_dir(config, Stage::kEval) / "study.json"));
}

TEST_F(Fixture, SecondRunIsANoOp) {
  run_all(config);
  const auto before = tree(config.output_root);
  const auto times = mtimes(config.output_root);
  for (Stage s : kAllStages) EXPECT_TRUE(run_stage(s, config).skipped) << to_string(s);
  EXPECT_EQ(tree(config.output_root), before);
  EXPECT_EQ(mtimes(config.output_root), times);
}

TEST_F(Fixture, ChangedSettingsInvalidateDownstreamOnly) {
  run_all(config);
  auto changed = config;
  changed.seed = 8;
  EXPECT_TRUE(run_stage(Stage::kSegment, changed).skipped);
  EXPECT_FALSE(run_stage(Stage::kMix, changed).skipped);
  EXPECT_FALSE(run_stage(Stage::kStats, changed).skipped);
}

TEST_F(Fixture, LostOutputForcesRerun) {
  run_all(config);
  fs::remove(stage_dir(config, Stage::kAlign) / "accepted.jsonl");
  EXPECT_FALSE(run_stage(Stage::kAlign, config).skipped);
  EXPECT_TRUE(fs::exists(stage_dir(config, Stage::kAlign) / "accepted.jsonl"));
}

TEST(Determinism, SeededRunsAreByteIdentical) {
  TempDir a;
  TempDir b;
  const auto ca = load_config(fixture::write_fixture(a.path()));
  auto cb = load_config(fixture::write_fixture(b.path()));
  cb.workers = 1;
  run_all(ca);
  run_all(cb);
  EXPECT_EQ(tree(ca.output_root), tree(cb.output_root));
}

// Cut every stage short at several points, resume, and finish.
TEST(Resume, InterruptedRunsMatchUninterrupted) {
  TempDir ref_dir;
  const auto ref = load_config(fixture::write_fixture(ref_dir.path()));
  run_all(ref);
  const auto expected = tree(ref.output_root);

  for (std::size_t k : {1u, 2u, 5u}) {
    TempDir dir;
    const auto c = load_config(fixture::write_fixture(dir.path()));
    std::size_t interrupted = 0;
    for (Stage s : kAllStages) {
      RunOptions cut;
      cut.stop_after = k;
      try {
        run_stage(s, c, cut);
      } catch (const Interrupted&) {
        ++interrupted;
      }
      RunOptions resume;
      resume.resume = true;
      run_stage(s, c, resume);
    }
    // Only align, standardize and mix have more than five units.
    EXPECT_EQ(interrupted, k < 3 ? 7u : 3u) << "k=" << k;
    EXPECT_EQ(tree(c.output_root), expected) << "k=" << k;
  }
}

TEST(Resume, StaleCheckpointsAreDiscarded) {
  TempDir ref_dir;
  const auto ref = load_config(fixture::write_fixture(ref_dir.path()));
  run_all(ref);

  TempDir dir;
  const auto c = load_config(fixture::write_fixture(dir.path()));
  for (Stage s : {Stage::kOntology, Stage::kSegment, Stage::kAlign, Stage::kStandardize}) {
    run_stage(s, c);
  }
  auto other = c;
  other.seed = 99;
  RunOptions cut;
  cut.stop_after = 3;
  EXPECT_THROW(run_stage(Stage::kMix, other, cut), Interrupted);
  RunOptions resume;
  resume.resume = true;
  for (Stage s : {Stage::kMix, Stage::kStats, Stage::kEval}) run_stage(s, c, resume);
  EXPECT_EQ(tree(c.output_root), tree(ref.output_root));
}

#ifdef SEPFORGE_CLI
int cli(const fs::path& config, const std::string& args) {
  const std::string cmd = std::string(SEPFORGE_CLI) + " --config " + config.string() + " " +
                          args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  const auto config = fixture::write_fixture(dir.path());
  EXPECT_EQ(cli(config, "mix"), 1);
  EXPECT_EQ(cli(config, "ontology"), 0);
  EXPECT_EQ(cli(config, "ontology"), 0);
  EXPECT_EQ(cli(dir.path() / "absent.json", "ontology"), 1);
  EXPECT_EQ(cli(config, "no-such-stage"), 1);
  util::write_atomic(dir.path() / "bad.json", std::string(R"({"segment": {"hop_s": 0}})"));
  EXPECT_EQ(cli(dir.path() / "bad.json", "segment"), 1);
}
#endif

}  // namespace
}  // namespace sepforge::pipeline
