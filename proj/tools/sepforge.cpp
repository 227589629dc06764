// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// sepforge: run one pipeline stage.
//
//   sepforge --config config.json [--seed N] [--workers N] [--resume] <stage>
//
// Exit status: 0 success, 1 invalid configuration or missing prerequisite,
// 2 runtime failure.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sepforge/pipeline.hpp"
#include "sepforge/transport.hpp"

namespace pl = sepforge::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"Dataset synthesis pipeline for text-queried sound separation"};
  app.fallthrough();
  app.require_subcommand(1);
  std::string config_path = "sepforge.json";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  bool resume = false;
  app.add_option("--config", config_path, "Pipeline config (JSON)");
  app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--workers", workers, "Worker threads (0: available parallelism)");
  app.add_flag("--resume", resume, "Reuse per-item checkpoints from an interrupted run");

  const std::pair<pl::Stage, const char*> stages[] = {
      {pl::Stage::kOntology, "Apply the refinement plan to the taxonomy"},
      {pl::Stage::kSegment, "Cut the corpus into gated fixed-length windows"},
      {pl::Stage::kAlign, "Vote segments into single-event leaf labels"},
      {pl::Stage::kStandardize, "Bring accepted clips to 44.1 kHz"},
      {pl::Stage::kMix, "Sample recipes and synthesize mixtures"},
      {pl::Stage::kStats, "Label and source-count statistics over the manifest"},
      {pl::Stage::kEval, "SDR/SI-SDR batch metrics and listening-study statistics"},
  };
  for (const auto& [stage, help] : stages) app.add_subcommand(std::string(pl::to_string(stage)), help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const auto* sub = app.get_subcommands().front();
  const auto stage = pl::stage_from_string(sub->get_name());
  try {
    auto config = pl::load_config(config_path);
    if (seed) config.seed = *seed;
    if (workers) config.workers = *workers;
    pl::RunOptions options;
    options.resume = resume;
    options.log = &std::cerr;
    const auto outcome = pl::run_stage(*stage, config, options);
    if (outcome.skipped) {
      std::cout << sub->get_name() << ": up to date\n";
    } else {
      std::cout << outcome.summary.dump(2) << "\n";
    }
    if (outcome.summary.contains("transient_errors") &&
        outcome.summary["transient_errors"].get<int>() > 0) {
      return 2;
    }
    return 0;
  } catch (const pl::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const pl::PrerequisiteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const sepforge::ConfigurationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << sub->get_name() << " failed: " << e.what() << "\n";
    return 2;
  }
}
