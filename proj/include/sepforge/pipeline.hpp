// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Stage orchestration behind the `sepforge` command line tool.
//
// Layout under output_root:
//   ontology/    ontology.tsv, aliases.tsv, leaves.txt
//   segments/    segments.jsonl, summary.json
//   align/       alignment.jsonl, accepted.jsonl, summary.json
//   standardize/ clips/*.wav, pool.jsonl, provenance.jsonl
//   mix/         {split}/{mixture_id}/..., manifest.jsonl, failures.jsonl
//   stats/       label_counts.csv, source_counts.csv, report.json
//   eval/        metrics.jsonl, summary.json[, study.json]
// Every stage directory carries a .stamp with the content fingerprint of its
// inputs and settings; a matching stamp turns a rerun into a no-op.

#ifndef SEPFORGE_PIPELINE_HPP_
#define SEPFORGE_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sepforge::aligner {
class Annotator;
}
namespace sepforge::standardizer {
class BandwidthExtender;
}

namespace sepforge::pipeline {

namespace fs = std::filesystem;

struct PipelineConfig {
  // Paths; relative entries in a config file resolve against its directory.
  fs::path corpus_root;
  fs::path output_root = "out";
  fs::path taxonomy;
  fs::path refinement_plan;  // optional
  fs::path metadata;         // JSONL {source_id, labels}
  fs::path coarse_tags;      // TSV key, label, confidence
  fs::path annotator;        // offline annotator config (JSON)
  fs::path matrix;           // co-occurrence matrix document
  fs::path prompts;          // directory of *.txt templates; optional
  fs::path pool;             // overrides standardize/pool.jsonl when set
  fs::path trials;           // 4-AFC responses CSV for `eval`; optional

  double window_s = 10.0;
  double hop_s = 5.0;
  double rms_gate = 5e-4;

  int passes = 10;
  double temperature = 1.0;
  double coarse_confidence = 0.7;
  int retry_attempts = 3;
  int retry_base_delay_ms = 200;
  int max_in_flight = 4;
  std::string audio_transfer = "inline";  // inline | path
  std::string annotator_url;              // SEPFORGE_ANNOTATOR_URL wins

  int target_rate = 44100;
  std::string extender_url;  // SEPFORGE_EXTENDER_URL wins

  double snr_min_db = -5.0;
  double snr_max_db = 5.0;
  double rms_target = 0.1;
  std::vector<double> count_weights{0.20, 0.20, 0.25, 0.35};
  std::map<std::string, std::size_t> split_sizes{{"train", 100}, {"val", 20}, {"test", 20}};
  int max_attempts = 10000;
  int crop_redraws = 5;
  double silence_rms = 5e-4;
  bool build_matrix = false;  // judge the matrix when no document is given

  int bootstrap_resamples = 10000;

  std::uint64_t seed = 0;
  unsigned workers = 0;  // 0: available parallelism
};

// Raised with every problem found, before any work starts.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

class PrerequisiteError : public std::runtime_error {
 public:
  PrerequisiteError(const std::string& what, fs::path missing)
      : std::runtime_error(what), missing_(std::move(missing)) {}
  const fs::path& missing() const { return missing_; }

 private:
  fs::path missing_;
};

// Thrown by the stop_after test hook.
class Interrupted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unknown keys and out-of-range values are collected into one
// ValidationError.
PipelineConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir);
PipelineConfig load_config(const fs::path& path);
nlohmann::json to_json(const PipelineConfig& config);
std::vector<std::string> validation_problems(const PipelineConfig& config);

enum class Stage { kOntology, kSegment, kAlign, kStandardize, kMix, kStats, kEval };

inline constexpr Stage kAllStages[] = {Stage::kOntology, Stage::kSegment, Stage::kAlign,
                                       Stage::kStandardize, Stage::kMix, Stage::kStats,
                                       Stage::kEval};

std::string_view to_string(Stage stage);
std::optional<Stage> stage_from_string(std::string_view name);

struct RunOptions {
  bool resume = false;
  // Stop after this many items (or output files for single-shot stages) and
  // throw Interrupted.
  std::optional<std::size_t> stop_after;
  // Injected clients; when null the config decides.
  aligner::Annotator* annotator = nullptr;
  standardizer::BandwidthExtender* extender = nullptr;
  std::ostream* log = nullptr;
};

struct StageOutcome {
  bool skipped = false;  // stamp matched
  std::vector<std::string> warnings;
  nlohmann::json summary;
};

StageOutcome run_stage(Stage stage, const PipelineConfig& config, const RunOptions& options = {});

fs::path stage_dir(const PipelineConfig& config, Stage stage);

}  // namespace sepforge::pipeline

#endif  // SEPFORGE_PIPELINE_HPP_
