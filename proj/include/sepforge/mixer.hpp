// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Mixture synthesis: co-occurrence matrix, recipe sampling, RMS/SNR scaling
// and replayable dataset emission.
//
// Matrix document: a header line of N tab-separated label ids, then N rows of
// N characters in {0,1}.
// Pool listing: JSONL {clip_id, label, path, duration_s[, split]}, paths
// relative to the listing's directory.

#ifndef SEPFORGE_MIXER_HPP_
#define SEPFORGE_MIXER_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sepforge/annotator.hpp"
#include "sepforge/audio.hpp"
#include "sepforge/ontology.hpp"

namespace sepforge::mixer {

inline constexpr double kRmsTarget = 0.1;
inline constexpr double kPeakLimit = 0.999;
inline constexpr int kSampleRate = 44100;
inline constexpr int kMinSources = 2;
inline constexpr int kMaxSources = 5;

class MixError : public std::runtime_error {
 public:
  enum class Kind {
    kMalformedMatrix,
    kUnknownLabel,
    kAttemptBudget,
    kSilentBuffer,
    kClipTooShort,
    kBadClip,
    kBadRecipe,
  };
  MixError(Kind kind, const std::string& what, int source_count = 0)
      : std::runtime_error(what), kind_(kind), source_count_(source_count) {}
  Kind kind() const { return kind_; }
  // The source count C for attempt-budget failures.
  int source_count() const { return source_count_; }

 private:
  Kind kind_;
  int source_count_;
};

class CooccurrenceMatrix {
 public:
  CooccurrenceMatrix() = default;
  // bits must be N x N; no symmetrization happens here.
  CooccurrenceMatrix(std::vector<std::string> labels,
                     std::vector<std::vector<std::uint8_t>> bits);
  static CooccurrenceMatrix all_ones(std::vector<std::string> labels);

  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  std::optional<std::size_t> index_of(std::string_view label) const;
  bool contains(std::string_view label) const { return index_of(label).has_value(); }
  // False for a label paired with itself or with an unknown label.
  bool compatible(std::string_view a, std::string_view b) const;
  bool bit(std::size_t i, std::size_t j) const { return bits_[i][j] != 0; }

 private:
  std::vector<std::string> labels_;
  std::vector<std::vector<std::uint8_t>> bits_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct MatrixLoad {
  CooccurrenceMatrix matrix;
  // Off-diagonal pairs (i < j) whose two entries disagreed; both are now 0.
  std::vector<std::pair<std::string, std::string>> asymmetric;
};

// Symmetrizes by AND. When an ontology is given, every label must be one of
// its leaves.
MatrixLoad load_matrix(std::string_view document,
                       const ontology::Ontology* ont = nullptr);
std::string serialize_matrix(const CooccurrenceMatrix& matrix);

struct JudgeOptions {
  int passes = 10;
  double temperature = 1.0;
  RetryPolicy retry;
  std::string template_id = "cooccurrence";
  std::string yes_token = "yes";
  std::string no_token = "no";
  unsigned workers = 1;
};

// One judge query per unordered pair, majority vote over passes; a tie or
// no valid answer yields 0.
CooccurrenceMatrix build_matrix(const std::vector<std::string>& labels,
                                aligner::Annotator& judge,
                                const aligner::PromptTemplates& templates,
                                const JudgeOptions& options);

struct Clip {
  std::string clip_id;
  std::string label;
  std::string path;  // relative to the pool listing's directory
  double duration_s = 0.0;
  std::string split;  // empty: usable by every split

  bool operator==(const Clip&) const = default;
};

nlohmann::json to_json(const Clip& clip);
Clip clip_from_json(const nlohmann::json& j);
std::vector<Clip> parse_pool_listing(std::string_view text);
std::string to_jsonl(const std::vector<Clip>& clips);

// label -> clips, listing order preserved within a label.
class Pool {
 public:
  Pool() = default;
  explicit Pool(const std::vector<Clip>& clips);
  const std::map<std::string, std::vector<Clip>>& by_label() const { return by_label_; }
  std::size_t clip_count() const;
  // Clips usable for a split of the given duration that the matrix knows.
  Pool filtered(std::string_view split, double min_duration_s,
                const CooccurrenceMatrix& matrix) const;

 private:
  std::map<std::string, std::vector<Clip>> by_label_;
};

struct Component {
  Clip clip;
  double snr_db = 0.0;
  double crop_offset_s = 0.0;

  bool operator==(const Component&) const = default;
};

struct MixRecipe {
  std::string mixture_id;
  std::string split;
  double duration_s = 0.0;
  std::uint64_t seed = 0;
  std::vector<Component> components;  // components[0] is the anchor

  bool operator==(const MixRecipe&) const = default;
};

struct SamplingOptions {
  std::vector<double> count_weights{0.20, 0.20, 0.25, 0.35};  // C = 2..5
  double snr_min_db = -5.0;
  double snr_max_db = 5.0;
  int max_attempts = 10000;
};

// Throws std::invalid_argument for weights that are not 4 non-negative
// values summing to 1, or an inverted SNR range.
void validate(const SamplingOptions& options);

// Everything is drawn from Rng(seed): C, the label tuple, then per component
// the clip, the SNR (not for the anchor) and a whole-frame crop offset.
MixRecipe sample_recipe(const Pool& pool, const CooccurrenceMatrix& matrix,
                        const SamplingOptions& options, std::string split,
                        double duration_s, std::uint64_t seed,
                        std::string mixture_id = {});

double split_duration_s(std::string_view split);

// Recipe seeds come from one sequential stream per split; mixture ids are
// "{split}-{index:07}".
std::vector<MixRecipe> sample_split(const Pool& pool, const CooccurrenceMatrix& matrix,
                                    const SamplingOptions& options,
                                    const std::string& split, std::size_t count,
                                    std::uint64_t seed);

// Throws MixError(kSilentBuffer) when rms is zero or not finite.
AudioBuffer normalize_rms(const AudioBuffer& buffer, double target = kRmsTarget);

inline double snr_gain(double snr_db) { return std::pow(10.0, snr_db / 20.0); }

using ClipLoader = std::function<AudioBuffer(const Clip&)>;

// Reads WAVs relative to base_dir and checks they are mono 44.1 kHz.
ClipLoader file_clip_loader(std::filesystem::path base_dir);

struct SynthesisOptions {
  double rms_target = kRmsTarget;
  // A crop whose rms falls below this is silent and gets re-drawn.
  double silence_rms = 5e-4;
  int crop_redraws = 5;
};

struct RenderedStems {
  MixRecipe recipe;                // with the crop offsets actually used
  std::vector<AudioBuffer> stems;  // g_c * normalized crop, before the peak guard
};

RenderedStems render_stems(const MixRecipe& recipe, const ClipLoader& loader,
                           const SynthesisOptions& options = {});

struct Synthesis {
  MixRecipe recipe;
  AudioBuffer mixture;
  std::vector<AudioBuffer> stems;
  double peak_scale = 1.0;
};

// Stems are scaled by the shared peak scale and rounded to float32; the
// mixture is the in-order sum of those rounded stems, rounded to float32.
// Stored audio therefore round-trips exactly through float WAV files.
Synthesis synthesize_mixture(const MixRecipe& recipe, const ClipLoader& loader,
                             const SynthesisOptions& options = {});

struct ManifestEntry {
  MixRecipe recipe;
  double peak_scale = 1.0;
  std::string mixture_path;  // relative to the output root
  std::vector<std::string> stem_paths;

  bool operator==(const ManifestEntry&) const = default;
};

nlohmann::json to_json(const ManifestEntry& entry);
ManifestEntry entry_from_json(const nlohmann::json& j);
std::string manifest_line(const ManifestEntry& entry);

// Replays an entry without crop re-draws.
Synthesis replay(const ManifestEntry& entry, const ClipLoader& loader,
                 const SynthesisOptions& options = {});

struct EmitOptions {
  unsigned workers = 1;
  SynthesisOptions synthesis;
  // Test hook: stop after this many recipes, leaving the manifest unwritten.
  std::optional<std::size_t> stop_after;
};

struct EmitFailure {
  std::string mixture_id;
  std::string error;
};

struct EmitReport {
  std::vector<ManifestEntry> entries;  // recipe order
  std::vector<EmitFailure> failures;
  std::size_t reused = 0;
  bool complete = false;
};

// Writes {split}/{mixture_id}/mix.wav and s{k}.wav (k from 1), an entry.json
// checkpoint per mixture, and finally manifest.jsonl in recipe order.
// Mixtures with a valid checkpoint are not re-synthesized.
EmitReport emit_dataset(const std::vector<MixRecipe>& recipes, const ClipLoader& loader,
                        const std::filesystem::path& output_root,
                        const EmitOptions& options = {});

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace sepforge::mixer

#endif  // SEPFORGE_MIXER_HPP_
