// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Cascaded single-event verification and leaf labeling:
//   metadata multi-label check -> polyphony vote -> coarse tag threshold ->
//   leaf refinement vote within the coarse label's subtree.
// The first failing stage decides the result; later stages are not queried.

#ifndef SEPFORGE_ALIGNER_HPP_
#define SEPFORGE_ALIGNER_HPP_

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sepforge/annotator.hpp"
#include "sepforge/ontology.hpp"
#include "sepforge/segmenter.hpp"

namespace sepforge::aligner {

// Bucket for answers that match no expected token; it never wins a vote.
inline constexpr const char* kInvalidAnswer = "<invalid>";

struct VoteTally {
  std::map<std::string, int> counts;
  int total = 0;

  void add(const std::string& answer);
  bool operator==(const VoteTally&) const = default;
};

// The unique answer with the highest count, excluding the invalid bucket.
// nullopt when the maximum is shared or no valid answer was given. Throws
// std::invalid_argument on an empty tally.
std::optional<std::string> majority_vote(const VoteTally& tally);

enum class AlignmentStatus {
  kAccepted,
  kRejectedMultilabelMetadata,
  kRejectedPolyphonic,
  kRejectedLowConfidence,
  kRejectedNoLeafMatch,
  kRejectedVoteTie,
  // Annotator unreachable after retries. Retryable, not a rejection.
  kTransientError,
};

std::string_view to_string(AlignmentStatus status);
AlignmentStatus status_from_string(std::string_view s);

struct AlignmentResult {
  segmenter::Segment segment;
  AlignmentStatus status = AlignmentStatus::kRejectedVoteTie;
  std::optional<std::string> leaf_label;
  std::optional<std::string> coarse_label;
  std::optional<double> coarse_confidence;
  std::map<std::string, VoteTally> tallies;  // keyed by stage name
  std::string detail;                        // error text for transient errors

  bool operator==(const AlignmentResult&) const = default;
};

struct CoarseTag {
  std::string label;
  double confidence = 0.0;
};

class CoarseTagger {
 public:
  virtual ~CoarseTagger() = default;
  // nullopt when the tagger has no prediction for the segment.
  virtual std::optional<CoarseTag> tag(const segmenter::Segment& segment) = 0;
};

// Predictions looked up from a table keyed by segment key, falling back to
// source id. TSV lines: `key<TAB>label<TAB>confidence`.
class TableCoarseTagger : public CoarseTagger {
 public:
  explicit TableCoarseTagger(std::map<std::string, CoarseTag> table)
      : table_(std::move(table)) {}
  static TableCoarseTagger parse(std::string_view tsv);

  std::optional<CoarseTag> tag(const segmenter::Segment& segment) override;

 private:
  std::map<std::string, CoarseTag> table_;
};

struct AlignerOptions {
  int passes = 10;
  double temperature = 1.0;
  double coarse_threshold = 0.7;
  RetryPolicy retry;
  std::string purification_template = "purification";
  std::string relabel_template = "relabel";
  std::string single_token = "single";
  std::string multi_token = "multi";
};

// Lazily supplies segment audio to clients that need it.
using AudioProvider = std::function<const AudioBuffer&()>;

struct StageContext {
  Annotator& annotator;
  const PromptTemplates& templates;
  const AlignerOptions& options;
  AudioProvider audio;  // may be empty when the annotator needs no audio
  std::string audio_path;
};

// Lower-cased, trimmed, with surrounding quotes and trailing periods removed.
std::string normalize_answer(std::string_view raw);

struct PolyphonyVerdict {
  std::optional<bool> single_event;  // nullopt on a tie
  VoteTally tally;
};

// Issues `passes` purification queries. Throws TransientFailure.
PolyphonyVerdict detect_polyphony(const segmenter::Segment& segment,
                                  const StageContext& ctx);

struct CoarseFilterResult {
  bool passed = false;
  std::optional<CoarseTag> tag;
};

// confidence >= threshold passes. Throws ConfigurationError when the label
// is not in the ontology or the confidence lies outside [0, 1].
CoarseFilterResult coarse_tag_filter(const segmenter::Segment& segment,
                                     CoarseTagger& tagger,
                                     const ontology::Ontology& ont,
                                     double threshold = 0.7);

struct LeafVerdict {
  std::optional<std::string> leaf;  // set when a candidate won
  AlignmentStatus status = AlignmentStatus::kRejectedNoLeafMatch;
  VoteTally tally;
};

// Renders the candidate list into the relabel template and votes on the
// returned index. Throws ConfigurationError on an empty candidate set and
// TransientFailure on transport exhaustion.
LeafVerdict refine_to_leaf(const segmenter::Segment& segment,
                           const std::string& coarse_label,
                           const ontology::Ontology& ont,
                           const StageContext& ctx);

// Renders candidate labels as a JSON list of display names.
std::string render_leaf_list(const ontology::Ontology& ont,
                             const std::vector<std::string>& candidates);

AlignmentResult align_segment(const segmenter::Segment& segment,
                              const std::vector<std::string>& metadata_labels,
                              const ontology::Ontology& ont,
                              CoarseTagger& tagger, const StageContext& ctx);

nlohmann::json to_json(const AlignmentResult& result);
AlignmentResult alignment_from_json(const nlohmann::json& j);

// Corpus metadata: JSONL lines {"source_id": str, "labels": [str, ...]}.
std::map<std::string, std::vector<std::string>> parse_metadata(std::string_view jsonl);

}  // namespace sepforge::aligner

#endif  // SEPFORGE_ALIGNER_HPP_
