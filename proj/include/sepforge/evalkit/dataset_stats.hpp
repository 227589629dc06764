// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Label-frequency and source-count statistics over mixture manifests.

#ifndef SEPFORGE_EVALKIT_DATASET_STATS_HPP_
#define SEPFORGE_EVALKIT_DATASET_STATS_HPP_

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sepforge::evalkit {

struct ManifestText {
  std::string name;  // shown in malformed-line reports
  std::string text;
};

struct MalformedLine {
  std::string source;
  std::size_t line = 0;
  std::string error;
};

struct DatasetStats {
  std::size_t mixtures = 0;
  std::map<int, std::size_t> source_counts;     // C -> mixtures
  std::map<std::string, std::size_t> label_counts;  // label -> mixtures containing it
  std::map<std::string, std::size_t> split_counts;
  std::vector<MalformedLine> malformed;
};

// Each line is one mixture object with a "components" array of objects
// carrying "label". Bad lines are recorded and skipped.
DatasetStats dataset_statistics(const std::vector<ManifestText>& manifests);

// label,count,proportion sorted by count (descending), then label.
std::string label_counts_csv(const DatasetStats& stats);
// sources,count,proportion in ascending C.
std::string source_counts_csv(const DatasetStats& stats);
nlohmann::json to_json(const DatasetStats& stats, std::size_t top_k = 10);

}  // namespace sepforge::evalkit

#endif  // SEPFORGE_EVALKIT_DATASET_STATS_HPP_
