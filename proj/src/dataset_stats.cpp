// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sepforge/evalkit/dataset_stats.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <utility>

#include "sepforge/util.hpp"

namespace sepforge::evalkit {
namespace {

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

double proportion(std::size_t part, std::size_t whole) {
  return whole == 0 ? 0.0 : static_cast<double>(part) / static_cast<double>(whole);
}

std::vector<std::pair<std::string, std::size_t>> ranked(const DatasetStats& stats) {
  std::vector<std::pair<std::string, std::size_t>> rows(stats.label_counts.begin(),
                                                        stats.label_counts.end());
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return rows;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

DatasetStats dataset_statistics(const std::vector<ManifestText>& manifests) {
  DatasetStats stats;
  for (const auto& m : manifests) {
    std::size_t lineno = 0;
    for (const auto& line : util::lines(m.text)) {
      ++lineno;
      if (util::trim(line).empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        const auto& comps = j.at("components");
        if (!comps.is_array() || comps.empty()) throw std::runtime_error("no components");
        std::set<std::string> labels;
        for (const auto& c : comps) labels.insert(c.at("label").get<std::string>());
        const std::string split = j.contains("split") ? j["split"].get<std::string>() : "";
        ++stats.mixtures;
        ++stats.source_counts[static_cast<int>(comps.size())];
        for (const auto& l : labels) ++stats.label_counts[l];
        if (!split.empty()) ++stats.split_counts[split];
      } catch (const std::exception& e) {
        stats.malformed.push_back({m.name, lineno, e.what()});
      }
    }
  }
  return stats;
}

std::string label_counts_csv(const DatasetStats& stats) {
  std::string out = "label,count,proportion\n";
  for (const auto& [label, count] : ranked(stats)) {
    out += csv_field(label) + "," + std::to_string(count) + "," +
           fixed6(proportion(count, stats.mixtures)) + "\n";
  }
  return out;
}

std::string source_counts_csv(const DatasetStats& stats) {
  std::string out = "sources,count,proportion\n";
  for (const auto& [c, count] : stats.source_counts) {
    out += std::to_string(c) + "," + std::to_string(count) + "," +
           fixed6(proportion(count, stats.mixtures)) + "\n";
  }
  return out;
}

nlohmann::json to_json(const DatasetStats& stats, std::size_t top_k) {
  nlohmann::json histogram = nlohmann::json::object();
  for (const auto& [c, count] : stats.source_counts) {
    histogram[std::to_string(c)] = {{"count", count},
                                    {"proportion", proportion(count, stats.mixtures)}};
  }
  const auto rows = ranked(stats);
  auto table = [&](auto first, auto last) {
    nlohmann::json t = nlohmann::json::array();
    for (auto it = first; it != last; ++it) {
      t.push_back({{"label", it->first},
                   {"count", it->second},
                   {"proportion", proportion(it->second, stats.mixtures)}});
    }
    return t;
  };
  const std::size_t k = std::min(top_k, rows.size());
  nlohmann::json malformed = nlohmann::json::array();
  for (const auto& m : stats.malformed) {
    malformed.push_back({{"source", m.source}, {"line", m.line}, {"error", m.error}});
  }
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& [label, count] : stats.label_counts) labels[label] = count;
  return {{"mixtures", stats.mixtures},
          {"source_count_histogram", std::move(histogram)},
          {"label_counts", std::move(labels)},
          {"split_counts", stats.split_counts},
          {"top_k", table(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k))},
          {"bottom_k", table(rows.rbegin(), rows.rbegin() + static_cast<std::ptrdiff_t>(k))},
          {"malformed_lines", std::move(malformed)}};
}

}  // namespace sepforge::evalkit
