// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Statistics for four-alternative forced-choice listening studies:
// agreement, consensus accuracy, paired t-test and bootstrap intervals.
//
// Trial CSV (long format, one row per rater response):
//   clip_id,target_index,candidate0,candidate1,candidate2,candidate3,rater,choice

#ifndef SEPFORGE_EVALKIT_STATS_HPP_
#define SEPFORGE_EVALKIT_STATS_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace sepforge::evalkit {

inline constexpr int kChoices = 4;

class StatsError : public std::invalid_argument {
 public:
  enum class Kind { kInput, kRagged, kTooFewRaters, kDegenerate };
  StatsError(Kind kind, const std::string& what)
      : std::invalid_argument(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// table[i][j] = raters who put item i in category j. Every row must sum to
// n >= 2. Throws StatsError(kDegenerate) when expected agreement is 1.
double fleiss_kappa(const std::vector<std::vector<int>>& table, int n);

struct Trial {
  std::string clip_id;
  std::array<std::string, kChoices> candidates;
  int target_index = 0;
  std::map<std::string, int> responses;  // rater -> choice index
};

struct TrialTable {
  std::vector<Trial> trials;        // first-appearance order
  std::vector<std::string> raters;  // first-appearance order
};

// Throws StatsError(kInput) with the line number on malformed rows, indices
// outside 0..3, conflicting candidate lists or duplicate responses.
TrialTable parse_trials_csv(std::string_view text);

struct ConsensusReport {
  std::vector<std::optional<int>> consensus;  // nullopt on a tie
  std::vector<int> responders;
  std::vector<double> h;  // fraction of responders choosing the target
  std::map<std::string, double> rater_accuracy;
  double mean_accuracy = 0.0;
};

ConsensusReport consensus_and_accuracy(const TrialTable& table);

// b_i = 1[consensus == target] and h_i for every trial without a tie.
struct PairedOutcomes {
  std::vector<std::string> clip_ids;
  std::vector<double> b;
  std::vector<double> h;
};
PairedOutcomes paired_outcomes(const TrialTable& table, const ConsensusReport& report);

struct KappaResult {
  double kappa = 0.0;
  std::size_t items = 0;
  int raters = 0;
  // Trials dropped because not every rater answered them.
  std::vector<std::string> excluded;
};

// Fleiss' kappa over the four choice indices, restricted to trials answered
// by every listed rater.
KappaResult fleiss_kappa(const TrialTable& table);

// Two-sided p-value of Student's t with df degrees of freedom, from the
// regularized incomplete beta function.
double student_t_two_sided_p(double t, double df);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double mean_difference = 0.0;
  int df = 0;
  bool degenerate = false;  // zero variance in the differences
};

// Paired test on d_i = b_i - h_i. Throws StatsError(kInput) for unequal
// lengths or n < 2.
TTestResult paired_t_test(std::span<const double> b, std::span<const double> h);

using Statistic = std::function<double(std::span<const double>)>;

double mean(std::span<const double> values);

// Linear-interpolation percentile (q in [0, 100]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

// Clip-level resampling with replacement; returns the ((1-level)/2,
// (1+level)/2) percentiles of the resampled statistic.
std::pair<double, double> bootstrap_percentile_ci(std::span<const double> values,
                                                  const Statistic& statistic,
                                                  int resamples = 10000,
                                                  double level = 0.95,
                                                  std::uint64_t seed = 0);

struct StatReport {
  double mean_rater_accuracy = 0.0;
  std::vector<std::optional<int>> consensus_labels;
  double consensus_accuracy = 0.0;
  KappaResult kappa;
  std::optional<std::string> kappa_error;
  TTestResult t_test;
  std::pair<double, double> ci{0.0, 0.0};  // of the mean paired difference
  std::size_t ties = 0;
};

StatReport study_report(const TrialTable& table, int resamples, std::uint64_t seed);
nlohmann::json to_json(const StatReport& report, const TrialTable& table);

}  // namespace sepforge::evalkit

#endif  // SEPFORGE_EVALKIT_STATS_HPP_
