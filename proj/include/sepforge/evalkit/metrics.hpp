// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Signal-fidelity metrics in dB. Perfect reconstructions return +infinity
// and vanished projections return -infinity; callers choose how to print
// them.

#ifndef SEPFORGE_EVALKIT_METRICS_HPP_
#define SEPFORGE_EVALKIT_METRICS_HPP_

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sepforge::evalkit {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// alpha = <est, ref> / |ref|^2;  10 log10(|alpha ref|^2 / |alpha ref - est|^2).
// Throws MetricError on empty input, length mismatch or an all-zero reference.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);

// Plain energy ratio 10 log10(|ref|^2 / |ref - est|^2).
double sdr(std::span<const double> estimate, std::span<const double> reference);

// +inf / -inf become the strings "inf" / "-inf"; NaN becomes null.
nlohmann::json db_to_json(double value);
double db_from_json(const nlohmann::json& j);

struct MetricPair {
  std::string pair_id;
  std::vector<double> estimate;
  std::vector<double> reference;
};

struct MetricResult {
  std::string pair_id;
  double sdr_db = 0.0;
  double si_sdr_db = 0.0;
};

// Results come back in input order whatever the worker count.
std::vector<MetricResult> evaluate_pairs(const std::vector<MetricPair>& pairs,
                                         unsigned workers = 1);

// One {pair_id, sdr_db, si_sdr_db} object per line.
std::string to_jsonl(const std::vector<MetricResult>& results);

}  // namespace sepforge::evalkit

#endif  // SEPFORGE_EVALKIT_METRICS_HPP_
