// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sepforge/evalkit/metrics.hpp"

#include <cmath>
#include <limits>

#include "sepforge/util.hpp"

namespace sepforge::evalkit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) {
    throw MetricError("estimate has " + std::to_string(estimate.size()) +
                      " samples, reference has " + std::to_string(reference.size()));
  }
  if (reference.empty()) throw MetricError("metrics need at least one sample");
}

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

}  // namespace

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  check(estimate, reference);
  const double ref_energy = energy(reference);
  if (ref_energy == 0.0) throw MetricError("reference is all zero");
  double dot = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) dot += estimate[i] * reference[i];
  const double alpha = dot / ref_energy;
  double target = 0.0;
  double residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double t = alpha * reference[i];
    const double r = t - estimate[i];
    target += t * t;
    residual += r * r;
  }
  if (target == 0.0) return -kInf;
  if (residual == 0.0) return kInf;
  return 10.0 * std::log10(target / residual);
}

double sdr(std::span<const double> estimate, std::span<const double> reference) {
  check(estimate, reference);
  const double ref_energy = energy(reference);
  if (ref_energy == 0.0) throw MetricError("reference is all zero");
  double err = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = reference[i] - estimate[i];
    err += d * d;
  }
  if (err == 0.0) return kInf;
  return 10.0 * std::log10(ref_energy / err);
}

nlohmann::json db_to_json(double value) {
  if (std::isnan(value)) return nullptr;
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  return value;
}

double db_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw MetricError("unexpected metric value '" + s + "'");
  }
  return j.get<double>();
}

std::vector<MetricResult> evaluate_pairs(const std::vector<MetricPair>& pairs,
                                         unsigned workers) {
  std::vector<MetricResult> out(pairs.size());
  util::parallel_for(pairs.size(), workers, [&](std::size_t i) {
    const auto& p = pairs[i];
    out[i] = {p.pair_id, sdr(p.estimate, p.reference), si_sdr(p.estimate, p.reference)};
  });
  return out;
}

std::string to_jsonl(const std::vector<MetricResult>& results) {
  std::string out;
  for (const auto& r : results) {
    const nlohmann::json j = {{"pair_id", r.pair_id},
                              {"sdr_db", db_to_json(r.sdr_db)},
                              {"si_sdr_db", db_to_json(r.si_sdr_db)}};
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace sepforge::evalkit
