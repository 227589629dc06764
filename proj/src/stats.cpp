// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sepforge/evalkit/stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/beta.hpp>

#include "sepforge/evalkit/metrics.hpp"
#include "sepforge/random.hpp"
#include "sepforge/util.hpp"

namespace sepforge::evalkit {
namespace {

// RFC 4180 style: quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv_row(std::string_view line, std::size_t lineno) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty() && !was_quoted) {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? cur : util::trim(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur += c;
    }
  }
  if (quoted) {
    throw StatsError(StatsError::Kind::kInput,
                     "line " + std::to_string(lineno) + ": unterminated quoted field");
  }
  fields.push_back(was_quoted ? cur : util::trim(cur));
  return fields;
}

int parse_index(const std::string& field, std::size_t lineno, const char* what) {
  int v = -1;
  const auto* end = field.data() + field.size();
  const auto [p, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || p != end || v < 0 || v >= kChoices) {
    throw StatsError(StatsError::Kind::kInput, "line " + std::to_string(lineno) + ": " + what +
                                                   " '" + field + "' is not in 0..3");
  }
  return v;
}

}  // namespace

double fleiss_kappa(const std::vector<std::vector<int>>& table, int n) {
  if (n < 2) throw StatsError(StatsError::Kind::kTooFewRaters, "Fleiss' kappa needs n >= 2");
  if (table.empty()) throw StatsError(StatsError::Kind::kInput, "Fleiss' kappa needs items");
  const std::size_t k = table.front().size();
  if (k == 0) throw StatsError(StatsError::Kind::kInput, "Fleiss' kappa needs categories");
  std::vector<double> column(k, 0.0);
  double p_bar = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& row = table[i];
    if (row.size() != k) {
      throw StatsError(StatsError::Kind::kRagged,
                       "row " + std::to_string(i) + " has " + std::to_string(row.size()) +
                           " categories, expected " + std::to_string(k));
    }
    long long sum = 0;
    long long sq = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (row[j] < 0) {
        throw StatsError(StatsError::Kind::kRagged, "row " + std::to_string(i) + " has a negative count");
      }
      sum += row[j];
      sq += static_cast<long long>(row[j]) * row[j];
      column[j] += row[j];
    }
    if (sum != n) {
      throw StatsError(StatsError::Kind::kRagged,
                       "row " + std::to_string(i) + " sums to " + std::to_string(sum) +
                           ", expected " + std::to_string(n));
    }
    p_bar += static_cast<double>(sq - n) / (static_cast<double>(n) * (n - 1));
  }
  const double items = static_cast<double>(table.size());
  p_bar /= items;
  double p_e = 0.0;
  for (double c : column) {
    const double p = c / (items * n);
    p_e += p * p;
  }
  if (p_e >= 1.0) {
    throw StatsError(StatsError::Kind::kDegenerate,
                     "every rating falls in one category; expected agreement is 1");
  }
  return (p_bar - p_e) / (1.0 - p_e);
}

TrialTable parse_trials_csv(std::string_view text) {
  TrialTable table;
  std::map<std::string, std::size_t> trial_index;
  std::map<std::string, std::size_t> rater_index;
  const auto rows = util::lines(text);
  std::size_t lineno = 0;
  bool header = false;
  for (const auto& line : rows) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    const auto f = split_csv_row(line, lineno);
    if (!header) {
      const std::vector<std::string> want = {"clip_id",    "target_index", "candidate0",
                                             "candidate1", "candidate2",   "candidate3",
                                             "rater",      "choice"};
      if (f != want) {
        throw StatsError(StatsError::Kind::kInput,
                         "line 1: expected header clip_id,target_index,candidate0..3,rater,choice");
      }
      header = true;
      continue;
    }
    if (f.size() != 8) {
      throw StatsError(StatsError::Kind::kInput, "line " + std::to_string(lineno) + ": expected 8 fields, got " +
                                                     std::to_string(f.size()));
    }
    if (f[0].empty() || f[6].empty()) {
      throw StatsError(StatsError::Kind::kInput,
                       "line " + std::to_string(lineno) + ": empty clip_id or rater");
    }
    const int target = parse_index(f[1], lineno, "target_index");
    const int choice = parse_index(f[7], lineno, "choice");
    std::array<std::string, kChoices> cands{f[2], f[3], f[4], f[5]};

    auto [it, fresh] = trial_index.emplace(f[0], table.trials.size());
    if (fresh) {
      Trial t;
      t.clip_id = f[0];
      t.candidates = cands;
      t.target_index = target;
      table.trials.push_back(std::move(t));
    }
    Trial& trial = table.trials[it->second];
    if (trial.candidates != cands || trial.target_index != target) {
      throw StatsError(StatsError::Kind::kInput, "line " + std::to_string(lineno) +
                                                     ": candidates or target for '" + f[0] +
                                                     "' differ from an earlier row");
    }
    if (!trial.responses.emplace(f[6], choice).second) {
      throw StatsError(StatsError::Kind::kInput, "line " + std::to_string(lineno) + ": rater '" +
                                                     f[6] + "' answered '" + f[0] + "' twice");
    }
    if (rater_index.emplace(f[6], table.raters.size()).second) table.raters.push_back(f[6]);
  }
  return table;
}

ConsensusReport consensus_and_accuracy(const TrialTable& table) {
  ConsensusReport r;
  std::map<std::string, std::pair<int, int>> per_rater;  // correct, answered
  for (const auto& trial : table.trials) {
    std::array<int, kChoices> votes{};
    int hits = 0;
    for (const auto& [rater, choice] : trial.responses) {
      ++votes[static_cast<std::size_t>(choice)];
      auto& pr = per_rater[rater];
      ++pr.second;
      if (choice == trial.target_index) {
        ++hits;
        ++pr.first;
      }
    }
    const int responders = static_cast<int>(trial.responses.size());
    const int best = *std::max_element(votes.begin(), votes.end());
    std::optional<int> consensus;
    if (best > 0 && std::count(votes.begin(), votes.end(), best) == 1) {
      consensus = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
    r.consensus.push_back(consensus);
    r.responders.push_back(responders);
    r.h.push_back(responders > 0 ? static_cast<double>(hits) / responders : 0.0);
  }
  double sum = 0.0;
  for (const auto& rater : table.raters) {
    const auto it = per_rater.find(rater);
    if (it == per_rater.end() || it->second.second == 0) continue;
    const double acc = static_cast<double>(it->second.first) / it->second.second;
    r.rater_accuracy[rater] = acc;
    sum += acc;
  }
  r.mean_accuracy = r.rater_accuracy.empty() ? 0.0 : sum / static_cast<double>(r.rater_accuracy.size());
  return r;
}

PairedOutcomes paired_outcomes(const TrialTable& table, const ConsensusReport& report) {
  PairedOutcomes out;
  for (std::size_t i = 0; i < table.trials.size(); ++i) {
    if (!report.consensus[i]) continue;
    out.clip_ids.push_back(table.trials[i].clip_id);
    out.b.push_back(*report.consensus[i] == table.trials[i].target_index ? 1.0 : 0.0);
    out.h.push_back(report.h[i]);
  }
  return out;
}

KappaResult fleiss_kappa(const TrialTable& table) {
  KappaResult r;
  r.raters = static_cast<int>(table.raters.size());
  std::vector<std::vector<int>> counts;
  for (const auto& trial : table.trials) {
    if (trial.responses.size() != table.raters.size()) {
      r.excluded.push_back(trial.clip_id);
      continue;
    }
    std::vector<int> row(kChoices, 0);
    for (const auto& [rater, choice] : trial.responses) ++row[static_cast<std::size_t>(choice)];
    counts.push_back(std::move(row));
  }
  r.items = counts.size();
  r.kappa = fleiss_kappa(counts, r.raters);
  return r;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw StatsError(StatsError::Kind::kInput, "degrees of freedom must be positive");
  if (std::isnan(t)) throw StatsError(StatsError::Kind::kInput, "t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(boost::math::ibeta(df / 2.0, 0.5, x), 0.0, 1.0);
}

TTestResult paired_t_test(std::span<const double> b, std::span<const double> h) {
  if (b.size() != h.size()) {
    throw StatsError(StatsError::Kind::kInput, "paired samples differ in length");
  }
  const std::size_t n = b.size();
  if (n < 2) throw StatsError(StatsError::Kind::kInput, "paired t-test needs n >= 2");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = b[i] - h[i];

  TTestResult r;
  r.df = static_cast<int>(n) - 1;
  r.mean_difference = mean(d);
  if (std::all_of(d.begin(), d.end(), [&](double v) { return v == d.front(); })) {
    r.degenerate = true;
    const double m = d.front();
    r.mean_difference = m;
    r.t = m == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), m);
    r.p = m == 0.0 ? 1.0 : 0.0;
    return r;
  }
  double ss = 0.0;
  for (double v : d) ss += (v - r.mean_difference) * (v - r.mean_difference);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  r.t = r.mean_difference / (sd / std::sqrt(static_cast<double>(n)));
  r.p = student_t_two_sided_p(r.t, r.df);
  return r;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw StatsError(StatsError::Kind::kInput, "mean of an empty sample");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw StatsError(StatsError::Kind::kInput, "percentile of an empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw StatsError(StatsError::Kind::kInput, "percentile outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = (static_cast<double>(values.size()) - 1.0) * q / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::pair<double, double> bootstrap_percentile_ci(std::span<const double> values,
                                                  const Statistic& statistic, int resamples,
                                                  double level, std::uint64_t seed) {
  if (values.empty()) throw StatsError(StatsError::Kind::kInput, "bootstrap of an empty sample");
  if (resamples < 1) throw StatsError(StatsError::Kind::kInput, "resamples must be positive");
  if (!(level > 0.0 && level < 1.0)) throw StatsError(StatsError::Kind::kInput, "level must lie in (0, 1)");
  Rng rng(seed);
  std::vector<double> draw(values.size());
  std::vector<double> stats(static_cast<std::size_t>(resamples));
  for (auto& s : stats) {
    for (auto& v : draw) v = values[rng.uniform_index(values.size())];
    s = statistic(draw);
  }
  const double tail = (1.0 - level) / 2.0 * 100.0;
  return {percentile(stats, tail), percentile(stats, 100.0 - tail)};
}

StatReport study_report(const TrialTable& table, int resamples, std::uint64_t seed) {
  StatReport r;
  const auto consensus = consensus_and_accuracy(table);
  r.mean_rater_accuracy = consensus.mean_accuracy;
  r.consensus_labels = consensus.consensus;
  r.ties = static_cast<std::size_t>(
      std::count(consensus.consensus.begin(), consensus.consensus.end(), std::nullopt));
  try {
    r.kappa = fleiss_kappa(table);
  } catch (const StatsError& e) {
    r.kappa_error = e.what();
  }
  const auto paired = paired_outcomes(table, consensus);
  if (!paired.b.empty()) r.consensus_accuracy = mean(paired.b);
  if (paired.b.size() >= 2) {
    r.t_test = paired_t_test(paired.b, paired.h);
    std::vector<double> d(paired.b.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = paired.b[i] - paired.h[i];
    r.ci = bootstrap_percentile_ci(d, [](std::span<const double> x) { return mean(x); },
                                   resamples, 0.95, seed);
  }
  return r;
}

nlohmann::json to_json(const StatReport& report, const TrialTable& table) {
  nlohmann::json trials = nlohmann::json::array();
  for (std::size_t i = 0; i < table.trials.size(); ++i) {
    const auto& c = report.consensus_labels[i];
    trials.push_back({{"clip_id", table.trials[i].clip_id},
                      {"target_index", table.trials[i].target_index},
                      {"consensus_index", c ? nlohmann::json(*c) : nlohmann::json(nullptr)},
                      {"tie", !c.has_value()}});
  }
  nlohmann::json j = {
      {"trials", static_cast<int>(table.trials.size())},
      {"raters", static_cast<int>(table.raters.size())},
      {"mean_rater_accuracy", report.mean_rater_accuracy},
      {"consensus_accuracy", report.consensus_accuracy},
      {"consensus_ties", report.ties},
      {"fleiss_kappa", report.kappa_error ? nlohmann::json(nullptr) : nlohmann::json(report.kappa.kappa)},
      {"kappa_items", report.kappa.items},
      {"kappa_excluded", report.kappa.excluded},
      {"t_stat", db_to_json(report.t_test.t)},
      {"p_value", report.t_test.p},
      {"df", report.t_test.df},
      {"degenerate", report.t_test.degenerate},
      {"ci_mean_difference", {report.ci.first, report.ci.second}},
      {"per_trial", std::move(trials)}};
  if (report.kappa_error) j["kappa_error"] = *report.kappa_error;
  return j;
}

}  // namespace sepforge::evalkit
