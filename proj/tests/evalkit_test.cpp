// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "sepforge/evalkit/dataset_stats.hpp"
#include "sepforge/evalkit/metrics.hpp"
#include "sepforge/evalkit/stats.hpp"
#include "sepforge/random.hpp"

namespace sepforge::evalkit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Textbook Fleiss' kappa written out term by term.
double brute_kappa(const std::vector<std::vector<int>>& t, int n) {
  const double items = static_cast<double>(t.size());
  const std::size_t k = t[0].size();
  double pbar = 0.0;
  for (const auto& row : t) {
    double agree = 0.0;
    for (int c : row) agree += static_cast<double>(c) * (c - 1);
    pbar += agree / (static_cast<double>(n) * (n - 1));
  }
  pbar /= items;
  double pe = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double col = 0.0;
    for (const auto& row : t) col += row[j];
    const double p = col / (items * n);
    pe += p * p;
  }
  return (pbar - pe) / (1.0 - pe);
}

// Two-sided Student t tail probabilities from a high-precision reference.
struct TRow {
  double df;
  double t;
  double p;
};
constexpr TRow kTTable[] = {
    {5, 1.0, 0.36321746764912255},    {5, 2.0, 0.10193947882985828},
    {5, 2.093, 0.09055426332661418},  {5, 3.0, 0.03009924789746257},
    {19, 1.0, 0.32987680092112504},   {19, 2.0, 0.060002036386098336},
    {19, 2.093, 0.050002378942827976}, {19, 3.0, 0.007361724183868639},
    {30, 1.0, 0.32530861542602985},   {30, 2.0, 0.0546250449629831},
    {30, 2.093, 0.04490784122954678}, {30, 3.0, 0.005389964065651944},
};

TEST(Metrics, HandComputedCases) {
  const std::vector<double> s{1.0, 0.0};
  EXPECT_EQ(si_sdr(std::vector<double>{1.0, 1.0}, s), 0.0);
  EXPECT_EQ(si_sdr(std::vector<double>{2.0, 0.0}, s), kInf);
  EXPECT_EQ(si_sdr(std::vector<double>{0.0, 3.0}, s), -kInf);

  const std::vector<double> ref{3.0, -1.0, 2.0, 0.5};
  EXPECT_EQ(sdr(ref, ref), kInf);
  EXPECT_EQ(sdr(std::vector<double>(4, 0.0), ref), 0.0);
  // Error with a tenth of the reference energy: ||s||^2 = 14.25.
  std::vector<double> est = ref;
  est[0] -= std::sqrt(1.425);
  EXPECT_NEAR(sdr(est, ref), 10.0, 1e-12);
}

TEST(Metrics, Errors) {
  EXPECT_THROW(si_sdr(std::vector<double>{1.0}, std::vector<double>{0.0}), MetricError);
  EXPECT_THROW(sdr(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), MetricError);
  EXPECT_THROW(sdr(std::vector<double>{}, std::vector<double>{}), MetricError);
}

TEST(Metrics, ScaleInvarianceProperty) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(256), e(256);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = rng.normal();
      e[i] = s[i] + rng.uniform(0.05, 2.0) * rng.normal();
    }
    const double base = si_sdr(e, s);
    for (double a : {0.1, 1.0, 10.0}) {
      std::vector<double> scaled = e;
      for (double& v : scaled) v *= a;
      ASSERT_NEAR(si_sdr(scaled, s), base, 1e-6);
    }
  }
}

TEST(Metrics, AgreeWhenOptimallyScaled) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(128), noise(128);
    for (auto& v : s) v = rng.normal();
    for (auto& v : noise) v = 0.3 * rng.normal();
    // Remove the component of the noise along s so alpha = 1.
    double dot = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      dot += noise[i] * s[i];
      ss += s[i] * s[i];
    }
    std::vector<double> est(128);
    for (std::size_t i = 0; i < s.size(); ++i) est[i] = s[i] + noise[i] - dot / ss * s[i];
    EXPECT_NEAR(si_sdr(est, s), sdr(est, s), 1e-9);
  }
}

TEST(Metrics, BatchAndJson) {
  std::vector<MetricPair> pairs;
  for (int i = 0; i < 9; ++i) {
    pairs.push_back({"p" + std::to_string(i), {1.0, 0.1 * i}, {1.0, 0.0}});
  }
  const auto one = evaluate_pairs(pairs, 1);
  const auto many = evaluate_pairs(pairs, 4);
  EXPECT_EQ(to_jsonl(one), to_jsonl(many));
  EXPECT_EQ(one[0].sdr_db, kInf);
  const auto line = nlohmann::json::parse(to_jsonl(one).substr(0, to_jsonl(one).find('\n')));
  EXPECT_EQ(line["pair_id"], "p0");
  EXPECT_EQ(line["sdr_db"], "inf");
  EXPECT_EQ(db_from_json(db_to_json(-kInf)), -kInf);
  EXPECT_TRUE(std::isnan(db_from_json(db_to_json(std::nan("")))));
  EXPECT_EQ(db_from_json(db_to_json(3.5)), 3.5);
}

TEST(Kappa, UnanimousAndSplitTables) {
  std::vector<std::vector<int>> unanimous;
  for (int i = 0; i < 20; ++i) {
    std::vector<int> row(4, 0);
    row[static_cast<std::size_t>(i % 4)] = 6;
    unanimous.push_back(row);
  }
  EXPECT_EQ(fleiss_kappa(unanimous, 6), 1.0);
  EXPECT_EQ(fleiss_kappa({{1, 1}, {1, 1}}, 2), -1.0);
}

TEST(Kappa, ErrorKinds) {
  auto kind = [](const std::vector<std::vector<int>>& t, int n) {
    try {
      fleiss_kappa(t, n);
    } catch (const StatsError& e) {
      return e.kind();
    }
    return StatsError::Kind::kInput;
  };
  EXPECT_EQ(kind({{3, 0}, {3, 0}}, 3), StatsError::Kind::kDegenerate);
  EXPECT_EQ(kind({{2, 1}, {1, 1}}, 3), StatsError::Kind::kRagged);
  EXPECT_EQ(kind({{1, 0}, {0, 1, 0}}, 1), StatsError::Kind::kTooFewRaters);
}

TEST(Kappa, MatchesBruteForceProperty) {
  Rng rng(4);
  int checked = 0;
  while (checked < 50) {
    const int n = 2 + static_cast<int>(rng.uniform_index(8));
    const std::size_t items = 2 + rng.uniform_index(15);
    const std::size_t k = 2 + rng.uniform_index(4);
    std::vector<std::vector<int>> t(items, std::vector<int>(k, 0));
    for (auto& row : t) {
      for (int r = 0; r < n; ++r) ++row[rng.uniform_index(k)];
    }
    const double ref = brute_kappa(t, n);
    if (!std::isfinite(ref)) continue;
    ASSERT_NEAR(fleiss_kappa(t, n), ref, 1e-12);
    ASSERT_LE(fleiss_kappa(t, n), 1.0);
    ++checked;
  }
}

TrialTable make_table(const std::vector<std::vector<int>>& choices, const std::vector<int>& targets) {
  TrialTable t;
  for (std::size_t r = 0; r < choices[0].size(); ++r) t.raters.push_back("r" + std::to_string(r));
  for (std::size_t i = 0; i < choices.size(); ++i) {
    Trial trial;
    trial.clip_id = "c" + std::to_string(i);
    trial.candidates = {"a", "b", "c", "d"};
    trial.target_index = targets[i];
    for (std::size_t r = 0; r < choices[i].size(); ++r) {
      if (choices[i][r] >= 0) trial.responses[t.raters[r]] = choices[i][r];
    }
    t.trials.push_back(trial);
  }
  return t;
}

TEST(Consensus, AllCorrect) {
  const auto t = make_table({{1, 1, 1}, {2, 2, 2}}, {1, 2});
  const auto r = consensus_and_accuracy(t);
  EXPECT_EQ(r.mean_accuracy, 1.0);
  EXPECT_EQ(r.h, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(r.consensus[0], 1);
}

TEST(Consensus, TiesAreFlaggedAndExcluded) {
  const auto t = make_table({{0, 1}, {0, 0}}, {0, 0});
  const auto r = consensus_and_accuracy(t);
  EXPECT_FALSE(r.consensus[0]);
  EXPECT_EQ(r.consensus[1], 0);
  const auto paired = paired_outcomes(t, r);
  EXPECT_EQ(paired.clip_ids, std::vector<std::string>{"c1"});
  EXPECT_EQ(r.rater_accuracy.at("r0"), 1.0);
  EXPECT_EQ(r.rater_accuracy.at("r1"), 0.5);
  EXPECT_EQ(r.mean_accuracy, 0.75);
}

// 38 recruited raters, 37 answered: 18 chose the target, 17 another option.
TEST(Consensus, PerTrialResponderCounts) {
  std::vector<int> row;
  row.insert(row.end(), 18, 2);
  row.insert(row.end(), 17, 0);
  row.insert(row.end(), 2, 1);
  row.push_back(-1);
  std::vector<int> full(38, 1);
  std::fill(full.begin(), full.begin() + 18, 3);
  const auto t = make_table({row, full}, {2, 1});
  const auto r = consensus_and_accuracy(t);
  EXPECT_EQ(r.consensus[0], 2);
  EXPECT_EQ(r.responders[0], 37);
  EXPECT_NEAR(r.h[0], 18.0 / 37.0, 1e-15);
  EXPECT_NEAR(100.0 * r.h[0], 48.65, 0.005);
  const auto k = fleiss_kappa(t);
  EXPECT_EQ(k.excluded, std::vector<std::string>{"c0"});
  EXPECT_EQ(k.items, 1u);
  EXPECT_EQ(k.raters, 38);
}

TEST(TTest, MatchesReferenceTable) {
  for (const auto& row : kTTable) {
    EXPECT_NEAR(student_t_two_sided_p(row.t, row.df), row.p, 1e-10) << row.df << " " << row.t;
  }
  EXPECT_NEAR(student_t_two_sided_p(2.093, 19), 0.050, 1e-3);
  EXPECT_EQ(student_t_two_sided_p(0.0, 7), 1.0);
}

TEST(TTest, HandExampleAndDegenerateCases) {
  const std::vector<double> b{1, 1, 0, 1};
  const std::vector<double> h{0.5, 0.5, 0.5, 0.5};
  const auto r = paired_t_test(b, h);
  EXPECT_NEAR(r.t, 1.0, 1e-12);
  EXPECT_EQ(r.df, 3);
  EXPECT_NEAR(r.p, student_t_two_sided_p(1.0, 3), 1e-15);

  const std::vector<double> same{0.5, 0.5, 0.5};
  const auto zero = paired_t_test(same, same);
  EXPECT_TRUE(zero.degenerate);
  EXPECT_EQ(zero.p, 1.0);
  const std::vector<double> ones{1, 1, 1};
  const auto shifted = paired_t_test(ones, same);
  EXPECT_TRUE(shifted.degenerate);
  EXPECT_EQ(shifted.p, 0.0);
  EXPECT_THROW(paired_t_test(std::vector<double>{1}, std::vector<double>{0}), StatsError);
}

TEST(Bootstrap, ConstantAndBalancedSamples) {
  const std::vector<double> c(30, 0.7);
  const auto ci = bootstrap_percentile_ci(c, mean, 1000, 0.95, 3);
  EXPECT_EQ(ci.first, ci.second);
  EXPECT_DOUBLE_EQ(ci.first, 0.7);

  std::vector<double> bal(100);
  for (std::size_t i = 0; i < bal.size(); ++i) bal[i] = static_cast<double>(i % 2);
  const auto b = bootstrap_percentile_ci(bal, mean, 10000, 0.95, 1);
  EXPECT_LT(b.first, 0.5);
  EXPECT_GT(b.second, 0.5);
  // Binomial(100, 0.5) 2.5% and 97.5% quantiles are 40 and 60.
  EXPECT_NEAR(b.first, 0.40, 0.015);
  EXPECT_NEAR(b.second, 0.60, 0.015);
  EXPECT_EQ(bootstrap_percentile_ci(bal, mean, 10000, 0.95, 1), b);
  EXPECT_THROW(bootstrap_percentile_ci(std::vector<double>{}, mean), StatsError);
}

TEST(Bootstrap, PercentileType7) {
  EXPECT_EQ(percentile({4, 1, 3, 2}, 50.0), 2.5);
  EXPECT_EQ(percentile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_EQ(percentile({4, 1, 3, 2}, 100.0), 4.0);
  EXPECT_NEAR(percentile({1, 2, 3, 4, 5}, 90.0), 4.6, 1e-12);
  EXPECT_THROW(percentile({1.0}, 101.0), StatsError);
}

TEST(Bootstrap, CoverageNearNominal) {
  Rng rng(77);
  int covered = 0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> x(400);
    for (auto& v : x) v = 2.0 + rng.normal();
    const auto ci = bootstrap_percentile_ci(x, mean, 2000, 0.95, static_cast<std::uint64_t>(t));
    covered += ci.first <= 2.0 && 2.0 <= ci.second;
  }
  EXPECT_NEAR(static_cast<double>(covered) / trials, 0.95, 0.02);
}

TEST(Trials, CsvParsing) {
  const std::string header = "clip_id,target_index,candidate0,candidate1,candidate2,candidate3,rater,choice\n";
  const auto t = parse_trials_csv(header +
                                  "c1,0,Dog,Cat,\"Wind instrument, woodwind\",Car,ann,0\n"
                                  "c1,0,Dog,Cat,\"Wind instrument, woodwind\",Car,bob,2\n"
                                  "c2,3,a,b,c,d,bob,3\n");
  ASSERT_EQ(t.trials.size(), 2u);
  EXPECT_EQ(t.trials[0].candidates[2], "Wind instrument, woodwind");
  EXPECT_EQ(t.raters, (std::vector<std::string>{"ann", "bob"}));
  EXPECT_EQ(t.trials[1].responses.size(), 1u);

  EXPECT_THROW(parse_trials_csv("clip,target\n"), StatsError);
  EXPECT_THROW(parse_trials_csv(header + "c1,4,a,b,c,d,r,0\n"), StatsError);
  EXPECT_THROW(parse_trials_csv(header + "c1,0,a,b,c,d,r,5\n"), StatsError);
  EXPECT_THROW(parse_trials_csv(header + "c1,0,a,b,c,d,r,0\nc1,1,a,b,c,d,s,0\n"), StatsError);
  EXPECT_THROW(parse_trials_csv(header + "c1,0,a,b,c,d,r,0\nc1,0,a,b,c,d,r,1\n"), StatsError);
}

TEST(Study, ReportInvariants) {
  Rng rng(8);
  std::vector<std::vector<int>> choices(20, std::vector<int>(7));
  std::vector<int> targets(20);
  for (std::size_t i = 0; i < 20; ++i) {
    targets[i] = static_cast<int>(rng.uniform_index(4));
    for (auto& c : choices[i]) {
      c = rng.uniform01() < 0.75 ? targets[i] : static_cast<int>(rng.uniform_index(4));
    }
  }
  const auto table = make_table(choices, targets);
  const auto r = study_report(table, 2000, 5);
  EXPECT_GE(r.t_test.p, 0.0);
  EXPECT_LE(r.t_test.p, 1.0);
  EXPECT_LE(r.kappa.kappa, 1.0);
  EXPECT_LE(r.ci.first, r.ci.second);
  EXPECT_EQ(to_json(r, table).dump(), to_json(study_report(table, 2000, 5), table).dump());
}

std::string manifest_line(std::vector<std::string> labels, const std::string& split) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& l : labels) comps.push_back({{"label", l}});
  return nlohmann::json{{"split", split}, {"components", comps}}.dump() + "\n";
}

TEST(DatasetStats, HistogramAndLabelCounts) {
  const std::vector<ManifestText> m{
      {"a", manifest_line({"dog", "cat"}, "train") + manifest_line({"dog", "car", "rain"}, "train")},
      {"b", manifest_line({"dog", "cat", "car", "rain", "bird"}, "test") + "not json\n" +
                manifest_line({"x1", "x2", "x3", "x4", "x5"}, "test")}};
  const auto s = dataset_statistics(m);
  EXPECT_EQ(s.mixtures, 4u);
  EXPECT_EQ(s.source_counts, (std::map<int, std::size_t>{{2, 1}, {3, 1}, {5, 2}}));
  EXPECT_EQ(s.label_counts.at("dog"), 3u);
  EXPECT_EQ(s.split_counts.at("test"), 2u);
  ASSERT_EQ(s.malformed.size(), 1u);
  EXPECT_EQ(s.malformed[0].source, "b");
  EXPECT_EQ(s.malformed[0].line, 2u);
  const auto csv = label_counts_csv(s);
  EXPECT_EQ(csv.substr(0, csv.find('\n', csv.find('\n') + 1)), "label,count,proportion\ndog,3,0.750000");
  const auto j = to_json(s, 2);
  EXPECT_EQ(j["source_count_histogram"]["5"]["count"], 2);
  EXPECT_EQ(j["top_k"].size(), 2u);
  EXPECT_EQ(j["malformed_lines"].size(), 1u);
}

TEST(DatasetStats, EmptyInput) {
  const auto s = dataset_statistics({});
  EXPECT_EQ(s.mixtures, 0u);
  EXPECT_EQ(label_counts_csv(s), "label,count,proportion\n");
  EXPECT_EQ(to_json(s)["top_k"].size(), 0u);
}

}  // namespace
}  // namespace sepforge::evalkit
