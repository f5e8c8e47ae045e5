#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mmem/error.hpp"
#include "mmem/preprocess.hpp"
#include "mmem/synthgen.hpp"
#include "oracles.hpp"

using namespace mmem;

namespace {

constexpr double kNa = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back("P" + std::to_string(i));
  return v;
}

// Numeric columns; NaN cells become missing.
FeatureTable table(const std::vector<std::string>& names, const std::vector<std::vector<double>>& cols) {
  const auto n = static_cast<Eigen::Index>(cols.front().size());
  Eigen::MatrixXd v(n, static_cast<Eigen::Index>(cols.size()));
  MissingMask m(n, static_cast<Eigen::Index>(cols.size()));
  std::vector<Column> cs;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    cs.push_back({names[c], ColumnKind::kNumeric, {}});
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = cols[c][static_cast<std::size_t>(i)];
      m(i, static_cast<Eigen::Index>(c)) = std::isnan(x);
      v(i, static_cast<Eigen::Index>(c)) = std::isnan(x) ? 0.0 : x;
    }
  }
  return FeatureTable(ids(static_cast<std::size_t>(n)), cs, v, m);
}

// One categorical column; empty strings are missing.
FeatureTable categorical(const std::string& name, const std::vector<std::string>& cells) {
  std::vector<std::string> levels;
  for (const auto& c : cells) {
    if (!c.empty() && std::find(levels.begin(), levels.end(), c) == levels.end()) levels.push_back(c);
  }
  std::sort(levels.begin(), levels.end());
  const auto n = static_cast<Eigen::Index>(cells.size());
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n, 1);
  MissingMask m = MissingMask::Constant(n, 1, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = cells[static_cast<std::size_t>(i)];
    if (c.empty()) {
      m(i, 0) = true;
    } else {
      v(i, 0) = static_cast<double>(std::find(levels.begin(), levels.end(), c) - levels.begin());
    }
  }
  return FeatureTable(ids(cells.size()), {{name, ColumnKind::kCategorical, levels}}, v, m);
}

std::vector<double> col(const FeatureTable& t, const std::string& name) {
  const auto c = *t.column_index(name);
  return {t.values().col(c).data(), t.values().col(c).data() + t.rows()};
}

}  // namespace

TEST(Missingness, StrictThreshold) {
  std::vector<double> three(10, 1.0), two(10, 1.0), none(10, 1.0);
  three[0] = three[1] = three[2] = kNa;
  two[0] = two[1] = kNa;
  std::vector<std::string> dropped;
  const auto t = drop_high_missingness(table({"a", "b", "c"}, {three, two, none}), 0.2, &dropped);
  EXPECT_EQ(t.column_names(), (std::vector<std::string>{"b", "c"}));
  EXPECT_EQ(dropped, (std::vector<std::string>{"a"}));
}

TEST(Impute, MedianAndMode) {
  auto t = impute_missing(table({"x"}, {{1, 2, kNa, 4}}));
  EXPECT_EQ(col(t, "x"), (std::vector<double>{1, 2, 2, 4}));
  t = impute_missing(table({"x"}, {{1, kNa, 3, 4}}));
  EXPECT_EQ(col(t, "x")[1], 3.0);
  t = impute_missing(table({"x"}, {{1, kNa, 3, 4, 2}}));
  EXPECT_EQ(col(t, "x")[1], 2.0);  // lower middle of {1,2,3,4}
  EXPECT_FALSE(t.missing().any());

  std::vector<ImputedValue> rec;
  t = impute_missing(categorical("side", {"a", "a", "b", ""}), &rec);
  EXPECT_EQ(t.category(3, 0), "a");
  ASSERT_EQ(rec.size(), 1u);
  EXPECT_EQ(std::get<std::string>(rec[0].value), "a");
}

TEST(OneHot, Encoding) {
  std::vector<OneHotEncoding> rec;
  auto t = encode_one_hot(categorical("side", {"L", "R", "L"}), &rec);
  EXPECT_EQ(t.column_names(), (std::vector<std::string>{"side=L", "side=R"}));
  EXPECT_EQ(col(t, "side=L"), (std::vector<double>{1, 0, 1}));
  EXPECT_EQ(col(t, "side=R"), (std::vector<double>{0, 1, 0}));
  EXPECT_EQ(t.column(0).kind, ColumnKind::kIndicator);

  t = encode_one_hot(categorical("k", {"x", "x"}));
  EXPECT_EQ(t.cols(), 1);

  const auto num = table({"a"}, {{1, 2}});
  EXPECT_EQ(encode_one_hot(num).values(), num.values());
}

TEST(Zscore, FitAndApply) {
  auto [t, stats] = zscore(table({"x", "k"}, {{1, 2, 3}, {5, 5, 5}}));
  EXPECT_EQ(col(t, "x"), (std::vector<double>{-1, 0, 1}));
  EXPECT_FALSE(t.column_index("k").has_value());
  EXPECT_EQ(stats.dropped, (std::vector<std::string>{"k"}));

  ZscoreStats s;
  s.entries.push_back({"x", 2.0, 1.0, true});
  const auto applied = zscore(table({"x"}, {{4}}), &s).first;
  EXPECT_EQ(col(applied, "x")[0], 2.0);
}

TEST(Spearman, Examples) {
  EXPECT_DOUBLE_EQ(spearman_rho(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}).rho, 1.0);
  EXPECT_DOUBLE_EQ(spearman_rho(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}).rho, -1.0);
  EXPECT_DOUBLE_EQ(spearman_rho(std::vector<double>{1, 2, 3}, std::vector<double>{3, 1, 2}).rho, -0.5);
  EXPECT_FALSE(spearman_rho(std::vector<double>{1, 1, 1}, std::vector<double>{3, 1, 2}).defined);
}

TEST(Spearman, MatchesAverageRankOracle) {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 3 + static_cast<int>(rng() % 30);
    std::vector<double> x, y;
    for (int i = 0; i < n; ++i) {
      x.push_back(static_cast<double>(rng() % 7));
      y.push_back(static_cast<double>(rng() % 7));
    }
    const auto r = spearman_rho(x, y);
    if (!r.defined) continue;
    EXPECT_NEAR(r.rho, oracle::spearman(x, y), 1e-12);
  }
}

TEST(Prune, IdenticalAndNegatedColumns) {
  auto [t, pairs] = prune_correlated(table({"a", "b", "c"}, {{1, 2, 3, 4}, {1, 2, 3, 4}, {-1, -2, -3, -4}}));
  EXPECT_EQ(t.column_names(), (std::vector<std::string>{"a"}));
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].dropped, "b");
  EXPECT_EQ(pairs[0].rho, 1.0);
  EXPECT_EQ(pairs[1].dropped, "c");
  EXPECT_EQ(pairs[1].rho, -1.0);
}

TEST(Prune, GreedyScanAgainstPairwiseOracle) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  int chains_seen = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 30;
    std::vector<std::vector<double>> cols(5, std::vector<double>(n));
    for (int i = 0; i < n; ++i) {
      cols[0][i] = z(rng);
      cols[1][i] = cols[0][i] + 0.3 * z(rng);  // close to c0
      cols[2][i] = cols[1][i] + 0.5 * z(rng);  // close to c1, looser to c0
      cols[3][i] = z(rng);
      cols[4][i] = cols[3][i] * (rep % 2 ? 1 : -1) + 0.2 * z(rng);
    }
    std::vector<std::string> names{"c0", "c1", "c2", "c3", "c4"};
    // Oracle: greedy scan with exhaustive pairwise rho against the kept set.
    std::vector<int> kept;
    for (int c = 0; c < 5; ++c) {
      bool drop = false;
      for (int k : kept) drop = drop || std::abs(oracle::spearman(cols[k], cols[c])) > 0.8;
      if (!drop) kept.push_back(c);
    }
    std::vector<std::string> expected;
    for (int k : kept) expected.push_back(names[k]);
    const bool c2_chain = std::find(kept.begin(), kept.end(), 1) == kept.end() &&
                          std::find(kept.begin(), kept.end(), 2) != kept.end();
    chains_seen += c2_chain;
    EXPECT_EQ(prune_correlated(table(names, cols)).first.column_names(), expected);
  }
  // At least one draw exercised "correlated only with a dropped column".
  EXPECT_GT(chains_seen, 0);
}

TEST(SubSplits, RetriesGuaranteeEventsAndComparablePairs) {
  LinearCohortSpec spec;
  spec.n_patients = 40;
  spec.seed = 3;
  const auto c = gen_linear_cox_cohort(spec);
  const auto splits = make_sub_splits(c.outcomes, 10, 0.2, 5);
  ASSERT_EQ(splits.size(), 10u);
  for (const auto& s : splits) {
    EXPECT_EQ(s.validation.size(), 8u);
    EXPECT_EQ(s.train.size() + s.validation.size(), 40u);
    int ev = 0;
    for (auto i : s.train) ev += c.outcomes[i].event;
    EXPECT_GE(ev, 2);
  }
  const auto again = make_sub_splits(c.outcomes, 10, 0.2, 5);
  EXPECT_EQ(again[3].validation, splits[3].validation);
}

TEST(Screen, PlantedNoiseAndAntiPredictiveColumns) {
  const std::size_t n = 200;
  std::mt19937_64 rng(15);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(n), noise(n), anti(n);
  std::vector<SurvivalOutcome> o;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = z(rng);
    anti[i] = z(rng);
    noise[i] = z(rng);
    const double t = draw_event_time(0.001, 2.0 * x[i] - 2.0 * anti[i], u(rng));
    const double c = u(rng) * 2000.0;
    o.push_back({std::min(t, c), t <= c});
  }
  const auto t = table({"x", "noise", "anti"}, {x, noise, anti});
  const auto splits = make_sub_splits(o, 10, 0.2, 1);
  const auto r = univariate_screen(t, o, splits);
  ASSERT_EQ(r.scores.size(), 3u);
  EXPECT_GT(*r.scores[0].mean_cindex, 0.6);
  EXPECT_NEAR(*r.scores[1].mean_cindex, 0.5, 0.1);
  EXPECT_GT(*r.scores[2].mean_cindex, 0.5);
  EXPECT_NE(std::find(r.ranked.begin(), r.ranked.end(), "x"), r.ranked.end());
  EXPECT_NE(std::find(r.ranked.begin(), r.ranked.end(), "anti"), r.ranked.end());
}

TEST(Pipeline, ReplayOnHeldOutRowsUsesTrainingStatistics) {
  LinearCohortSpec spec;
  spec.n_patients = 120;
  spec.beta = {1.0, 0.5};
  spec.n_noise = 2;
  spec.seed = 12;
  const auto c = gen_linear_cox_cohort(spec);
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t i = 0; i < 120; ++i) (i % 4 == 0 ? test_rows : train_rows).push_back(i);
  const auto train = c.features.select_rows(train_rows);
  const auto test = c.features.select_rows(test_rows);
  std::vector<SurvivalOutcome> o;
  for (auto i : train_rows) o.push_back(c.outcomes[i]);
  const auto res = fit_preprocess(train, o, PreprocessConfig{}, 2);
  for (const auto& e : res.report.zscore.entries) {
    const auto v = col(train, e.column);
    double mean = 0.0;
    for (double d : v) mean += d;
    mean /= static_cast<double>(v.size());
    EXPECT_NEAR(e.mean, mean, 1e-12);
  }
  const auto replayed = apply_preprocess(res.report, test);
  EXPECT_EQ(replayed.column_names(), res.table.column_names());
  EXPECT_EQ(replayed.rows(), static_cast<Eigen::Index>(test_rows.size()));
  // Replaying on the training rows reproduces the fitted table.
  EXPECT_TRUE(apply_preprocess(res.report, train).values().isApprox(res.table.values(), 1e-14));
}
