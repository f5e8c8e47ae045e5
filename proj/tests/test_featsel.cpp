#include <gtest/gtest.h>

#include "mmem/featsel.hpp"
#include "mmem/synthgen.hpp"

using namespace mmem;

namespace {

struct Prepared {
  FeatureTable table;
  std::vector<SurvivalOutcome> outcomes;
  std::vector<SubSplit> splits;
};

Prepared cohort(std::uint64_t seed, int n_noise) {
  LinearCohortSpec spec;
  spec.n_patients = 200;
  spec.beta = {1.0, 1.0};
  spec.n_noise = n_noise;
  spec.seed = seed;
  auto c = gen_linear_cox_cohort(spec);
  auto splits = make_sub_splits(c.outcomes, 10, 0.2, seed + 1);
  return {c.features, c.outcomes, splits};
}

}  // namespace

TEST(ForwardSelect, SinglePredictiveCandidate) {
  const auto p = cohort(1, 0);
  const std::vector<std::string> cands{"x1"};
  const auto [trace, model] = forward_select(p.table, p.outcomes, cands, p.splits);
  EXPECT_EQ(trace.optimal_set, cands);
  EXPECT_EQ(trace.stop_reason, StopReason::kNoImprovement);
  EXPECT_EQ(model.feature_names, cands);
}

TEST(ForwardSelect, BudgetOfOne) {
  const auto p = cohort(2, 3);
  const std::vector<std::string> cands{"x1", "x2", "x3"};
  ForwardSelectOptions opt;
  opt.max_features = 1;
  const auto [trace, model] = forward_select(p.table, p.outcomes, cands, p.splits, opt);
  EXPECT_EQ(trace.optimal_set.size(), 1u);
  EXPECT_EQ(trace.iterations.size(), 1u);
  EXPECT_EQ(trace.stop_reason, StopReason::kMaxFeatures);
}

TEST(ForwardSelect, AcceptedStepsStrictlyImprove) {
  const auto p = cohort(3, 10);
  const auto screen = univariate_screen(p.table, p.outcomes, p.splits);
  const auto [trace, model] = forward_select(p.table, p.outcomes, screen.ranked, p.splits);
  for (std::size_t i = 1; i < trace.iterations.size(); ++i) {
    EXPECT_GT(trace.iterations[i].mean_val_cindex, trace.iterations[i - 1].mean_val_cindex);
  }
  EXPECT_EQ(trace.best_val_cindex, trace.iterations.back().mean_val_cindex);
  EXPECT_LE(trace.optimal_set.size(), 20u);
}

TEST(ForwardSelect, CapHoldsWithManyStrongCandidates) {
  LinearCohortSpec spec;
  spec.n_patients = 400;
  spec.beta.assign(25, 0.6);
  spec.seed = 5;
  const auto c = gen_linear_cox_cohort(spec);
  const auto splits = make_sub_splits(c.outcomes, 10, 0.2, 6);
  const auto names = c.features.column_names();
  const auto [trace, model] = forward_select(c.features, c.outcomes, names, splits);
  EXPECT_LE(trace.optimal_set.size(), 20u);
}
