#include <algorithm>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "mmem/cvharness.hpp"
#include "mmem/error.hpp"
#include "mmem/synthgen.hpp"

using namespace mmem;

namespace {

AlignedCohort small_cohort(std::size_t n, bool with_bags, std::uint64_t seed) {
  SynthSpec s;
  s.n_patients = n;
  s.seed = seed;
  s.lambda = 1.0 / 1095.75;
  s.modalities = {{"clin", 1.0, 3, 1, 0.05}, {"gen", 1.0, 3}};
  if (with_bags) {
    BagSpec b;
    b.dim = 8;
    b.min_tiles = 4;
    b.max_tiles = 12;
    s.bags = b;
  }
  const auto c = gen_multimodal_cohort(s);
  return align_modalities(c.modalities, c.os);
}

CvConfig light_config() {
  CvConfig c;
  c.deep.proj_dim = 8;
  c.deep.n_heads = 2;
  c.deep.epochs = 4;
  c.n_boot = 50;
  return c;
}

}  // namespace

TEST(KFold, SizesFollowRoundRobin) {
  const auto f = kfold(226, 5, 3);
  std::vector<std::size_t> sizes;
  for (int k = 0; k < 5; ++k) sizes.push_back(f.test_rows(k).size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{46, 45, 45, 45, 45}));
  const auto g = kfold(10, 5, 3);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(g.test_rows(k).size(), 2u);
}

TEST(KFold, DeterministicPartition) {
  const auto a = kfold(57, 5, 11), b = kfold(57, 5, 11);
  EXPECT_EQ(a.fold_of, b.fold_of);
  EXPECT_NE(a.fold_of, kfold(57, 5, 12).fold_of);
  std::vector<int> seen(57, 0);
  for (int k = 0; k < 5; ++k) {
    const auto test = a.test_rows(k);
    const auto train = a.train_rows(k);
    EXPECT_EQ(test.size() + train.size(), 57u);
    for (auto r : test) ++seen[r];
    std::vector<std::size_t> both;
    std::set_intersection(test.begin(), test.end(), train.begin(), train.end(), std::back_inserter(both));
    EXPECT_TRUE(both.empty());
  }
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
}

TEST(KFold, TooFewPatientsRaises) {
  EXPECT_THROW(kfold(4, 5, 0), PreconditionError);
  EXPECT_THROW(kfold(10, 1, 0), PreconditionError);
}

TEST(FoldSeed, DistinctPerTask) {
  std::set<std::uint64_t> s;
  for (auto e : {Endpoint::kOs, Endpoint::kDfs}) {
    for (int k = 0; k < 5; ++k) s.insert(fold_seed(1, e, k));
  }
  EXPECT_EQ(s.size(), 10u);
}

TEST(RunFold, StructureAndWeights) {
  const auto cohort = small_cohort(100, true, 1);
  const auto folds = kfold(cohort.size(), 5, 2);
  const auto cfg = light_config();
  const auto r = run_fold(cohort, Endpoint::kOs, folds, 0, cfg, 3);
  ASSERT_FALSE(r.failed) << r.failure;
  EXPECT_EQ(r.test_ids.size(), 20u);
  ASSERT_EQ(r.modalities.size(), 3u);
  for (const auto& m : r.modalities) EXPECT_EQ(m.test_risks.size(), 20u);
  EXPECT_TRUE(r.modalities[0].cox.has_value());
  EXPECT_TRUE(r.modalities[2].deep_best_epoch.has_value());
  double sum = 0.0;
  for (double w : r.weights.weights) {
    EXPECT_GE(w, 0.0);
    sum += w;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  ASSERT_EQ(r.fused.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    double f = 0.0, u = 0.0;
    for (std::size_t m = 0; m < 3; ++m) {
      f += r.weights.weights[m] * r.modalities[m].test_risks[i];
      u += r.modalities[m].test_risks[i];
    }
    EXPECT_NEAR(r.fused[i], f, 1e-12);
    EXPECT_NEAR(r.fused_uniform[i], u / 3.0, 1e-12);
  }
  const auto test_rows = folds.test_rows(0);
  for (std::size_t i = 0; i < test_rows.size(); ++i) EXPECT_EQ(r.test_ids[i], cohort.patient_ids[test_rows[i]]);
}

TEST(RunFold, TestOutcomesNeverInfluenceTheFold) {
  const auto cohort = small_cohort(100, false, 4);
  const auto folds = kfold(cohort.size(), 5, 5);
  const auto cfg = light_config();
  const auto a = run_fold(cohort, Endpoint::kOs, folds, 2, cfg, 6);
  AlignedCohort tampered = cohort;
  for (auto r : folds.test_rows(2)) {
    tampered.outcomes[r].time = 1.0 + static_cast<double>(r);
    tampered.outcomes[r].event = !tampered.outcomes[r].event;
  }
  const auto b = run_fold(tampered, Endpoint::kOs, folds, 2, cfg, 6);
  ASSERT_FALSE(a.failed || b.failed);
  EXPECT_EQ(a.fused, b.fused);
  EXPECT_EQ(a.weights.weights, b.weights.weights);
  for (std::size_t m = 0; m < a.modalities.size(); ++m) EXPECT_EQ(a.modalities[m].test_risks, b.modalities[m].test_risks);
}

TEST(RunFold, FailureIsRecorded) {
  auto cohort = small_cohort(40, false, 7);
  for (auto& o : cohort.outcomes) o.event = false;
  const auto r = run_fold(cohort, Endpoint::kOs, kfold(cohort.size(), 5, 1), 0, light_config(), 1);
  EXPECT_TRUE(r.failed);
  EXPECT_FALSE(r.failure.empty());
}

TEST(Aggregate, EveryPatientOnceAndDuplicatesRaise) {
  const auto cohort = small_cohort(100, false, 8);
  const auto folds = kfold(cohort.size(), 5, 9);
  const auto cfg = light_config();
  std::vector<FoldResult> results;
  for (int k = 0; k < 5; ++k) results.push_back(run_fold(cohort, Endpoint::kOs, folds, k, cfg, 10));
  const auto p = aggregate(results, cohort);
  EXPECT_EQ(p.patient_ids.size(), 100u);
  EXPECT_EQ(std::set<std::string>(p.patient_ids.begin(), p.patient_ids.end()).size(), 100u);
  EXPECT_EQ(p.model_names, (std::vector<std::string>{"clin", "gen", kFusedModel, kFusedUniformModel}));
  EXPECT_EQ(p.risks.rows(), 100);
  for (std::size_t i = 0; i < p.patient_ids.size(); ++i) {
    const auto it = std::find(cohort.patient_ids.begin(), cohort.patient_ids.end(), p.patient_ids[i]);
    EXPECT_EQ(p.outcomes[i], cohort.outcomes[static_cast<std::size_t>(it - cohort.patient_ids.begin())]);
    EXPECT_EQ(folds.fold_of[static_cast<std::size_t>(it - cohort.patient_ids.begin())], p.fold[i]);
  }

  auto dup = results;
  dup.push_back(results[0]);
  EXPECT_THROW(aggregate(dup, cohort), PreconditionError);
}

TEST(GlobalWeights, SharedAcrossFolds) {
  const auto cohort = small_cohort(100, false, 12);
  const auto folds = kfold(cohort.size(), 5, 1);
  std::vector<FoldResult> results;
  for (int k = 0; k < 5; ++k) results.push_back(run_fold(cohort, Endpoint::kOs, folds, k, light_config(), 2));
  apply_global_weights(results);
  for (const auto& r : results) EXPECT_EQ(r.weights.weights, results[0].weights.weights);
}

TEST(RunCv, JobsDoNotChangeResults) {
  const std::vector<std::pair<Endpoint, AlignedCohort>> cohorts{{Endpoint::kOs, small_cohort(60, false, 13)}};
  const auto cfg = light_config();
  const auto a = run_cv(cohorts, cfg, 4, 1);
  const auto b = run_cv(cohorts, cfg, 4, 3);
  ASSERT_EQ(a.folds.size(), 5u);
  ASSERT_FALSE(a.any_failed());
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(a.folds[k].fused, b.folds[k].fused);
  ASSERT_EQ(a.reports.size(), 1u);
  EXPECT_EQ(a.reports[0].models.size(), 4u);
  EXPECT_EQ(a.reports[0].models[2].cindex.point, b.reports[0].models[2].cindex.point);
}
