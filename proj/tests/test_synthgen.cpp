#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "mmem/coxph.hpp"
#include "mmem/cvharness.hpp"
#include "mmem/ensemble.hpp"
#include "mmem/error.hpp"
#include "mmem/metrics.hpp"
#include "mmem/run_config.hpp"
#include "mmem/synthgen.hpp"

using namespace mmem;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

SynthSpec three_modalities(std::uint64_t seed, double third_beta = 1.0) {
  SynthSpec s;
  s.n_patients = 300;
  s.seed = seed;
  s.lambda = 1.0 / 1095.75;
  s.modalities = {{"a", 1.0, 3}, {"b", 1.0, 3}, {"c", third_beta, 3}};
  return s;
}

std::vector<SurvivalOutcome> os_of(const SynthCohort& c) {
  std::vector<SurvivalOutcome> o;
  for (const auto& id : c.patient_ids) o.push_back(c.os.at(id));
  return o;
}

}  // namespace

TEST(LinearCohort, NullModelFitsNearZero) {
  LinearCohortSpec spec;
  spec.n_patients = 1000;
  spec.beta = {0.0};
  spec.seed = 3;
  const auto c = gen_linear_cox_cohort(spec);
  const auto m = fit_cox(c.features, c.outcomes);
  EXPECT_LT(std::abs(m.beta(0)), 0.15);
}

TEST(LinearCohort, VanishingCensoringWindowLeavesNoEvents) {
  LinearCohortSpec spec;
  spec.n_patients = 200;
  spec.c_max = 1e-9;
  spec.seed = 4;
  const auto c = gen_linear_cox_cohort(spec);
  EXPECT_EQ(count_events(c.outcomes), 0u);
  EXPECT_THROW(fit_cox(c.features, c.outcomes), PreconditionError);
}

TEST(LinearCohort, EventRateMatchesClosedForm) {
  LinearCohortSpec spec;
  spec.n_patients = 100000;
  spec.beta = {0.0};
  spec.seed = 5;
  const auto c = gen_linear_cox_cohort(spec);
  const double rc = spec.lambda * spec.c_max;
  const double analytic = 1.0 - (1.0 - std::exp(-rc)) / rc;
  const double empirical = static_cast<double>(count_events(c.outcomes)) / 100000.0;
  EXPECT_LT(std::abs(empirical - analytic), 0.02);
}

TEST(LinearCohort, SeedDeterminesBytes) {
  LinearCohortSpec spec;
  spec.seed = 9;
  spec.n_noise = 2;
  const auto a = gen_linear_cox_cohort(spec), b = gen_linear_cox_cohort(spec);
  EXPECT_EQ(a.features.values(), b.features.values());
  EXPECT_EQ(a.outcomes, b.outcomes);
  spec.seed = 10;
  EXPECT_NE(gen_linear_cox_cohort(spec).features.values(), a.features.values());
}

TEST(Bags, ZeroNoiseMeanEqualsPlanted) {
  BagSpec bs;
  bs.tile_noise = 0.0;
  const std::vector<std::string> ids{"a", "b", "c"};
  const std::vector<double> planted{-0.5, 0.25, 2.0};
  const auto bags = gen_bags(bs, ids, planted, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(static_cast<double>(bags[i].vectors.col(0).mean()), static_cast<double>(static_cast<float>(planted[i])));
  }
}

TEST(Bags, SizesWithinRange) {
  BagSpec bs;
  std::vector<std::string> ids;
  std::vector<double> planted;
  for (int i = 0; i < 200; ++i) {
    ids.push_back(std::to_string(i));
    planted.push_back(0.0);
  }
  for (const auto& b : gen_bags(bs, ids, planted, 2)) {
    EXPECT_GE(b.n_tiles(), 16);
    EXPECT_LE(b.n_tiles(), 64);
    EXPECT_EQ(b.dim(), 16);
  }
}

TEST(Multimodal, IdenticalSeedGivesIdenticalFiles) {
  auto spec = default_synth_spec();
  spec.n_patients = 40;
  spec.seed = 7;
  const auto root = std::filesystem::temp_directory_path() / "mmem_synth_bytes";
  std::filesystem::remove_all(root);
  const auto a = write_synth_cohort(root / "a", gen_multimodal_cohort(spec));
  const auto b = write_synth_cohort(root / "b", gen_multimodal_cohort(spec));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].filename(), b[i].filename());
    EXPECT_EQ(slurp(a[i]), slurp(b[i])) << a[i];
  }
  std::filesystem::remove_all(root);
}

TEST(Multimodal, SingleSignalsAreModerateAndTheirSumIsStronger) {
  const auto c = gen_multimodal_cohort(three_modalities(21));
  const auto o = os_of(c);
  double best_single = 0.0;
  for (Eigen::Index m = 0; m < 3; ++m) {
    std::vector<double> r(c.planted.col(m).data(), c.planted.col(m).data() + c.planted.rows());
    const double ci = concordance_index(r, o);
    EXPECT_GT(ci, 0.6) << m;
    EXPECT_LT(ci, 0.8) << m;
    best_single = std::max(best_single, ci);
  }
  std::vector<double> eta(c.eta.data(), c.eta.data() + c.eta.size());
  EXPECT_GT(concordance_index(eta, o), best_single);
}

TEST(Multimodal, PureNoiseModalityGetsSmallestWeight) {
  const auto c = gen_multimodal_cohort(three_modalities(22, 0.0));
  const auto aligned = align_modalities(c.modalities, c.os);
  CvConfig cfg;
  std::vector<std::string> names;
  std::vector<double> p;
  for (const auto& m : aligned.modalities) {
    const auto r = tabular_modality_fold(m.name, m.table(), aligned.outcomes, m.table(), cfg, 5);
    names.push_back(m.name);
    p.push_back(r.p_val);
  }
  const auto w = modality_weights(names, p);
  EXPECT_EQ(names[2], "c");
  EXPECT_LT(w.weights[2], w.weights[0]);
  EXPECT_LT(w.weights[2], w.weights[1]);
}

TEST(Multimodal, SingleModalityReducesToLinearCohort) {
  SynthSpec s;
  s.n_patients = 100;
  s.seed = 3;
  s.modalities = {{"only", 0.8, 2}};
  const auto c = gen_multimodal_cohort(s);
  ASSERT_EQ(c.modalities.size(), 1u);
  EXPECT_EQ(c.modalities[0].table().cols(), 3);
  EXPECT_LT((c.eta - 0.8 * c.modalities[0].table().values().col(0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Multimodal, ZeroPatientsIsAConfigError) {
  SynthSpec s;
  s.n_patients = 0;
  s.modalities = {{"a"}};
  EXPECT_THROW(gen_multimodal_cohort(s), ConfigError);
}
