#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmem/datamodel.hpp"
#include "mmem/deepcox.hpp"
#include "mmem/ensemble.hpp"
#include "mmem/featsel.hpp"
#include "mmem/metrics.hpp"
#include "mmem/preprocess.hpp"

namespace mmem {

struct FoldAssignment {
  int n_folds = 5;
  std::uint64_t seed = 0;
  std::vector<int> fold_of;  // per row of the cohort

  std::vector<std::size_t> test_rows(int fold) const;
  std::vector<std::size_t> train_rows(int fold) const;
};

// Seeded shuffle, then round-robin assignment.
FoldAssignment kfold(std::size_t n_patients, int n_folds, std::uint64_t seed);

struct CvConfig {
  int n_folds = 5;
  PreprocessConfig preprocess;
  ForwardSelectOptions select;
  DeepCoxConfig deep;
  // Share of each fold's training rows held out to validate the deep model.
  double deep_val_fraction = 0.2;
  // Average per-fold validation metrics before weighting (non-default).
  bool global_weights = false;
  int n_boot = 1000;
  std::vector<double> horizons_years{1.0, 3.0, 5.0};
};

struct ModalityFoldResult {
  std::string modality;
  std::vector<double> test_risks;
  double p_val = 0.0;
  // Tabular modalities.
  std::optional<PreprocessReport> preprocess;
  std::optional<SelectionTrace> selection;
  std::optional<CoxModel> cox;
  // Bag modalities.
  std::optional<int> deep_best_epoch;
  std::optional<double> deep_best_val_loss;
};

struct FoldResult {
  Endpoint endpoint = Endpoint::kOs;
  int fold = 0;
  std::vector<std::string> test_ids;
  std::vector<ModalityFoldResult> modalities;
  ModalityWeights weights;
  std::vector<double> fused;
  std::vector<double> fused_uniform;
  bool failed = false;
  std::string failure;
};

// Tabular modality on one fold: preprocess, screen and select on the
// training rows, then score the test rows. Test outcomes are never seen.
ModalityFoldResult tabular_modality_fold(const std::string& name, const FeatureTable& train,
                                         std::span<const SurvivalOutcome> train_outcomes,
                                         const FeatureTable& test, const CvConfig& config,
                                         std::uint64_t seed,
                                         const ZscoreStats* zscore_override = nullptr);

ModalityFoldResult bag_modality_fold(const std::string& name, std::span<const EmbeddingBag> train,
                                     std::span<const SurvivalOutcome> train_outcomes,
                                     std::span<const EmbeddingBag> test, const CvConfig& config,
                                     std::uint64_t seed);

// Fills weights and fused scores from the per-modality results.
void fuse_fold(FoldResult& fold);

std::uint64_t fold_seed(std::uint64_t master, Endpoint endpoint, int fold);

// Failures of individual modalities are caught and recorded on the result.
FoldResult run_fold(const AlignedCohort& cohort, Endpoint endpoint, const FoldAssignment& folds, int fold,
                    const CvConfig& config, std::uint64_t master_seed);

inline constexpr const char* kFusedModel = "MMEM";
inline constexpr const char* kFusedUniformModel = "MMEM (uniform)";

struct PooledPredictions {
  Endpoint endpoint = Endpoint::kOs;
  std::vector<std::string> patient_ids;
  std::vector<SurvivalOutcome> outcomes;
  std::vector<int> fold;
  std::vector<std::string> model_names;  // modalities, then the two fusions
  Eigen::MatrixXd risks;                 // patient x model
};

// Concatenates test predictions; every patient must appear exactly once.
PooledPredictions aggregate(std::span<const FoldResult> folds, const AlignedCohort& cohort);

// Replaces per-fold weights with weights from fold-averaged validation
// metrics and recomputes the fused scores.
void apply_global_weights(std::span<FoldResult> folds);

struct HorizonMetrics {
  double years = 0.0;
  int n_positive = 0;
  int n_negative = 0;
  int n_excluded = 0;
  std::optional<DeLongResult> auc;          // nullopt if a class is empty
  std::optional<DeLongResult> vs_fused;     // paired DeLong test against MMEM
  std::vector<RocPoint> roc;
};

struct ModelMetrics {
  std::string model;
  BootstrapResult cindex;
  std::optional<LogRankResult> logrank;  // nullopt if a risk group is empty
  KMCurve km_low;
  KMCurve km_high;
  std::vector<HorizonMetrics> horizons;
  std::optional<TTestResult> vs_fused;   // bootstrapped C-index against MMEM
};

struct EndpointReport {
  Endpoint endpoint = Endpoint::kOs;
  std::size_t n_patients = 0;
  std::vector<ModelMetrics> models;
};

EndpointReport evaluate_predictions(const PooledPredictions& pooled, const CvConfig& config,
                                    std::uint64_t master_seed);

struct CvRun {
  std::vector<std::pair<Endpoint, FoldAssignment>> assignments;
  std::vector<FoldResult> folds;  // endpoint-major, fold-minor
  std::vector<PooledPredictions> pooled;
  std::vector<EndpointReport> reports;

  bool any_failed() const;
};

// Folds of all endpoints run as independent tasks on up to `jobs` threads;
// every task is single-threaded and seeded from (master seed, endpoint,
// fold), so the result does not depend on `jobs`. Aggregation and
// evaluation are skipped for an endpoint with a failed fold.
CvRun run_cv(std::span<const std::pair<Endpoint, AlignedCohort>> cohorts, const CvConfig& config,
             std::uint64_t master_seed, int jobs = 1);

}  // namespace mmem
