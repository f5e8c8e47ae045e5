#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mmem/coxph.hpp"
#include "mmem/datamodel.hpp"

namespace mmem {

struct PreprocessConfig {
  double missing_threshold = 0.20;
  double correlation_cutoff = 0.8;
  int n_splits = 10;
  double val_fraction = 0.2;
  int max_split_retries = 100;
  CoxFitOptions cox;
};

struct ImputedValue {
  std::string column;
  std::variant<double, std::string> value;  // median or modal category
};

struct OneHotEncoding {
  std::string column;
  std::vector<std::string> levels;  // output column i is "column=levels[i]"
};

struct ZscoreEntry {
  std::string column;
  double mean = 0.0;
  double sd = 1.0;
  bool scaled = true;  // false for one-hot indicators, which pass through
};

struct ZscoreStats {
  std::vector<ZscoreEntry> entries;  // output columns, in order
  std::vector<std::string> dropped;  // zero variance
};

struct PrunedPair {
  std::string kept;
  std::string dropped;
  double rho = 0.0;
};

struct ScreenScore {
  std::string column;
  std::optional<double> mean_cindex;  // nullopt when a fit failed
};

// One random sub-training / sub-validation partition of a training cohort.
struct SubSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

// Everything needed to replay the unsupervised stages on held-out rows.
struct PreprocessReport {
  std::vector<std::string> input_columns;
  std::vector<std::string> dropped_missingness;
  std::vector<ImputedValue> imputed_values;
  std::vector<OneHotEncoding> encoding_map;
  ZscoreStats zscore;
  std::vector<PrunedPair> pruned_correlated;
  std::vector<ScreenScore> screened;
  std::vector<std::string> ranked;  // kept by screening, best first
};

// Columns missing in strictly more than `threshold` of rows are removed.
FeatureTable drop_high_missingness(const FeatureTable& t, double threshold = 0.20,
                                   std::vector<std::string>* dropped = nullptr);

// Median (lower middle for even counts) for numeric columns, mode for
// categorical columns (ties: smallest level).
FeatureTable impute_missing(const FeatureTable& t, std::vector<ImputedValue>* record = nullptr);

FeatureTable encode_one_hot(const FeatureTable& t, std::vector<OneHotEncoding>* record = nullptr);

// With `stats` the supplied statistics are applied and nothing is
// recomputed; without, they are estimated (sample sd) and returned.
std::pair<FeatureTable, ZscoreStats> zscore(const FeatureTable& t,
                                            const ZscoreStats* stats = nullptr);

struct SpearmanResult {
  double rho = 0.0;
  bool defined = true;  // false when either vector has no rank variance
};

SpearmanResult spearman_rho(std::span<const double> x, std::span<const double> y);

// Greedy scan in column order; a column is dropped when |rho| exceeds the
// cutoff against any column already kept.
std::pair<FeatureTable, std::vector<PrunedPair>> prune_correlated(const FeatureTable& t,
                                                                  double cutoff = 0.8);

// Random sub-partitions; each draw is retried until the sub-training part has
// at least 2 events and the sub-validation part has a comparable pair.
std::vector<SubSplit> make_sub_splits(std::span<const SurvivalOutcome> outcomes, int n_splits,
                                      double val_fraction, std::uint64_t seed,
                                      int max_retries = 100);

// Mean over splits of the validation C-index of a Cox model on the given
// design. nullopt if any fit fails.
std::optional<double> mean_validation_cindex(const Eigen::MatrixXd& x,
                                             std::span<const SurvivalOutcome> outcomes,
                                             std::span<const SubSplit> splits,
                                             const CoxFitOptions& cox = {});

struct ScreenResult {
  std::vector<ScreenScore> scores;  // every column, table order
  std::vector<std::string> ranked;  // mean C > 0.5, descending
};

ScreenResult univariate_screen(const FeatureTable& t, std::span<const SurvivalOutcome> outcomes,
                               std::span<const SubSplit> splits, const CoxFitOptions& cox = {});

struct PreprocessResult {
  FeatureTable table;  // after correlation pruning (all surviving columns)
  PreprocessReport report;
  std::vector<SubSplit> splits;
};

// Full training-side pipeline. `zscore_override` replaces the estimated
// normalization statistics; it exists so callers can study the effect of
// statistics computed elsewhere.
PreprocessResult fit_preprocess(const FeatureTable& train,
                                std::span<const SurvivalOutcome> outcomes,
                                const PreprocessConfig& config, std::uint64_t seed,
                                const ZscoreStats* zscore_override = nullptr);

// Replays drop/impute/encode/zscore/prune on new rows from the report alone.
FeatureTable apply_preprocess(const PreprocessReport& report, const FeatureTable& t);

// Unsupervised stages only (no pruning or screening); used to derive
// statistics on arbitrary row sets.
FeatureTable encode_for_zscore(const PreprocessReport& report, const FeatureTable& t);

}  // namespace mmem
