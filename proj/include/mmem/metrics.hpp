#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mmem/datamodel.hpp"

namespace mmem {

// ------------------------------------------------------------------ C-index

struct ConcordanceCounts {
  std::int64_t concordant = 0;
  std::int64_t tied_risk = 0;
  std::int64_t comparable = 0;

  double cindex() const {
    return (static_cast<double>(concordant) + 0.5 * static_cast<double>(tied_risk)) /
           static_cast<double>(comparable);
  }
};

// Harrell's pair counts. A pair (i, j) is comparable when i has an event and
// t_i < t_j; ties in time are never comparable.
ConcordanceCounts concordance_counts(std::span<const double> risks,
                                     std::span<const SurvivalOutcome> outcomes);

// Throws PreconditionError when no pair is comparable.
double concordance_index(std::span<const double> risks,
                         std::span<const SurvivalOutcome> outcomes);

// ------------------------------------------------------------------ bootstrap

// Metric evaluated on a resample given as row indices; nullopt = undefined.
using ResampleMetric = std::function<std::optional<double>(std::span<const std::size_t>)>;

struct BootstrapResult {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  int n_defined = 0;
  int n_undefined = 0;
  std::vector<double> replicates;  // defined replicates, in draw order
};

// Percentile interval (2.5 / 97.5, linear interpolation between order
// statistics). Throws when more than half of the resamples are undefined.
BootstrapResult bootstrap_ci(const ResampleMetric& metric, std::size_t n_items,
                             int n_boot = 1000, std::uint64_t seed = 0);

// Convenience wrapper for the C-index.
BootstrapResult bootstrap_cindex(std::span<const double> risks,
                                 std::span<const SurvivalOutcome> outcomes, int n_boot,
                                 std::uint64_t seed);

// ------------------------------------------------------------------ Kaplan-Meier

struct KMCurve {
  std::vector<double> times;  // distinct event times
  std::vector<double> survival;
  std::vector<int> at_risk;
  std::vector<int> events;

  double operator()(double t) const;
};

KMCurve km_curve(std::span<const SurvivalOutcome> outcomes);

struct LogRankResult {
  double chi2 = 0.0;
  double p = 1.0;
  double observed_a = 0.0;
  double expected_a = 0.0;
  double variance = 0.0;
};

LogRankResult logrank_test(std::span<const SurvivalOutcome> group_a,
                           std::span<const SurvivalOutcome> group_b);

double chi_square_1df_sf(double chi2);

enum class RiskGroup { kLow, kHigh };

// Risks strictly above the median are high; ties with the median go low.
std::vector<RiskGroup> median_split(std::span<const double> risks);
double median(std::vector<double> v);

// ------------------------------------------------------------------ horizons, ROC

enum class HorizonLabel { kNegative, kPositive, kExcluded };

struct HorizonLabels {
  double horizon_years = 0.0;
  std::vector<HorizonLabel> labels;
};

inline constexpr double kDaysPerYear = 365.25;

// Event at or before the horizon: positive. Follow-up past the horizon:
// negative. Censored at or before the horizon: excluded.
HorizonLabels horizon_labels(std::span<const SurvivalOutcome> outcomes, double horizon_years,
                             double days_per_year = kDaysPerYear);

// Mann-Whitney AUC; labels are 0/1. Throws when a class is empty.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

struct DeLongResult {
  double auc_a = 0.0;
  double var_a = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  // Present when a second score vector was given.
  std::optional<double> auc_b;
  std::optional<double> var_b;
  std::optional<double> covariance;
  std::optional<double> z;
  std::optional<double> p;
};

// Fast (midrank) DeLong structural-components estimator. The paired test
// compares two score vectors on the same labels.
DeLongResult delong(std::span<const double> scores_a, std::optional<std::span<const double>> scores_b,
                    std::span<const int> labels);

// ------------------------------------------------------------------ t-test

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  // Both samples have zero variance; t is 0 or +/-inf and p is 1 or 0.
  bool degenerate = false;
};

// Welch's unequal-variance t-test, two-sided.
TTestResult two_sample_t(std::span<const double> xs, std::span<const double> ys);

double normal_two_sided_p(double z);

}  // namespace mmem
