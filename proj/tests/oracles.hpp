#pragma once

// Brute-force reference implementations used only by the tests. None of them
// calls into the library; they favour the most literal formulation over
// speed.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vec = std::vector<double>;

// Cox log partial likelihood straight from the definition: for every distinct
// event time, loop over the whole cohort to build the risk set.
double cox_loglik(const Vec& beta, const std::vector<Vec>& x, const Vec& time,
                  const std::vector<int>& event, bool efron);

// Maximum of f over the box [lo, hi]^dim. Full grid at `coarse` spacing, then
// repeated zooms around the incumbent until the spacing reaches `fine`.
// Returns (argmax, max).
std::pair<Vec, double> grid_maximize(const std::function<double(const Vec&)>& f, int dim, double lo,
                                     double hi, double coarse, double fine);

// Plain grid at a fixed step (the documented 1-D oracle).
std::pair<double, double> grid_maximize_1d(const std::function<double(double)>& f, double lo, double hi,
                                           double step);

struct PairCounts {
  long concordant = 0;
  long tied = 0;
  long comparable = 0;
};
// Every ordered pair (i, j): comparable iff event_i and t_i < t_j.
PairCounts harrell_pairs(const Vec& risk, const Vec& time, const std::vector<int>& event);

// Mann-Whitney AUC by enumerating every positive/negative pair.
double auc_pairs(const Vec& score, const std::vector<int>& label);

// Product-limit estimate evaluated at each distinct event time.
struct KmPoint {
  double time;
  double survival;
};
std::vector<KmPoint> kaplan_meier(const Vec& time, const std::vector<int>& event);

// Nelson-Aalen cumulative hazard at each distinct event time.
std::vector<KmPoint> nelson_aalen(const Vec& time, const std::vector<int>& event);

// Two-group log-rank statistic from the hypergeometric moments at each
// distinct event time; p from erfc.
struct LogRank {
  double chi2;
  double p;
};
LogRank logrank(const Vec& time, const std::vector<int>& event, const std::vector<int>& group);

// Monte-Carlo permutation p-value of the log-rank statistic.
double logrank_permutation_p(const Vec& time, const std::vector<int>& event, const std::vector<int>& group,
                             int n_perm, std::uint64_t seed);

// Monte-Carlo permutation p-value of |mean difference|.
double mean_diff_permutation_p(const Vec& a, const Vec& b, int n_perm, std::uint64_t seed);

// Variance of the AUC over bootstrap resamples of (score, label) rows.
double bootstrap_auc_variance(const Vec& score, const std::vector<int>& label, int n_boot,
                              std::uint64_t seed);

// Softmax(Q K^T / sqrt(d)) V with explicit loops.
Eigen::MatrixXd softmax_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                  const Eigen::MatrixXd& v);

// Between-class variance maximised by scanning every threshold.
int otsu(const std::vector<std::uint8_t>& values);

// Binary closing by direct neighbourhood scans. Dilation looks at offsets
// [-s/2, s-1-s/2]; erosion at the negated offsets; out-of-grid pixels are 0
// for dilation and 1 for erosion.
std::vector<std::uint8_t> closing(const std::vector<std::uint8_t>& grid, int w, int h, int s);

// Area-weighted downsampling of one channel: each output pixel averages the
// source area it covers (fractional overlaps), rounded half up.
std::vector<std::uint8_t> area_resize(const std::vector<std::uint8_t>& src, int in, int out);

// Spearman correlation as the Pearson correlation of average ranks.
double spearman(const Vec& x, const Vec& y);

// Sorted intersection of id sets.
std::vector<std::string> intersect(const std::vector<std::vector<std::string>>& sets);

}  // namespace oracle
