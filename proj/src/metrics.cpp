#include "mmem/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "mmem/error.hpp"
#include "mmem/random.hpp"

namespace mmem {
namespace {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // Count of inserted ranks < i.
  std::int64_t prefix(std::size_t i) const {
    std::int64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::int64_t> tree_;
};

void check_lengths(std::size_t a, std::size_t b, const char* who) {
  if (a != b) throw PreconditionError(std::string(who) + ": length mismatch");
}

// Midranks (1-based, ties averaged).
std::vector<double> midranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = rank;
    i = j + 1;
  }
  return r;
}

double quantile_sorted(const std::vector<double>& s, double q) {
  if (s.size() == 1) return s.front();
  const double h = (static_cast<double>(s.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

void split_by_label(std::span<const double> scores, std::span<const int> labels,
                    std::vector<double>& pos, std::vector<double>& neg) {
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 1) pos.push_back(scores[i]);
    else if (labels[i] == 0) neg.push_back(scores[i]);
    else throw PreconditionError("labels must be 0 or 1");
  }
  if (pos.empty() || neg.empty()) throw PreconditionError("AUROC needs both classes present");
}

}  // namespace

// ------------------------------------------------------------------ C-index

ConcordanceCounts concordance_counts(std::span<const double> risks,
                                     std::span<const SurvivalOutcome> outcomes) {
  check_lengths(risks.size(), outcomes.size(), "concordance_index");
  const std::size_t n = risks.size();
  std::vector<double> uniq(risks.begin(), risks.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  auto rank_of = [&](double r) {
    return static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), r) - uniq.begin());
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return outcomes[a].time > outcomes[b].time; });

  // Sweep from the latest time; the tree holds everyone strictly later than
  // the current time group.
  Fenwick tree(uniq.size());
  std::int64_t inserted = 0;
  ConcordanceCounts c;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && outcomes[order[j]].time == outcomes[order[i]].time) ++j;
    for (std::size_t k = i; k < j; ++k) {
      const auto idx = order[k];
      if (!outcomes[idx].event) continue;
      const auto r = rank_of(risks[idx]);
      const std::int64_t below = tree.prefix(r);
      const std::int64_t at_or_below = tree.prefix(r + 1);
      c.concordant += below;
      c.tied_risk += at_or_below - below;
      c.comparable += inserted;
    }
    for (std::size_t k = i; k < j; ++k) {
      tree.add(rank_of(risks[order[k]]));
      ++inserted;
    }
    i = j;
  }
  return c;
}

double concordance_index(std::span<const double> risks,
                         std::span<const SurvivalOutcome> outcomes) {
  const auto c = concordance_counts(risks, outcomes);
  if (c.comparable == 0) throw PreconditionError("concordance_index: no comparable pairs");
  return c.cindex();
}

// ------------------------------------------------------------------ bootstrap

BootstrapResult bootstrap_ci(const ResampleMetric& metric, std::size_t n_items, int n_boot,
                             std::uint64_t seed) {
  if (n_items == 0 || n_boot < 1) throw PreconditionError("bootstrap_ci: empty input");
  std::vector<std::size_t> all(n_items);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto point = metric(all);
  if (!point) throw PreconditionError("bootstrap_ci: metric undefined on the full sample");

  BootstrapResult res;
  res.point = *point;
  std::vector<std::size_t> sample(n_items);
  for (int b = 0; b < n_boot; ++b) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(b)}));
    for (auto& s : sample) s = rng.index(n_items);
    auto v = metric(sample);
    if (v && std::isfinite(*v)) {
      res.replicates.push_back(*v);
    } else {
      ++res.n_undefined;
    }
  }
  res.n_defined = static_cast<int>(res.replicates.size());
  if (2 * res.n_undefined > n_boot) {
    throw PreconditionError("bootstrap_ci: " + std::to_string(res.n_undefined) + " of " +
                            std::to_string(n_boot) + " resamples undefined");
  }
  std::vector<double> sorted = res.replicates;
  std::sort(sorted.begin(), sorted.end());
  res.lo = quantile_sorted(sorted, 0.025);
  res.hi = quantile_sorted(sorted, 0.975);
  return res;
}

BootstrapResult bootstrap_cindex(std::span<const double> risks,
                                 std::span<const SurvivalOutcome> outcomes, int n_boot,
                                 std::uint64_t seed) {
  check_lengths(risks.size(), outcomes.size(), "bootstrap_cindex");
  std::vector<double> r;
  std::vector<SurvivalOutcome> o;
  return bootstrap_ci(
      [&](std::span<const std::size_t> idx) -> std::optional<double> {
        r.clear();
        o.clear();
        for (auto i : idx) {
          r.push_back(risks[i]);
          o.push_back(outcomes[i]);
        }
        const auto c = concordance_counts(r, o);
        if (c.comparable == 0) return std::nullopt;
        return c.cindex();
      },
      risks.size(), n_boot, seed);
}

// ------------------------------------------------------------------ Kaplan-Meier

double KMCurve::operator()(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

KMCurve km_curve(std::span<const SurvivalOutcome> outcomes) {
  if (outcomes.empty()) throw PreconditionError("km_curve: empty input");
  std::vector<SurvivalOutcome> s(outcomes.begin(), outcomes.end());
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
  KMCurve km;
  double surv = 1.0;
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    std::size_t j = i;
    int d = 0;
    while (j < n && s[j].time == s[i].time) {
      d += s[j].event ? 1 : 0;
      ++j;
    }
    if (d > 0) {
      const int at_risk = static_cast<int>(n - i);
      surv *= 1.0 - static_cast<double>(d) / at_risk;
      km.times.push_back(s[i].time);
      km.survival.push_back(surv);
      km.at_risk.push_back(at_risk);
      km.events.push_back(d);
    }
    i = j;
  }
  return km;
}

double chi_square_1df_sf(double chi2) {
  if (!(chi2 > 0.0)) return 1.0;
  if (std::isinf(chi2)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(1.0), chi2));
}

LogRankResult logrank_test(std::span<const SurvivalOutcome> group_a,
                           std::span<const SurvivalOutcome> group_b) {
  if (group_a.empty() || group_b.empty()) {
    throw PreconditionError("logrank_test: both groups need at least one patient");
  }
  struct Item {
    double time;
    bool event;
    bool in_a;
  };
  std::vector<Item> items;
  for (const auto& o : group_a) items.push_back({o.time, o.event, true});
  for (const auto& o : group_b) items.push_back({o.time, o.event, false});
  std::sort(items.begin(), items.end(), [](const auto& x, const auto& y) { return x.time < y.time; });

  LogRankResult res;
  double n = static_cast<double>(items.size());
  double na = static_cast<double>(group_a.size());
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    double d = 0, da = 0, removed_a = 0;
    while (j < items.size() && items[j].time == items[i].time) {
      if (items[j].event) {
        d += 1;
        if (items[j].in_a) da += 1;
      }
      if (items[j].in_a) removed_a += 1;
      ++j;
    }
    if (d > 0) {
      res.observed_a += da;
      res.expected_a += d * na / n;
      if (n > 1) res.variance += d * (na / n) * (1.0 - na / n) * (n - d) / (n - 1.0);
    }
    n -= static_cast<double>(j - i);
    na -= removed_a;
    i = j;
  }
  if (res.variance > 0) {
    const double diff = res.observed_a - res.expected_a;
    res.chi2 = diff * diff / res.variance;
  }
  res.p = chi_square_1df_sf(res.chi2);
  return res;
}

double median(std::vector<double> v) {
  if (v.empty()) throw PreconditionError("median of empty vector");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::vector<RiskGroup> median_split(std::span<const double> risks) {
  if (risks.empty()) return {};
  const double med = median(std::vector<double>(risks.begin(), risks.end()));
  std::vector<RiskGroup> g;
  g.reserve(risks.size());
  for (double r : risks) g.push_back(r > med ? RiskGroup::kHigh : RiskGroup::kLow);
  return g;
}

// ------------------------------------------------------------------ horizons, ROC

HorizonLabels horizon_labels(std::span<const SurvivalOutcome> outcomes, double horizon_years,
                             double days_per_year) {
  HorizonLabels h;
  h.horizon_years = horizon_years;
  const double limit = horizon_years * days_per_year;
  for (const auto& o : outcomes) {
    if (o.time > limit) h.labels.push_back(HorizonLabel::kNegative);
    else if (o.event) h.labels.push_back(HorizonLabel::kPositive);
    else h.labels.push_back(HorizonLabel::kExcluded);
  }
  return h;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size(), "auroc");
  std::vector<double> pos, neg;
  split_by_label(scores, labels, pos, neg);
  const auto ranks = midranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 1) rank_sum += ranks[i];
  }
  const double m = static_cast<double>(pos.size());
  const double n = static_cast<double>(neg.size());
  return (rank_sum - m * (m + 1.0) / 2.0) / (m * n);
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size(), "roc_curve");
  std::vector<double> pos, neg;
  split_by_label(scores, labels, pos, neg);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> pts{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  double tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    pts.push_back({fp / static_cast<double>(neg.size()), tp / static_cast<double>(pos.size()),
                   scores[order[i]]});
    i = j;
  }
  return pts;
}

namespace {

struct Placements {
  double auc = 0.0;
  std::vector<double> v10;  // per positive
  std::vector<double> v01;  // per negative
};

Placements placements(std::span<const double> scores, std::span<const int> labels) {
  std::vector<double> pos, neg;
  split_by_label(scores, labels, pos, neg);
  const double m = static_cast<double>(pos.size());
  const double n = static_cast<double>(neg.size());
  const auto tz = midranks(scores);
  const auto tx = midranks(pos);
  const auto ty = midranks(neg);
  Placements pl;
  std::size_t ip = 0, in = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (labels[k] == 1) {
      pl.v10.push_back((tz[k] - tx[ip++]) / n);
    } else {
      pl.v01.push_back(1.0 - (tz[k] - ty[in++]) / m);
    }
  }
  // The mean of v10 is the AUC; it is formed from the rank sum so that the
  // value is bit-identical to auroc().
  double rank_sum = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (labels[k] == 1) rank_sum += tz[k];
  }
  pl.auc = (rank_sum - m * (m + 1.0) / 2.0) / (m * n);
  return pl;
}

double sample_cov(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t k = a.size();
  if (k < 2) return 0.0;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(k);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(k);
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(k - 1);
}

}  // namespace

double normal_two_sided_p(double z) {
  if (std::isnan(z)) return 1.0;
  if (std::isinf(z)) return 0.0;
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), std::abs(z)));
}

DeLongResult delong(std::span<const double> scores_a, std::optional<std::span<const double>> scores_b,
                    std::span<const int> labels) {
  check_lengths(scores_a.size(), labels.size(), "delong");
  const Placements a = placements(scores_a, labels);
  const double m = static_cast<double>(a.v10.size());
  const double n = static_cast<double>(a.v01.size());
  DeLongResult res;
  res.auc_a = a.auc;
  res.var_a = sample_cov(a.v10, a.v10) / m + sample_cov(a.v01, a.v01) / n;
  const double half = 1.959963984540054 * std::sqrt(res.var_a);
  res.ci_lo = std::clamp(res.auc_a - half, 0.0, 1.0);
  res.ci_hi = std::clamp(res.auc_a + half, 0.0, 1.0);
  if (scores_b) {
    check_lengths(scores_b->size(), labels.size(), "delong");
    const Placements b = placements(*scores_b, labels);
    res.auc_b = b.auc;
    res.var_b = sample_cov(b.v10, b.v10) / m + sample_cov(b.v01, b.v01) / n;
    res.covariance = sample_cov(a.v10, b.v10) / m + sample_cov(a.v01, b.v01) / n;
    const double var_diff = res.var_a + *res.var_b - 2.0 * *res.covariance;
    const double diff = res.auc_a - b.auc;
    if (var_diff > 1e-300) {
      res.z = diff / std::sqrt(var_diff);
    } else {
      res.z = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
    }
    res.p = normal_two_sided_p(*res.z);
  }
  return res;
}

// ------------------------------------------------------------------ t-test

TTestResult two_sample_t(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() < 2 || ys.size() < 2) throw PreconditionError("two_sample_t: need at least 2 values per sample");
  auto moments = [](std::span<const double> v) {
    const double k = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / k;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::pair{mean, ss / (k - 1.0)};
  };
  const auto [mx, vx] = moments(xs);
  const auto [my, vy] = moments(ys);
  const double nx = static_cast<double>(xs.size());
  const double ny = static_cast<double>(ys.size());
  const double ax = vx / nx;
  const double ay = vy / ny;
  const double se2 = ax + ay;
  TTestResult r;
  const double diff = mx - my;
  if (!(se2 > 0.0)) {
    r.degenerate = true;
    r.df = nx + ny - 2.0;
    if (diff == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = std::copysign(std::numeric_limits<double>::infinity(), diff);
      r.p = 0.0;
    }
    return r;
  }
  r.t = diff / std::sqrt(se2);
  r.df = se2 * se2 / (ax * ax / (nx - 1.0) + ay * ay / (ny - 1.0));
  r.p = 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(r.df), std::abs(r.t)));
  return r;
}

}  // namespace mmem
