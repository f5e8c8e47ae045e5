#include "mmem/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmem/error.hpp"
#include "mmem/metrics.hpp"
#include "mmem/random.hpp"

namespace mmem {
namespace {

std::vector<double> observed(const FeatureTable& t, Eigen::Index c) {
  std::vector<double> v;
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    if (!t.is_missing(r, c)) v.push_back(t.values()(r, c));
  }
  return v;
}

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

// Centered, unit-norm rank vector; empty when the ranks are constant.
Eigen::VectorXd normalized_ranks(std::span<const double> v) {
  const auto r = midranks(v);
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
  x.array() -= x.mean();
  const double norm = x.norm();
  if (!(norm > 1e-12)) return {};
  return x / norm;
}

std::string one_hot_name(const std::string& column, const std::string& level) {
  return column + "=" + level;
}

FeatureTable replay_drop(const std::vector<std::string>& input_columns,
                         const std::vector<std::string>& dropped, const FeatureTable& t) {
  std::vector<std::string> keep;
  for (const auto& c : input_columns) {
    if (std::find(dropped.begin(), dropped.end(), c) == dropped.end()) keep.push_back(c);
  }
  return t.select_columns(std::span<const std::string>(keep));
}

FeatureTable replay_impute(const std::vector<ImputedValue>& record, const FeatureTable& t) {
  Eigen::MatrixXd v = t.values();
  std::vector<Column> cols = t.columns();
  for (const auto& imp : record) {
    auto c = t.column_index(imp.column);
    if (!c) throw DataError("preprocess replay: column '" + imp.column + "' missing");
    auto& col = cols[static_cast<std::size_t>(*c)];
    double fill = 0.0;
    if (const auto* s = std::get_if<std::string>(&imp.value)) {
      auto it = std::find(col.levels.begin(), col.levels.end(), *s);
      if (it == col.levels.end()) {
        col.levels.push_back(*s);
        it = col.levels.end() - 1;
      }
      fill = static_cast<double>(it - col.levels.begin());
    } else {
      fill = std::get<double>(imp.value);
    }
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      if (t.is_missing(r, *c)) v(r, *c) = fill;
    }
  }
  // Columns without a recorded imputation had no missing cells at fit time;
  // any missing cell left now is unrecoverable.
  MissingMask none = MissingMask::Constant(t.rows(), t.cols(), false);
  for (Eigen::Index c = 0; c < t.cols(); ++c) {
    const bool recorded = std::any_of(record.begin(), record.end(),
                                      [&](const auto& i) { return i.column == t.column(c).name; });
    if (!recorded && t.missing().col(c).any()) {
      throw DataError("preprocess replay: column '" + t.column(c).name +
                      "' has missing cells but no imputation value");
    }
  }
  return FeatureTable(t.patient_ids(), std::move(cols), std::move(v), std::move(none));
}

FeatureTable replay_encode(const std::vector<OneHotEncoding>& record, const FeatureTable& t) {
  std::vector<Column> cols;
  std::vector<Eigen::VectorXd> data;
  for (Eigen::Index c = 0; c < t.cols(); ++c) {
    const auto& col = t.column(c);
    if (col.kind != ColumnKind::kCategorical) {
      cols.push_back(col);
      data.push_back(t.values().col(c));
      continue;
    }
    auto enc = std::find_if(record.begin(), record.end(),
                            [&](const auto& e) { return e.column == col.name; });
    if (enc == record.end()) throw DataError("preprocess replay: no encoding for '" + col.name + "'");
    for (const auto& level : enc->levels) {
      Eigen::VectorXd ind = Eigen::VectorXd::Zero(t.rows());
      for (Eigen::Index r = 0; r < t.rows(); ++r) {
        if (t.category(r, c) == level) ind[r] = 1.0;
      }
      cols.push_back(Column{one_hot_name(col.name, level), ColumnKind::kIndicator, {}});
      data.push_back(std::move(ind));
    }
  }
  Eigen::MatrixXd v(t.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < data.size(); ++j) v.col(static_cast<Eigen::Index>(j)) = data[j];
  MissingMask none = MissingMask::Constant(v.rows(), v.cols(), false);
  return FeatureTable(t.patient_ids(), std::move(cols), std::move(v), std::move(none));
}

}  // namespace

FeatureTable drop_high_missingness(const FeatureTable& t, double threshold,
                                   std::vector<std::string>* dropped) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw PreconditionError("drop_high_missingness: threshold must lie in (0, 1)");
  }
  if (t.rows() == 0) throw PreconditionError("drop_high_missingness: empty table");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < t.cols(); ++c) {
    const double frac = static_cast<double>(t.missing().col(c).count()) / static_cast<double>(t.rows());
    if (frac > threshold) {
      if (dropped) dropped->push_back(t.column(c).name);
    } else {
      keep.push_back(c);
    }
  }
  if (keep.empty()) throw DataError("drop_high_missingness: every column exceeds the missingness threshold");
  return t.select_columns(std::span<const Eigen::Index>(keep));
}

FeatureTable impute_missing(const FeatureTable& t, std::vector<ImputedValue>* record) {
  std::vector<ImputedValue> rec;
  for (Eigen::Index c = 0; c < t.cols(); ++c) {
    if (!t.missing().col(c).any()) continue;
    auto obs = observed(t, c);
    if (obs.empty()) {
      throw PreconditionError("impute_missing: column '" + t.column(c).name + "' is entirely missing");
    }
    const auto& col = t.column(c);
    if (col.kind == ColumnKind::kCategorical) {
      std::vector<int> counts(col.levels.size(), 0);
      for (double v : obs) ++counts[static_cast<std::size_t>(v)];
      // max_element returns the first maximum, i.e. the smallest level.
      const auto best = std::max_element(counts.begin(), counts.end()) - counts.begin();
      rec.push_back({col.name, col.levels[static_cast<std::size_t>(best)]});
    } else {
      std::sort(obs.begin(), obs.end());
      rec.push_back({col.name, obs[(obs.size() - 1) / 2]});
    }
  }
  auto out = replay_impute(rec, t);
  if (record) *record = std::move(rec);
  return out;
}

FeatureTable encode_one_hot(const FeatureTable& t, std::vector<OneHotEncoding>* record) {
  std::vector<OneHotEncoding> rec;
  for (Eigen::Index c = 0; c < t.cols(); ++c) {
    const auto& col = t.column(c);
    if (col.kind != ColumnKind::kCategorical) continue;
    // Levels actually observed in these rows, in lexicographic order.
    std::vector<bool> seen(col.levels.size(), false);
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      if (t.is_missing(r, c)) {
        throw PreconditionError("encode_one_hot: column '" + col.name + "' still has missing cells");
      }
      seen[static_cast<std::size_t>(t.values()(r, c))] = true;
    }
    OneHotEncoding enc{col.name, {}};
    for (std::size_t k = 0; k < col.levels.size(); ++k) {
      if (seen[k]) enc.levels.push_back(col.levels[k]);
    }
    std::sort(enc.levels.begin(), enc.levels.end());
    rec.push_back(std::move(enc));
  }
  auto out = replay_encode(rec, t);
  if (record) *record = std::move(rec);
  return out;
}

std::pair<FeatureTable, ZscoreStats> zscore(const FeatureTable& t, const ZscoreStats* stats) {
  ZscoreStats st;
  if (stats) {
    st = *stats;
  } else {
    if (t.rows() < 2) throw PreconditionError("zscore: need at least 2 rows");
    const double n = static_cast<double>(t.rows());
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      const auto& col = t.column(c);
      if (col.kind == ColumnKind::kCategorical) {
        throw PreconditionError("zscore: categorical column '" + col.name + "' must be encoded first");
      }
      const auto x = t.values().col(c);
      const double mean = x.mean();
      const double sd = std::sqrt((x.array() - mean).square().sum() / (n - 1.0));
      if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
        st.dropped.push_back(col.name);
        continue;
      }
      if (col.kind == ColumnKind::kIndicator) {
        st.entries.push_back({col.name, 0.0, 1.0, false});
      } else {
        st.entries.push_back({col.name, mean, sd, true});
      }
    }
  }
  std::vector<Column> cols;
  Eigen::MatrixXd v(t.rows(), static_cast<Eigen::Index>(st.entries.size()));
  for (std::size_t j = 0; j < st.entries.size(); ++j) {
    const auto& e = st.entries[j];
    auto c = t.column_index(e.column);
    if (!c) throw PreconditionError("zscore: column '" + e.column + "' absent from table");
    cols.push_back(t.column(*c));
    const auto jj = static_cast<Eigen::Index>(j);
    if (e.scaled) {
      v.col(jj) = ((t.values().col(*c).array() - e.mean) / e.sd).matrix();
    } else {
      v.col(jj) = t.values().col(*c);
    }
  }
  MissingMask mask(t.rows(), v.cols());
  for (std::size_t j = 0; j < st.entries.size(); ++j) {
    mask.col(static_cast<Eigen::Index>(j)) = t.missing().col(*t.column_index(st.entries[j].column));
  }
  return {FeatureTable(t.patient_ids(), std::move(cols), std::move(v), std::move(mask)), std::move(st)};
}

SpearmanResult spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw PreconditionError("spearman_rho: vectors must have equal length >= 2");
  }
  const auto rx = normalized_ranks(x);
  const auto ry = normalized_ranks(y);
  if (rx.size() == 0 || ry.size() == 0) return {0.0, false};
  return {std::clamp(rx.dot(ry), -1.0, 1.0), true};
}

std::pair<FeatureTable, std::vector<PrunedPair>> prune_correlated(const FeatureTable& t,
                                                                  double cutoff) {
  std::vector<Eigen::VectorXd> ranks;
  ranks.reserve(static_cast<std::size_t>(t.cols()));
  for (Eigen::Index c = 0; c < t.cols(); ++c) {
    const auto col = t.values().col(c);
    std::vector<double> v(col.data(), col.data() + col.size());
    ranks.push_back(normalized_ranks(v));
  }
  std::vector<Eigen::Index> kept;
  std::vector<PrunedPair> pruned;
  for (Eigen::Index c = 0; c < t.cols(); ++c) {
    bool drop = false;
    const auto& rc = ranks[static_cast<std::size_t>(c)];
    if (rc.size() > 0) {
      for (Eigen::Index k : kept) {
        const auto& rk = ranks[static_cast<std::size_t>(k)];
        if (rk.size() == 0) continue;
        const double rho = std::clamp(rc.dot(rk), -1.0, 1.0);
        if (std::abs(rho) > cutoff) {
          pruned.push_back({t.column(k).name, t.column(c).name, rho});
          drop = true;
          break;
        }
      }
    }
    if (!drop) kept.push_back(c);
  }
  return {t.select_columns(std::span<const Eigen::Index>(kept)), std::move(pruned)};
}

std::vector<SubSplit> make_sub_splits(std::span<const SurvivalOutcome> outcomes, int n_splits,
                                      double val_fraction, std::uint64_t seed, int max_retries) {
  const std::size_t n = outcomes.size();
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw PreconditionError("make_sub_splits: val_fraction must lie in (0, 1)");
  }
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n))), 1,
      n > 3 ? n - 3 : 1);
  if (n < 4) throw PreconditionError("make_sub_splits: need at least 4 patients");

  std::vector<SubSplit> splits;
  std::vector<SurvivalOutcome> sub;
  for (int s = 0; s < n_splits; ++s) {
    bool ok = false;
    for (int attempt = 0; attempt < max_retries && !ok; ++attempt) {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(attempt)}));
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(perm);
      SubSplit split;
      split.validation.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
      split.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
      std::sort(split.validation.begin(), split.validation.end());
      std::sort(split.train.begin(), split.train.end());

      std::size_t train_events = 0;
      for (auto i : split.train) train_events += outcomes[i].event ? 1 : 0;
      sub.clear();
      for (auto i : split.validation) sub.push_back(outcomes[i]);
      std::vector<double> zeros(sub.size(), 0.0);
      if (train_events >= 2 && concordance_counts(zeros, sub).comparable > 0) {
        splits.push_back(std::move(split));
        ok = true;
      }
    }
    if (!ok) {
      throw PreconditionError("make_sub_splits: could not draw split " + std::to_string(s) +
                              " with >= 2 training events and a comparable validation pair after " +
                              std::to_string(max_retries) + " attempts");
    }
  }
  return splits;
}

std::optional<double> mean_validation_cindex(const Eigen::MatrixXd& x,
                                             std::span<const SurvivalOutcome> outcomes,
                                             std::span<const SubSplit> splits,
                                             const CoxFitOptions& cox) {
  if (splits.empty()) throw PreconditionError("mean_validation_cindex: no splits");
  std::vector<std::string> names(static_cast<std::size_t>(x.cols()));
  double total = 0.0;
  for (const auto& s : splits) {
    Eigen::MatrixXd xt(static_cast<Eigen::Index>(s.train.size()), x.cols());
    std::vector<SurvivalOutcome> ot;
    for (std::size_t i = 0; i < s.train.size(); ++i) {
      xt.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(s.train[i]));
      ot.push_back(outcomes[s.train[i]]);
    }
    Eigen::MatrixXd xv(static_cast<Eigen::Index>(s.validation.size()), x.cols());
    std::vector<SurvivalOutcome> ov;
    for (std::size_t i = 0; i < s.validation.size(); ++i) {
      xv.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(s.validation[i]));
      ov.push_back(outcomes[s.validation[i]]);
    }
    try {
      const CoxModel m = fit_cox(xt, ot, names, cox);
      const Eigen::VectorXd r = predict_risk(m, xv);
      total += concordance_index(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())), ov);
    } catch (const Error&) {
      return std::nullopt;
    }
  }
  return total / static_cast<double>(splits.size());
}

ScreenResult univariate_screen(const FeatureTable& t, std::span<const SurvivalOutcome> outcomes,
                               std::span<const SubSplit> splits, const CoxFitOptions& cox) {
  if (static_cast<std::size_t>(t.rows()) != outcomes.size()) {
    throw PreconditionError("univariate_screen: row/outcome count mismatch");
  }
  ScreenResult res;
  std::vector<std::pair<double, std::size_t>> kept;
  for (Eigen::Index c = 0; c < t.cols(); ++c) {
    const Eigen::MatrixXd x = t.values().col(c);
    auto mean = mean_validation_cindex(x, outcomes, splits, cox);
    res.scores.push_back({t.column(c).name, mean});
    if (mean && *mean > 0.5) kept.emplace_back(*mean, static_cast<std::size_t>(c));
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [m, c] : kept) res.ranked.push_back(t.column(static_cast<Eigen::Index>(c)).name);
  return res;
}

PreprocessResult fit_preprocess(const FeatureTable& train, std::span<const SurvivalOutcome> outcomes,
                                const PreprocessConfig& config, std::uint64_t seed,
                                const ZscoreStats* zscore_override) {
  if (static_cast<std::size_t>(train.rows()) != outcomes.size()) {
    throw PreconditionError("fit_preprocess: row/outcome count mismatch");
  }
  PreprocessResult res;
  auto& rep = res.report;
  rep.input_columns = train.column_names();
  FeatureTable t = drop_high_missingness(train, config.missing_threshold, &rep.dropped_missingness);
  t = impute_missing(t, &rep.imputed_values);
  t = encode_one_hot(t, &rep.encoding_map);
  auto [z, stats] = zscore(t, zscore_override);
  rep.zscore = std::move(stats);
  auto [pruned, pairs] = prune_correlated(z, config.correlation_cutoff);
  rep.pruned_correlated = std::move(pairs);
  res.splits = make_sub_splits(outcomes, config.n_splits, config.val_fraction, seed,
                               config.max_split_retries);
  auto screen = univariate_screen(pruned, outcomes, res.splits, config.cox);
  rep.screened = std::move(screen.scores);
  rep.ranked = std::move(screen.ranked);
  res.table = std::move(pruned);
  return res;
}

FeatureTable encode_for_zscore(const PreprocessReport& report, const FeatureTable& t) {
  FeatureTable out = replay_drop(report.input_columns, report.dropped_missingness, t);
  out = replay_impute(report.imputed_values, out);
  return replay_encode(report.encoding_map, out);
}

FeatureTable apply_preprocess(const PreprocessReport& report, const FeatureTable& t) {
  FeatureTable out = encode_for_zscore(report, t);
  out = zscore(out, &report.zscore).first;
  std::vector<std::string> keep;
  for (const auto& e : report.zscore.entries) {
    const bool pruned = std::any_of(report.pruned_correlated.begin(), report.pruned_correlated.end(),
                                    [&](const auto& p) { return p.dropped == e.column; });
    if (!pruned) keep.push_back(e.column);
  }
  return out.select_columns(std::span<const std::string>(keep));
}

}  // namespace mmem
