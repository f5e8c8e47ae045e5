#include "mmem/cvharness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include "mmem/error.hpp"
#include "mmem/random.hpp"

namespace mmem {

std::vector<std::size_t> FoldAssignment::test_rows(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> FoldAssignment::train_rows(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) rows.push_back(i);
  }
  return rows;
}

FoldAssignment kfold(std::size_t n_patients, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw PreconditionError("kfold: need at least 2 folds");
  if (n_patients < static_cast<std::size_t>(n_folds)) {
    throw PreconditionError("kfold: " + std::to_string(n_patients) + " patients cannot fill " +
                            std::to_string(n_folds) + " folds");
  }
  std::vector<std::size_t> perm(n_patients);
  for (std::size_t i = 0; i < n_patients; ++i) perm[i] = i;
  Rng rng(seed);
  rng.shuffle(perm);
  FoldAssignment a;
  a.n_folds = n_folds;
  a.seed = seed;
  a.fold_of.assign(n_patients, 0);
  for (std::size_t i = 0; i < n_patients; ++i) a.fold_of[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(n_folds));
  return a;
}

std::uint64_t fold_seed(std::uint64_t master, Endpoint endpoint, int fold) {
  return derive_seed(master, {static_cast<std::uint64_t>(endpoint), static_cast<std::uint64_t>(fold)});
}

ModalityFoldResult tabular_modality_fold(const std::string& name, const FeatureTable& train,
                                         std::span<const SurvivalOutcome> train_outcomes,
                                         const FeatureTable& test, const CvConfig& config,
                                         std::uint64_t seed, const ZscoreStats* zscore_override) {
  PreprocessResult pre = fit_preprocess(train, train_outcomes, config.preprocess, seed, zscore_override);
  std::vector<std::string> candidates = pre.report.ranked;
  if (candidates.empty()) {
    // Nothing beat chance on validation: keep the single best fittable column.
    const ScreenScore* best = nullptr;
    for (const auto& s : pre.report.screened) {
      if (s.mean_cindex && (best == nullptr || *s.mean_cindex > *best->mean_cindex)) best = &s;
    }
    if (best == nullptr) throw ConvergenceError("no column of modality '" + name + "' could be fit");
    candidates.push_back(best->column);
  }
  auto [trace, model] = forward_select(pre.table, train_outcomes, candidates, pre.splits, config.select);

  ModalityFoldResult r;
  r.modality = name;
  const Eigen::VectorXd risks = predict_risk(model, apply_preprocess(pre.report, test));
  r.test_risks.assign(risks.data(), risks.data() + risks.size());
  r.p_val = trace.best_val_cindex;
  r.preprocess = std::move(pre.report);
  r.selection = std::move(trace);
  r.cox = std::move(model);
  return r;
}

ModalityFoldResult bag_modality_fold(const std::string& name, std::span<const EmbeddingBag> train,
                                     std::span<const SurvivalOutcome> train_outcomes,
                                     std::span<const EmbeddingBag> test, const CvConfig& config,
                                     std::uint64_t seed) {
  // Hold out part of the fold's training rows to validate the network.
  const std::size_t n = train.size();
  const auto n_val = static_cast<std::size_t>(
      std::clamp<double>(std::round(config.deep_val_fraction * static_cast<double>(n)), 1.0,
                         static_cast<double>(n > 1 ? n - 1 : 1)));
  Rng rng(derive_seed(seed, {1}));
  std::vector<std::size_t> fit_rows, val_rows;
  bool ok = false;
  for (int attempt = 0; attempt < config.preprocess.max_split_retries && !ok; ++attempt) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    val_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
    fit_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
    std::sort(val_rows.begin(), val_rows.end());
    std::sort(fit_rows.begin(), fit_rows.end());
    std::size_t ev_val = 0, ev_fit = 0;
    for (auto i : val_rows) ev_val += train_outcomes[i].event;
    for (auto i : fit_rows) ev_fit += train_outcomes[i].event;
    ok = ev_val >= 1 && ev_fit >= 2;
  }
  if (!ok) throw PreconditionError("modality '" + name + "': no validation split with events on both sides");

  std::vector<EmbeddingBag> fit_bags, val_bags;
  std::vector<SurvivalOutcome> fit_out, val_out;
  for (auto i : fit_rows) {
    fit_bags.push_back(train[i]);
    fit_out.push_back(train_outcomes[i]);
  }
  for (auto i : val_rows) {
    val_bags.push_back(train[i]);
    val_out.push_back(train_outcomes[i]);
  }
  DeepCoxConfig deep = config.deep;
  deep.seed = derive_seed(seed, {2});
  DeepCoxTrainResult trained = train_deep_cox(fit_bags, fit_out, deep, val_bags, val_out);
  if (!std::isfinite(trained.val_cindex)) {
    throw PreconditionError("modality '" + name + "': validation split has no comparable pair");
  }

  ModalityFoldResult r;
  r.modality = name;
  const Eigen::VectorXd risks = predict_bags(trained.model, test);
  r.test_risks.assign(risks.data(), risks.data() + risks.size());
  r.p_val = trained.val_cindex;
  r.deep_best_epoch = trained.best_epoch;
  r.deep_best_val_loss = trained.best_val_loss;
  return r;
}

namespace {

RiskScoreTable score_table(const FoldResult& fold) {
  RiskScoreTable t;
  t.patient_ids = fold.test_ids;
  t.scores.resize(static_cast<Eigen::Index>(fold.test_ids.size()), static_cast<Eigen::Index>(fold.modalities.size()));
  for (std::size_t m = 0; m < fold.modalities.size(); ++m) {
    t.modality_names.push_back(fold.modalities[m].modality);
    for (std::size_t i = 0; i < fold.test_ids.size(); ++i) {
      t.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = fold.modalities[m].test_risks.at(i);
    }
  }
  return t;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void fuse_fold(FoldResult& fold) {
  const RiskScoreTable t = score_table(fold);
  std::vector<double> p_val;
  for (const auto& m : fold.modalities) p_val.push_back(m.p_val);
  fold.weights = modality_weights(t.modality_names, std::move(p_val));
  fold.fused = to_vector(fuse_risks(t, fold.weights));
  fold.fused_uniform = to_vector(fuse_risks(t, uniform_weights(t.modality_names)));
}

FoldResult run_fold(const AlignedCohort& cohort, Endpoint endpoint, const FoldAssignment& folds, int fold,
                    const CvConfig& config, std::uint64_t master_seed) {
  FoldResult r;
  r.endpoint = endpoint;
  r.fold = fold;
  const auto train_rows = folds.train_rows(fold);
  const auto test_rows = folds.test_rows(fold);
  for (auto i : test_rows) r.test_ids.push_back(cohort.patient_ids[i]);
  std::vector<SurvivalOutcome> train_outcomes;
  for (auto i : train_rows) train_outcomes.push_back(cohort.outcomes[i]);
  const std::uint64_t seed = fold_seed(master_seed, endpoint, fold);

  for (std::size_t m = 0; m < cohort.modalities.size(); ++m) {
    const Modality& mod = cohort.modalities[m];
    try {
      if (count_events(train_outcomes) < 2) throw PreconditionError("training rows have fewer than 2 events");
      const std::uint64_t mseed = derive_seed(seed, {m});
      if (mod.is_table()) {
        r.modalities.push_back(tabular_modality_fold(mod.name, mod.table().select_rows(train_rows), train_outcomes,
                                                     mod.table().select_rows(test_rows), config, mseed));
      } else {
        std::vector<EmbeddingBag> train, test;
        for (auto i : train_rows) train.push_back(mod.bags()[i]);
        for (auto i : test_rows) test.push_back(mod.bags()[i]);
        r.modalities.push_back(bag_modality_fold(mod.name, train, train_outcomes, test, config, mseed));
      }
    } catch (const Error& e) {
      r.failed = true;
      r.failure = "modality '" + mod.name + "': " + e.what();
      r.modalities.clear();
      return r;
    }
  }
  try {
    fuse_fold(r);
  } catch (const Error& e) {
    r.failed = true;
    r.failure = std::string("fusion: ") + e.what();
    r.fused.clear();
    r.fused_uniform.clear();
  }
  return r;
}

void apply_global_weights(std::span<FoldResult> folds) {
  std::vector<ModalityWeights> per_fold;
  for (const auto& f : folds) per_fold.push_back(f.weights);
  const ModalityWeights global = average_weights(per_fold);
  for (auto& f : folds) {
    f.weights = global;
    f.fused = to_vector(fuse_risks(score_table(f), global));
  }
}

PooledPredictions aggregate(std::span<const FoldResult> folds, const AlignedCohort& cohort) {
  if (folds.empty()) throw PreconditionError("aggregate: no folds");
  PooledPredictions p;
  p.endpoint = folds.front().endpoint;
  for (const auto& m : folds.front().modalities) p.model_names.push_back(m.modality);
  p.model_names.push_back(kFusedModel);
  p.model_names.push_back(kFusedUniformModel);

  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < cohort.patient_ids.size(); ++i) row_of[cohort.patient_ids[i]] = i;
  std::set<std::string> seen;
  std::vector<std::vector<double>> rows;
  for (const auto& f : folds) {
    if (f.failed) throw PreconditionError("aggregate: fold " + std::to_string(f.fold) + " failed: " + f.failure);
    if (f.endpoint != p.endpoint) throw PreconditionError("aggregate: folds of different endpoints");
    for (std::size_t i = 0; i < f.test_ids.size(); ++i) {
      const auto& id = f.test_ids[i];
      if (!seen.insert(id).second) throw PreconditionError("aggregate: patient '" + id + "' appears in two folds");
      auto it = row_of.find(id);
      if (it == row_of.end()) throw PreconditionError("aggregate: unknown patient '" + id + "'");
      p.patient_ids.push_back(id);
      p.outcomes.push_back(cohort.outcomes[it->second]);
      p.fold.push_back(f.fold);
      std::vector<double> r;
      for (const auto& m : f.modalities) r.push_back(m.test_risks.at(i));
      r.push_back(f.fused.at(i));
      r.push_back(f.fused_uniform.at(i));
      if (r.size() != p.model_names.size()) throw PreconditionError("aggregate: folds disagree on modalities");
      rows.push_back(std::move(r));
    }
  }
  p.risks.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p.model_names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < rows[i].size(); ++k) {
      p.risks(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
  }
  return p;
}

EndpointReport evaluate_predictions(const PooledPredictions& pooled, const CvConfig& config,
                                    std::uint64_t master_seed) {
  EndpointReport rep;
  rep.endpoint = pooled.endpoint;
  rep.n_patients = pooled.patient_ids.size();
  const auto n_models = static_cast<Eigen::Index>(pooled.model_names.size());
  // Comparisons against the fused model are made only when it is present.
  const auto fused_it = std::find(pooled.model_names.begin(), pooled.model_names.end(), kFusedModel);
  const Eigen::Index fused_col =
      fused_it == pooled.model_names.end() ? -1 : static_cast<Eigen::Index>(fused_it - pooled.model_names.begin());
  auto column = [&](Eigen::Index k) {
    return std::vector<double>(pooled.risks.col(k).data(), pooled.risks.col(k).data() + pooled.risks.rows());
  };
  const std::vector<double> fused = fused_col >= 0 ? column(fused_col) : std::vector<double>{};

  for (Eigen::Index k = 0; k < n_models; ++k) {
    ModelMetrics mm;
    mm.model = pooled.model_names[static_cast<std::size_t>(k)];
    const std::vector<double> r = column(k);
    mm.cindex = bootstrap_cindex(r, pooled.outcomes, config.n_boot,
                                 derive_seed(master_seed, {0xB007, static_cast<std::uint64_t>(pooled.endpoint),
                                                           static_cast<std::uint64_t>(k)}));

    const auto groups = median_split(r);
    std::vector<SurvivalOutcome> low, high;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      (groups[i] == RiskGroup::kHigh ? high : low).push_back(pooled.outcomes[i]);
    }
    if (!low.empty()) mm.km_low = km_curve(low);
    if (!high.empty()) mm.km_high = km_curve(high);
    if (!low.empty() && !high.empty()) mm.logrank = logrank_test(high, low);

    for (double years : config.horizons_years) {
      HorizonMetrics hm;
      hm.years = years;
      const auto labels = horizon_labels(pooled.outcomes, years);
      std::vector<double> s, f;
      std::vector<int> y;
      for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        switch (labels.labels[i]) {
          case HorizonLabel::kExcluded:
            ++hm.n_excluded;
            continue;
          case HorizonLabel::kPositive:
            ++hm.n_positive;
            y.push_back(1);
            break;
          case HorizonLabel::kNegative:
            ++hm.n_negative;
            y.push_back(0);
            break;
        }
        s.push_back(r[i]);
        if (fused_col >= 0) f.push_back(fused[i]);
      }
      if (hm.n_positive > 0 && hm.n_negative > 0) {
        hm.auc = delong(s, std::nullopt, y);
        if (fused_col >= 0 && k != fused_col) hm.vs_fused = delong(s, std::span<const double>(f), y);
        hm.roc = roc_curve(s, y);
      }
      mm.horizons.push_back(std::move(hm));
    }
    rep.models.push_back(std::move(mm));
  }
  for (Eigen::Index k = 0; k < n_models && fused_col >= 0; ++k) {
    if (k == fused_col) continue;
    auto& mm = rep.models[static_cast<std::size_t>(k)];
    const auto& ref = rep.models[static_cast<std::size_t>(fused_col)].cindex.replicates;
    if (mm.cindex.replicates.size() >= 2 && ref.size() >= 2) mm.vs_fused = two_sample_t(mm.cindex.replicates, ref);
  }
  return rep;
}

bool CvRun::any_failed() const {
  return std::any_of(folds.begin(), folds.end(), [](const FoldResult& f) { return f.failed; });
}

CvRun run_cv(std::span<const std::pair<Endpoint, AlignedCohort>> cohorts, const CvConfig& config,
             std::uint64_t master_seed, int jobs) {
  CvRun run;
  struct Task {
    std::size_t cohort;
    int fold;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < cohorts.size(); ++c) {
    const auto& [endpoint, cohort] = cohorts[c];
    run.assignments.emplace_back(endpoint, kfold(cohort.size(), config.n_folds, derive_seed(master_seed, {0xF01D})));
    for (int f = 0; f < config.n_folds; ++f) tasks.push_back({c, f});
  }
  run.folds.resize(tasks.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < tasks.size();) {
      const auto& [endpoint, cohort] = cohorts[tasks[t].cohort];
      try {
        run.folds[t] = run_fold(cohort, endpoint, run.assignments[tasks[t].cohort].second, tasks[t].fold, config,
                                master_seed);
      } catch (const std::exception& e) {
        run.folds[t].endpoint = endpoint;
        run.folds[t].fold = tasks[t].fold;
        run.folds[t].failed = true;
        run.folds[t].failure = e.what();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::clamp<int>(jobs, 1, static_cast<int>(tasks.size())));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }

  for (std::size_t c = 0; c < cohorts.size(); ++c) {
    std::span<FoldResult> folds(run.folds.data() + c * static_cast<std::size_t>(config.n_folds),
                                static_cast<std::size_t>(config.n_folds));
    if (std::any_of(folds.begin(), folds.end(), [](const FoldResult& f) { return f.failed; })) continue;
    if (config.global_weights) apply_global_weights(folds);
    run.pooled.push_back(aggregate(folds, cohorts[c].second));
    run.reports.push_back(evaluate_predictions(run.pooled.back(), config, master_seed));
  }
  return run;
}

}  // namespace mmem
