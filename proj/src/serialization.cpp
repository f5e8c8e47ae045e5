#include "mmem/serialization.hpp"

#include "mmem/error.hpp"

namespace mmem {

using nlohmann::json;

namespace {

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void to_json(json& j, const DeepCoxConfig& c) {
  j = json{{"proj_dim", c.proj_dim},
           {"n_heads", c.n_heads},
           {"n_landmarks", c.n_landmarks},
           {"pinv_iters", c.pinv_iters},
           {"dropout", c.dropout},
           {"lr", c.lr},
           {"epochs", c.epochs},
           {"plateau_patience", c.plateau_patience},
           {"plateau_gamma", c.plateau_gamma},
           {"train_bag_cap", c.train_bag_cap},
           {"seed", c.seed},
           {"use_attention", c.use_attention}};
}

void from_json(const json& j, DeepCoxConfig& c) {
  j.at("proj_dim").get_to(c.proj_dim);
  j.at("n_heads").get_to(c.n_heads);
  j.at("n_landmarks").get_to(c.n_landmarks);
  j.at("pinv_iters").get_to(c.pinv_iters);
  j.at("dropout").get_to(c.dropout);
  j.at("lr").get_to(c.lr);
  j.at("epochs").get_to(c.epochs);
  j.at("plateau_patience").get_to(c.plateau_patience);
  j.at("plateau_gamma").get_to(c.plateau_gamma);
  j.at("train_bag_cap").get_to(c.train_bag_cap);
  j.at("seed").get_to(c.seed);
  j.at("use_attention").get_to(c.use_attention);
}

void to_json(json& j, const CoxModel& m) {
  j = json{{"feature_names", m.feature_names},
           {"beta", vec(m.beta)},
           {"baseline_cumhaz", {{"times", m.baseline_cumhaz.times}, {"values", m.baseline_cumhaz.values}}},
           {"converged", m.converged},
           {"ridge_fallback", m.ridge_fallback},
           {"ridge", m.ridge},
           {"final_loglik", m.final_loglik},
           {"n_iter", m.n_iter}};
}

void from_json(const json& j, CoxModel& m) {
  j.at("feature_names").get_to(m.feature_names);
  m.beta = to_eigen(j.at("beta").get<std::vector<double>>());
  if (static_cast<std::size_t>(m.beta.size()) != m.feature_names.size()) {
    throw DataError("cox model: beta and feature_names differ in length");
  }
  j.at("baseline_cumhaz").at("times").get_to(m.baseline_cumhaz.times);
  j.at("baseline_cumhaz").at("values").get_to(m.baseline_cumhaz.values);
  j.at("converged").get_to(m.converged);
  j.at("ridge_fallback").get_to(m.ridge_fallback);
  j.at("ridge").get_to(m.ridge);
  j.at("final_loglik").get_to(m.final_loglik);
  j.at("n_iter").get_to(m.n_iter);
}

void to_json(json& j, const PreprocessReport& r) {
  json imputed = json::array();
  for (const auto& v : r.imputed_values) {
    if (const double* d = std::get_if<double>(&v.value)) {
      imputed.push_back({{"column", v.column}, {"median", *d}});
    } else {
      imputed.push_back({{"column", v.column}, {"mode", std::get<std::string>(v.value)}});
    }
  }
  json enc = json::array();
  for (const auto& e : r.encoding_map) enc.push_back({{"column", e.column}, {"levels", e.levels}});
  json z = json::array();
  for (const auto& e : r.zscore.entries) {
    z.push_back({{"column", e.column}, {"mean", e.mean}, {"sd", e.sd}, {"scaled", e.scaled}});
  }
  json pruned = json::array();
  for (const auto& p : r.pruned_correlated) pruned.push_back({{"kept", p.kept}, {"dropped", p.dropped}, {"rho", p.rho}});
  json screened = json::array();
  for (const auto& s : r.screened) screened.push_back({{"column", s.column}, {"mean_cindex", optional_number(s.mean_cindex)}});
  j = json{{"input_columns", r.input_columns},
           {"dropped_missingness", r.dropped_missingness},
           {"imputed_values", imputed},
           {"encoding_map", enc},
           {"zscore", {{"entries", z}, {"dropped", r.zscore.dropped}}},
           {"pruned_correlated", pruned},
           {"screened", screened},
           {"ranked", r.ranked}};
}

void from_json(const json& j, PreprocessReport& r) {
  j.at("input_columns").get_to(r.input_columns);
  j.at("dropped_missingness").get_to(r.dropped_missingness);
  r.imputed_values.clear();
  for (const auto& v : j.at("imputed_values")) {
    ImputedValue iv;
    iv.column = v.at("column").get<std::string>();
    if (v.contains("median")) {
      iv.value = v.at("median").get<double>();
    } else {
      iv.value = v.at("mode").get<std::string>();
    }
    r.imputed_values.push_back(std::move(iv));
  }
  r.encoding_map.clear();
  for (const auto& e : j.at("encoding_map")) {
    r.encoding_map.push_back({e.at("column").get<std::string>(), e.at("levels").get<std::vector<std::string>>()});
  }
  r.zscore.entries.clear();
  for (const auto& e : j.at("zscore").at("entries")) {
    r.zscore.entries.push_back({e.at("column").get<std::string>(), e.at("mean").get<double>(),
                                e.at("sd").get<double>(), e.at("scaled").get<bool>()});
  }
  j.at("zscore").at("dropped").get_to(r.zscore.dropped);
  r.pruned_correlated.clear();
  for (const auto& p : j.at("pruned_correlated")) {
    r.pruned_correlated.push_back(
        {p.at("kept").get<std::string>(), p.at("dropped").get<std::string>(), p.at("rho").get<double>()});
  }
  r.screened.clear();
  for (const auto& s : j.at("screened")) {
    ScreenScore sc;
    sc.column = s.at("column").get<std::string>();
    if (!s.at("mean_cindex").is_null()) sc.mean_cindex = s.at("mean_cindex").get<double>();
    r.screened.push_back(std::move(sc));
  }
  j.at("ranked").get_to(r.ranked);
}

void to_json(json& j, const SelectionTrace& t) {
  json steps = json::array();
  for (const auto& s : t.iterations) steps.push_back({{"added_feature", s.added_feature}, {"mean_val_cindex", s.mean_val_cindex}});
  j = json{{"iterations", steps},
           {"optimal_set", t.optimal_set},
           {"best_val_cindex", t.best_val_cindex},
           {"stop_reason", std::string(to_string(t.stop_reason))},
           {"warnings", t.warnings}};
}

void to_json(json& j, const TileSet& t) {
  json coords = json::array();
  for (const auto& [x, y] : t.coords) coords.push_back({x, y});
  j = json{{"tile_size", t.tile_size},
           {"threshold_used", t.threshold_used},
           {"coords", coords},
           {"tissue_fraction", t.tissue_fraction}};
}

void from_json(const json& j, TileSet& t) {
  j.at("tile_size").get_to(t.tile_size);
  j.at("threshold_used").get_to(t.threshold_used);
  t.coords.clear();
  for (const auto& c : j.at("coords")) t.coords.emplace_back(c.at(0).get<int>(), c.at(1).get<int>());
  j.at("tissue_fraction").get_to(t.tissue_fraction);
}

void to_json(json& j, const ModalityWeights& w) {
  j = json{{"modality_names", w.modality_names},
           {"weights", w.weights},
           {"source", std::string(to_string(w.source))},
           {"p_val", w.p_val}};
}

void from_json(const json& j, ModalityWeights& w) {
  j.at("modality_names").get_to(w.modality_names);
  j.at("weights").get_to(w.weights);
  const auto src = j.at("source").get<std::string>();
  if (src == "uniform") {
    w.source = WeightSource::kUniform;
  } else if (src == "validation-performance") {
    w.source = WeightSource::kValidation;
  } else {
    throw DataError("unknown weight source '" + src + "'");
  }
  j.at("p_val").get_to(w.p_val);
}

void to_json(json& j, const FoldAssignment& a) {
  j = json{{"n_folds", a.n_folds}, {"seed", a.seed}, {"fold_of", a.fold_of}};
}

void to_json(json& j, const ModalityFoldResult& r) {
  j = json{{"modality", r.modality}, {"p_val", r.p_val}, {"test_risks", r.test_risks}};
  if (r.preprocess) j["preprocess"] = *r.preprocess;
  if (r.selection) j["selection"] = *r.selection;
  if (r.cox) j["cox_model"] = *r.cox;
  if (r.deep_best_epoch) j["deep_best_epoch"] = *r.deep_best_epoch;
  if (r.deep_best_val_loss) j["deep_best_val_loss"] = *r.deep_best_val_loss;
}

void to_json(json& j, const FoldResult& r) {
  j = json{{"endpoint", std::string(to_string(r.endpoint))},
           {"fold", r.fold},
           {"test_ids", r.test_ids},
           {"failed", r.failed}};
  if (r.failed) {
    j["failure"] = r.failure;
    return;
  }
  j["modalities"] = r.modalities;
  j["weights"] = r.weights;
  j["fused"] = r.fused;
  j["fused_uniform"] = r.fused_uniform;
}

}  // namespace mmem
