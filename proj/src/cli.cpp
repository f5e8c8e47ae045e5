#include "mmem/cli.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "mmem/cvharness.hpp"
#include "mmem/error.hpp"
#include "mmem/report.hpp"
#include "mmem/run_config.hpp"
#include "mmem/serialization.hpp"
#include "mmem/synthgen.hpp"
#include "mmem/text.hpp"
#include "mmem/wsiprep.hpp"

namespace mmem {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool out_required) {
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--jobs", f.jobs, "Parallel workers")->check(CLI::PositiveNumber);
  auto* o = cmd->add_option("--out", f.out, "Output directory");
  if (out_required) o->required();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << content;
  if (!f) throw Error("error while writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string file_stem_safe(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  s.erase(std::unique(s.begin(), s.end(), [](char a, char b) { return a == '_' && b == '_'; }), s.end());
  while (!s.empty() && s.back() == '_') s.pop_back();
  return s;
}

// Rows of `table` that have an outcome, in table order.
std::pair<FeatureTable, std::vector<SurvivalOutcome>> with_outcomes(const CohortFile& c) {
  std::vector<std::size_t> rows;
  std::vector<SurvivalOutcome> out;
  for (std::size_t i = 0; i < c.features.patient_ids().size(); ++i) {
    auto it = c.outcomes.find(c.features.patient_ids()[i]);
    if (it == c.outcomes.end()) continue;
    rows.push_back(i);
    out.push_back(it->second);
  }
  return {c.features.select_rows(rows), std::move(out)};
}

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
  };
  const auto threads = static_cast<std::size_t>(std::clamp<int>(jobs, 1, static_cast<int>(std::max<std::size_t>(n, 1))));
  if (threads <= 1) {
    worker();
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
}

// ------------------------------------------------------------------ synth

int cmd_synth(const std::optional<std::string>& spec_path, const CommonFlags& flags, std::ostream& out) {
  SynthSpec spec = spec_path ? load_synth_spec(*spec_path) : default_synth_spec();
  if (flags.seed) spec.seed = *flags.seed;
  spec.validate();
  const fs::path dir = flags.out;
  const SynthCohort cohort = gen_multimodal_cohort(spec);
  auto written = write_synth_cohort(dir, cohort);

  RunConfig cfg;
  cfg.seed = spec.seed;
  cfg.outcomes = "outcomes.csv";
  for (const auto& m : cohort.modalities) {
    cfg.modalities.push_back({m.name, m.is_table() ? ModalityKind::kTable : ModalityKind::kBags,
                              m.is_table() ? m.name + ".csv" : m.name + ".emb"});
  }
  write_file(dir / "run.cfg", serialize_run_config(cfg));
  write_file(dir / "synth.cfg", serialize_synth_spec(spec));
  out << "wrote " << written.size() << " data files, run.cfg and synth.cfg to " << dir.string() << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------ prep-wsi

int cmd_prep_wsi(const std::string& image_dir, double min_tissue, std::optional<int> threshold, bool write_tiles,
                 const CommonFlags& flags, std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(image_dir)) throw ConfigError("image directory not found: " + image_dir);
  if (!(min_tissue >= 0.0 && min_tissue <= 1.0)) throw ConfigError("--min-tissue must be in [0, 1]");
  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(image_dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".tif" || ext == ".tiff") images.push_back(e.path());
  }
  std::sort(images.begin(), images.end());
  const fs::path dir = flags.out;
  fs::create_directories(dir);

  std::vector<std::string> errors(images.size());
  std::vector<std::size_t> tile_counts(images.size(), 0);
  TissueMaskOptions opts;
  opts.manual_threshold = threshold;
  parallel_for(images.size(), flags.jobs, [&](std::size_t i) {
    try {
      const RgbImage img = read_image(images[i]);
      const TissueMask mask = tissue_mask(img, opts);
      const TileSet tiles = extract_tiles(mask, min_tissue);
      tile_counts[i] = tiles.coords.size();
      const std::string stem = images[i].stem().string();
      json j = tiles;
      j["image"] = images[i].filename().string();
      j["width"] = img.width;
      j["height"] = img.height;
      write_json(dir / (stem + ".tiles.json"), j);
      if (write_tiles) {
        for (const auto& [x, y] : tiles.coords) {
          write_png(dir / stem / (std::to_string(x) + "_" + std::to_string(y) + ".png"),
                    resize_tile(img.crop(x, y, tiles.tile_size, tiles.tile_size)));
        }
      }
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  json failures = json::array();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (errors[i].empty()) {
      out << images[i].filename().string() << ": " << tile_counts[i] << " tiles\n";
    } else {
      err << images[i].filename().string() << ": " << errors[i] << '\n';
      failures.push_back({{"image", images[i].filename().string()}, {"error", errors[i]}});
    }
  }
  write_json(dir / "errors.json", failures);
  return failures.empty() ? kExitOk : kExitPartialInput;
}

// ------------------------------------------------------------------ cv

std::vector<Modality> load_modalities(const RunConfig& cfg) {
  std::vector<Modality> mods;
  for (const auto& m : cfg.modalities) {
    const fs::path p = cfg.resolve(m.path);
    if (m.kind == ModalityKind::kTable) {
      mods.push_back({m.name, parse_feature_csv(p)});
    } else {
      mods.push_back({m.name, parse_embedding_container(p)});
    }
  }
  return mods;
}

int cmd_cv(const std::string& config_path, const CommonFlags& flags, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_run_config(config_path);
  if (flags.seed) cfg.seed = *flags.seed;
  cfg.check_paths();
  const fs::path dir = flags.out.empty() ? cfg.resolve(cfg.output_dir) : fs::path(flags.out);

  const std::vector<Modality> mods = load_modalities(cfg);
  std::vector<std::pair<Endpoint, AlignedCohort>> cohorts;
  for (Endpoint ep : cfg.endpoints) {
    const CohortFile outcomes = parse_cohort_csv(cfg.resolve(cfg.outcomes), ep, cfg.outcome_policy);
    cohorts.emplace_back(ep, align_modalities(mods, outcomes.outcomes));
  }

  const CvRun run = run_cv(cohorts, cfg.cv, cfg.seed, flags.jobs);

  // Manifest: everything needed to identify the run, nothing schedule-dependent.
  RunConfig canonical = cfg;
  const std::string config_text = serialize_run_config(canonical);
  json manifest{{"schema", "mmem-manifest/1"},
                {"command", "cv"},
                {"seed", cfg.seed},
                {"config_digest", "sha256:" + sha256_hex(config_text)},
                {"config", config_text}};
  json assignments = json::object();
  for (std::size_t c = 0; c < cohorts.size(); ++c) {
    const auto& [ep, fa] = run.assignments[c];
    json folds = json::object();
    for (std::size_t i = 0; i < cohorts[c].second.patient_ids.size(); ++i) {
      folds[cohorts[c].second.patient_ids[i]] = fa.fold_of[i];
    }
    assignments[std::string(to_string(ep))] = {{"n_folds", fa.n_folds}, {"seed", fa.seed},
                                               {"n_patients", cohorts[c].second.size()}, {"fold_of", folds}};
  }
  manifest["fold_assignment"] = assignments;
  json failed = json::array();
  for (const auto& f : run.folds) {
    write_json(dir / "folds" / (std::string(to_string(f.endpoint)) + "_fold" + std::to_string(f.fold) + ".json"), f);
    if (f.failed) {
      failed.push_back({{"endpoint", std::string(to_string(f.endpoint))}, {"fold", f.fold}, {"cause", f.failure}});
    }
  }
  manifest["failed_folds"] = failed;
  write_json(dir / "manifest.json", manifest);

  for (const auto& p : run.pooled) {
    std::ostringstream csv;
    write_predictions_csv(csv, p);
    write_file(dir / ("predictions_" + std::string(to_string(p.endpoint)) + ".csv"), csv.str());
  }
  write_json(dir / "report.json", metrics_report(run.reports));
  {
    std::ostringstream km, roc;
    write_km_csv(km, run.reports);
    write_roc_csv(roc, run.reports);
    write_file(dir / "km.csv", km.str());
    write_file(dir / "roc.csv", roc.str());
  }
  if (cfg.write_svg) {
    for (const auto& rep : run.reports) {
      const std::string ep(to_string(rep.endpoint));
      for (const auto& m : rep.models) {
        write_file(dir / "plots" / ("km_" + ep + "_" + file_stem_safe(m.model) + ".svg"),
                   km_svg(m, ep + ": " + m.model));
      }
      for (double h : cfg.cv.horizons_years) {
        write_file(dir / "plots" / ("roc_" + ep + "_" + format_double(h) + "y.svg"),
                   roc_svg(rep, h, ep + ": " + format_double(h) + "-year ROC"));
      }
    }
  }

  for (const auto& rep : run.reports) {
    for (const auto& m : rep.models) {
      out << to_string(rep.endpoint) << '\t' << m.model << "\tC-index " << format_double(m.cindex.point) << " ("
          << format_double(m.cindex.lo) << ", " << format_double(m.cindex.hi) << ")\n";
    }
  }
  if (!failed.empty()) {
    for (const auto& f : failed) {
      err << "fold " << f["endpoint"].get<std::string>() << "/" << f["fold"].get<int>()
          << " failed: " << f["cause"].get<std::string>() << '\n';
    }
    return kExitRuntime;
  }
  return kExitOk;
}

// ------------------------------------------------------------------ thin commands

PreprocessConfig preprocess_config(const std::optional<std::string>& config_path) {
  return config_path ? load_run_config(*config_path).cv.preprocess : PreprocessConfig{};
}

int cmd_preprocess(const std::string& cohort_path, const std::string& endpoint,
                   const std::optional<std::string>& config_path, const CommonFlags& flags, std::ostream& out) {
  const Endpoint ep = parse_endpoint(endpoint);
  const CohortFile cohort = parse_cohort_csv(cohort_path, ep);
  auto [table, outcomes] = with_outcomes(cohort);
  const PreprocessResult res = fit_preprocess(table, outcomes, preprocess_config(config_path), flags.seed.value_or(0));
  const fs::path dir = flags.out;
  write_json(dir / "preprocess_report.json", res.report);
  std::map<std::string, SurvivalOutcome> o;
  for (std::size_t i = 0; i < outcomes.size(); ++i) o[table.patient_ids()[i]] = outcomes[i];
  std::ostringstream csv;
  write_cohort_csv(csv, res.table, ep == Endpoint::kOs ? o : std::map<std::string, SurvivalOutcome>{},
                   ep == Endpoint::kDfs ? o : std::map<std::string, SurvivalOutcome>{});
  write_file(dir / "preprocessed.csv", csv.str());
  out << res.report.ranked.size() << " of " << res.report.input_columns.size() << " columns ranked\n";
  return kExitOk;
}

int cmd_select(const std::string& cohort_path, const std::string& report_path, const std::string& endpoint,
               int max_features, const std::optional<std::string>& config_path, const CommonFlags& flags,
               std::ostream& out) {
  const Endpoint ep = parse_endpoint(endpoint);
  const PreprocessReport report = read_json(report_path).get<PreprocessReport>();
  const CohortFile cohort = parse_cohort_csv(cohort_path, ep, OutcomePolicy::kSelectedEndpointOnly);
  auto [table, outcomes] = with_outcomes(cohort);
  const PreprocessConfig pc = preprocess_config(config_path);
  const auto splits = make_sub_splits(outcomes, pc.n_splits, pc.val_fraction, flags.seed.value_or(0),
                                      pc.max_split_retries);
  ForwardSelectOptions opts;
  opts.max_features = max_features;
  opts.cox = pc.cox;
  auto [trace, model] = forward_select(table, outcomes, report.ranked, splits, opts);
  write_json(fs::path(flags.out) / "selection.json", trace);
  write_json(fs::path(flags.out) / "cox_model.json", model);
  out << "selected " << trace.optimal_set.size() << " features, validation C-index "
      << format_double(trace.best_val_cindex) << '\n';
  return kExitOk;
}

int cmd_fit_cox(const std::string& cohort_path, const std::string& endpoint, const std::vector<std::string>& features,
                const std::string& ties, const CommonFlags& flags, std::ostream& out) {
  const Endpoint ep = parse_endpoint(endpoint);
  const CohortFile cohort = parse_cohort_csv(cohort_path, ep, OutcomePolicy::kSelectedEndpointOnly);
  auto [table, outcomes] = with_outcomes(cohort);
  std::vector<std::string> names = features.empty() ? table.column_names() : features;
  CoxFitOptions opts;
  if (ties == "breslow") {
    opts.ties = TieMethod::kBreslow;
  } else if (ties != "efron") {
    throw ConfigError("--ties must be efron or breslow");
  }
  const CoxModel model = fit_cox(table.select_columns(std::span<const std::string>(names)), outcomes, opts);
  write_json(fs::path(flags.out) / "cox_model.json", model);
  const Eigen::VectorXd risk = predict_risk(model, table);
  std::ostringstream csv;
  csv << "patient_id,risk\n";
  for (Eigen::Index i = 0; i < risk.size(); ++i) {
    csv << csv_escape(table.patient_ids()[static_cast<std::size_t>(i)]) << ',' << format_double(risk(i)) << '\n';
  }
  write_file(fs::path(flags.out) / "risks.csv", csv.str());
  out << "fit " << names.size() << " covariates, log partial likelihood " << format_double(model.final_loglik)
      << (model.ridge_fallback ? " (ridge fallback)" : "") << '\n';
  return kExitOk;
}

int cmd_fit_deep(const std::string& bags_path, const std::string& outcomes_path, const std::string& endpoint,
                 const std::optional<std::string>& config_path, const CommonFlags& flags, std::ostream& out) {
  const Endpoint ep = parse_endpoint(endpoint);
  CvConfig cv = config_path ? load_run_config(*config_path).cv : CvConfig{};
  const auto bags = parse_embedding_container(fs::path(bags_path));
  const CohortFile cohort = parse_cohort_csv(outcomes_path, ep, OutcomePolicy::kSelectedEndpointOnly);
  const AlignedCohort aligned = align_modalities({Modality{"bags", bags}}, cohort.outcomes);

  const std::uint64_t seed = flags.seed.value_or(0);
  const std::size_t n = aligned.size();
  const auto n_val = static_cast<std::size_t>(std::max(1.0, std::round(cv.deep_val_fraction * static_cast<double>(n))));
  Rng rng(derive_seed(seed, {1}));
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::vector<EmbeddingBag> fit, val;
  std::vector<SurvivalOutcome> fit_o, val_o;
  for (int attempt = 0; attempt < cv.preprocess.max_split_retries; ++attempt) {
    rng.shuffle(perm);
    fit.clear();
    val.clear();
    fit_o.clear();
    val_o.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const bool is_val = std::find(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val), i) !=
                          perm.begin() + static_cast<std::ptrdiff_t>(n_val);
      (is_val ? val : fit).push_back(aligned.modalities[0].bags()[i]);
      (is_val ? val_o : fit_o).push_back(aligned.outcomes[i]);
    }
    if (count_events(val_o) >= 1 && count_events(fit_o) >= 2) break;
  }
  DeepCoxConfig deep = cv.deep;
  deep.seed = derive_seed(seed, {2});
  const DeepCoxTrainResult res = train_deep_cox(fit, fit_o, deep, val, val_o);
  fs::create_directories(flags.out);
  write_checkpoint(fs::path(flags.out) / "deepcox.bin", res.model);
  json hist = json::array();
  for (const auto& h : res.history) {
    hist.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_loss", h.val_loss}, {"lr", h.lr}});
  }
  write_json(fs::path(flags.out) / "training.json", {{"best_epoch", res.best_epoch},
                                                     {"best_val_loss", res.best_val_loss},
                                                     {"val_cindex", res.val_cindex},
                                                     {"history", hist}});
  out << "best epoch " << res.best_epoch << ", validation C-index " << format_double(res.val_cindex) << '\n';
  return kExitOk;
}

struct ScoreCsv {
  std::vector<std::string> ids;
  std::vector<std::string> columns;
  Eigen::MatrixXd values;
  std::vector<SurvivalOutcome> outcomes;  // filled when time/event columns exist
};

ScoreCsv read_score_csv(const fs::path& path, bool need_outcomes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const auto header = split_csv_record(line);
  if (header.empty() || header[0] != kPatientIdColumn) throw DataError(path.string() + ": first column must be patient_id");
  std::vector<std::size_t> score_cols;
  std::optional<std::size_t> t_col, e_col;
  ScoreCsv s;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c] == "time") {
      t_col = c;
    } else if (header[c] == "event") {
      e_col = c;
    } else if (header[c] != "fold") {
      score_cols.push_back(c);
      s.columns.push_back(header[c]);
    }
  }
  if (need_outcomes && (!t_col || !e_col)) throw DataError(path.string() + ": time and event columns are required");
  std::vector<std::vector<double>> rows;
  for (std::size_t ln = 2; std::getline(in, line); ++ln) {
    if (trim(line).empty()) continue;
    const auto f = split_csv_record(line);
    if (f.size() != header.size()) throw DataError(path.string() + ": line " + std::to_string(ln) + " has the wrong field count");
    s.ids.push_back(f[0]);
    std::vector<double> r;
    for (auto c : score_cols) {
      auto v = parse_double(f[c]);
      if (!v) throw DataError(path.string() + ": line " + std::to_string(ln) + ": '" + f[c] + "' is not a number");
      r.push_back(*v);
    }
    rows.push_back(std::move(r));
    if (t_col && e_col) {
      auto t = parse_double(f[*t_col]);
      auto e = parse_double(f[*e_col]);
      if (!t || !e || (*e != 0.0 && *e != 1.0)) throw DataError(path.string() + ": line " + std::to_string(ln) + ": bad outcome");
      s.outcomes.push_back({*t, *e == 1.0});
    }
  }
  s.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(score_cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < rows[i].size(); ++k) s.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  }
  return s;
}

int cmd_evaluate(const std::string& predictions, const std::string& endpoint, int n_boot, const CommonFlags& flags,
                 std::ostream& out) {
  const ScoreCsv s = read_score_csv(predictions, true);
  PooledPredictions p;
  p.endpoint = parse_endpoint(endpoint);
  p.patient_ids = s.ids;
  p.outcomes = s.outcomes;
  p.fold.assign(s.ids.size(), 0);
  p.model_names = s.columns;
  p.risks = s.values;
  CvConfig cfg;
  cfg.n_boot = n_boot;
  const EndpointReport rep = evaluate_predictions(p, cfg, flags.seed.value_or(0));
  const std::vector<EndpointReport> reps{rep};
  write_json(fs::path(flags.out) / "report.json", metrics_report(reps));
  std::ostringstream km, roc;
  write_km_csv(km, reps);
  write_roc_csv(roc, reps);
  write_file(fs::path(flags.out) / "km.csv", km.str());
  write_file(fs::path(flags.out) / "roc.csv", roc.str());
  for (const auto& m : rep.models) out << m.model << "\tC-index " << format_double(m.cindex.point) << '\n';
  return kExitOk;
}

int cmd_fuse(const std::string& scores_path, const std::string& p_val, bool uniform, const CommonFlags& flags,
             std::ostream& out) {
  const ScoreCsv s = read_score_csv(scores_path, false);
  RiskScoreTable t{s.ids, s.columns, s.values};
  ModalityWeights w;
  if (uniform) {
    w = uniform_weights(s.columns);
  } else {
    std::vector<double> p;
    for (const auto& v : split(p_val, ',')) {
      auto d = parse_double(v);
      if (!d) throw ConfigError("--p-val: '" + v + "' is not a number");
      p.push_back(*d);
    }
    if (p.size() != s.columns.size()) throw ConfigError("--p-val needs one value per score column");
    w = modality_weights(s.columns, std::move(p));
  }
  const Eigen::VectorXd fused = fuse_risks(t, w);
  std::ostringstream csv;
  csv << "patient_id,fused\n";
  for (std::size_t i = 0; i < s.ids.size(); ++i) csv << csv_escape(s.ids[i]) << ',' << format_double(fused(static_cast<Eigen::Index>(i))) << '\n';
  write_file(fs::path(flags.out) / "fused.csv", csv.str());
  write_json(fs::path(flags.out) / "weights.json", w);
  out << "fused " << s.columns.size() << " score columns for " << s.ids.size() << " patients\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal survival ensemble toolkit"};
  app.require_subcommand(1);

  CommonFlags synth_f, prep_f, cv_f, pre_f, sel_f, cox_f, deep_f, eval_f, fuse_f;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic multimodal cohort");
  std::optional<std::string> synth_spec;
  synth->add_option("spec", synth_spec, "Synthetic cohort spec file (default spec if omitted)");
  add_common(synth, synth_f, true);

  auto* prep = app.add_subcommand("prep-wsi", "Tissue masks and tile grids for a directory of images");
  std::string image_dir;
  double min_tissue = 0.5;
  std::optional<int> threshold;
  bool write_tiles = false;
  prep->add_option("images", image_dir, "Directory of PNG/TIFF images")->required();
  prep->add_option("--min-tissue", min_tissue, "Minimum tissue fraction per tile");
  prep->add_option("--threshold", threshold, "Manual saturation threshold (0-255)")->check(CLI::Range(0, 255));
  prep->add_flag("--write-tiles", write_tiles, "Also write 224x224 tile images");
  add_common(prep, prep_f, true);

  auto* cv = app.add_subcommand("cv", "Cross-validated multimodal ensemble");
  std::string cv_config;
  cv->add_option("config", cv_config, "Run configuration file")->required();
  add_common(cv, cv_f, false);

  std::string endpoint = "os";
  std::optional<std::string> module_config;

  auto* pre = app.add_subcommand("preprocess", "Fit the preprocessing pipeline on a cohort CSV");
  std::string pre_cohort;
  pre->add_option("cohort", pre_cohort, "Cohort CSV")->required();
  pre->add_option("--endpoint", endpoint, "os or dfs");
  pre->add_option("--config", module_config, "Run configuration supplying preprocessing parameters");
  add_common(pre, pre_f, true);

  auto* sel = app.add_subcommand("select", "Forward feature selection");
  std::string sel_cohort, sel_report;
  int max_features = 20;
  sel->add_option("cohort", sel_cohort, "Preprocessed cohort CSV")->required();
  sel->add_option("--report", sel_report, "Preprocessing report JSON (ranked candidates)")->required();
  sel->add_option("--endpoint", endpoint, "os or dfs");
  sel->add_option("--max-features", max_features, "Feature cap")->check(CLI::PositiveNumber);
  sel->add_option("--config", module_config, "Run configuration supplying split parameters");
  add_common(sel, sel_f, true);

  auto* cox = app.add_subcommand("fit-cox", "Fit a Cox proportional hazards model");
  std::string cox_cohort, ties = "efron";
  std::vector<std::string> features;
  cox->add_option("cohort", cox_cohort, "Cohort CSV")->required();
  cox->add_option("--endpoint", endpoint, "os or dfs");
  cox->add_option("--features", features, "Covariates (default: all columns)")->delimiter(',');
  cox->add_option("--ties", ties, "efron or breslow");
  add_common(cox, cox_f, true);

  auto* deep = app.add_subcommand("fit-deep", "Train the deep Cox model on embedding bags");
  std::string deep_bags, deep_outcomes;
  deep->add_option("bags", deep_bags, "Embedding container")->required();
  deep->add_option("--outcomes", deep_outcomes, "Cohort CSV with outcomes")->required();
  deep->add_option("--endpoint", endpoint, "os or dfs");
  deep->add_option("--config", module_config, "Run configuration supplying deep.* parameters");
  add_common(deep, deep_f, true);

  auto* eval = app.add_subcommand("evaluate", "Metrics for a predictions CSV");
  std::string eval_pred;
  int n_boot = 1000;
  eval->add_option("predictions", eval_pred, "CSV: patient_id, score columns, time, event")->required();
  eval->add_option("--endpoint", endpoint, "os or dfs");
  eval->add_option("--n-boot", n_boot, "Bootstrap replicates")->check(CLI::PositiveNumber);
  add_common(eval, eval_f, true);

  auto* fuse = app.add_subcommand("fuse", "Weighted late fusion of risk scores");
  std::string fuse_scores, p_val;
  bool uniform = false;
  fuse->add_option("scores", fuse_scores, "CSV: patient_id, one column per modality")->required();
  auto* pv = fuse->add_option("--p-val", p_val, "Comma-separated validation C-index per modality");
  fuse->add_flag("--uniform", uniform, "Equal weights")->excludes(pv);
  add_common(fuse, fuse_f, true);

  std::vector<std::string> argv_store{"mmem"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_spec, synth_f, out);
    if (prep->parsed()) return cmd_prep_wsi(image_dir, min_tissue, threshold, write_tiles, prep_f, out, err);
    if (cv->parsed()) return cmd_cv(cv_config, cv_f, out, err);
    if (pre->parsed()) return cmd_preprocess(pre_cohort, endpoint, module_config, pre_f, out);
    if (sel->parsed()) return cmd_select(sel_cohort, sel_report, endpoint, max_features, module_config, sel_f, out);
    if (cox->parsed()) return cmd_fit_cox(cox_cohort, endpoint, features, ties, cox_f, out);
    if (deep->parsed()) return cmd_fit_deep(deep_bags, deep_outcomes, endpoint, module_config, deep_f, out);
    if (eval->parsed()) return cmd_evaluate(eval_pred, endpoint, n_boot, eval_f, out);
    if (fuse->parsed()) return cmd_fuse(fuse_scores, p_val, uniform, fuse_f, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitPartialInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace mmem
