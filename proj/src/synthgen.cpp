#include "mmem/synthgen.hpp"

#include <cmath>
#include <fstream>

#include "mmem/error.hpp"
#include "mmem/random.hpp"

namespace mmem {

double draw_event_time(double lambda, double eta, double u) {
  // u in [0,1); 1 - u avoids log(0).
  return -std::log(1.0 - u) / (lambda * std::exp(eta));
}

std::string synth_patient_id(std::size_t i, std::size_t n) {
  const std::size_t width = std::max<std::size_t>(4, std::to_string(n).size());
  std::string digits = std::to_string(i + 1);
  return "P" + std::string(width - digits.size(), '0') + digits;
}

namespace {

std::vector<std::string> make_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(synth_patient_id(i, n));
  return ids;
}

SurvivalOutcome draw_outcome(double lambda, double eta, double c_max, Rng& rng) {
  const double t = draw_event_time(lambda, eta, rng.uniform());
  const double c = std::isinf(c_max) ? std::numeric_limits<double>::infinity() : rng.uniform(0.0, c_max);
  return t <= c ? SurvivalOutcome{t, true} : SurvivalOutcome{c, false};
}

}  // namespace

LinearCohort gen_linear_cox_cohort(const LinearCohortSpec& spec) {
  if (spec.n_patients == 0) throw PreconditionError("synth: n_patients must be positive");
  if (!(spec.lambda > 0.0) || !(spec.c_max > 0.0)) throw PreconditionError("synth: lambda and c_max must be positive");
  const auto p = static_cast<Eigen::Index>(spec.beta.size()) + spec.n_noise;
  const auto n = static_cast<Eigen::Index>(spec.n_patients);
  Rng xr(derive_seed(spec.seed, {1}));
  Rng tr(derive_seed(spec.seed, {2}));
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = xr.normal();
  }
  LinearCohort out;
  out.eta = Eigen::VectorXd::Zero(n);
  for (std::size_t j = 0; j < spec.beta.size(); ++j) out.eta += spec.beta[j] * x.col(static_cast<Eigen::Index>(j));
  for (Eigen::Index i = 0; i < n; ++i) out.outcomes.push_back(draw_outcome(spec.lambda, out.eta(i), spec.c_max, tr));
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  out.features = FeatureTable::numeric(make_ids(spec.n_patients), std::move(names), std::move(x));
  return out;
}

void SynthSpec::validate() const {
  if (n_patients == 0) throw ConfigError("synth: n_patients must be positive");
  if (modalities.empty() && !bags) throw ConfigError("synth: at least one modality is required");
  if (!(lambda > 0.0)) throw ConfigError("synth: lambda must be positive");
  if (!(c_max > 0.0)) throw ConfigError("synth: c_max must be positive");
  if (!(dfs_rate_factor > 0.0)) throw ConfigError("synth: dfs_rate_factor must be positive");
  for (const auto& m : modalities) {
    if (m.name.empty()) throw ConfigError("synth: modality without a name");
    if (m.n_noise < 0 || m.n_categorical_noise < 0) throw ConfigError("synth: negative noise column count");
    if (!(m.missing_rate >= 0.0 && m.missing_rate < 1.0)) throw ConfigError("synth: missing_rate must be in [0, 1)");
  }
  if (bags) {
    if (bags->min_tiles < 1 || bags->max_tiles < bags->min_tiles) throw ConfigError("synth: bad bag size range");
    if (bags->dim < 1) throw ConfigError("synth: bag dimension must be positive");
    if (!(bags->tile_noise >= 0.0)) throw ConfigError("synth: tile_noise must be >= 0");
  }
}

std::vector<EmbeddingBag> gen_bags(const BagSpec& spec, std::span<const std::string> patient_ids,
                                   std::span<const double> planted, std::uint64_t seed) {
  if (patient_ids.size() != planted.size()) throw PreconditionError("gen_bags: id/planted count mismatch");
  std::vector<EmbeddingBag> bags;
  for (std::size_t i = 0; i < patient_ids.size(); ++i) {
    Rng rng(derive_seed(seed, {i}));
    const auto span = static_cast<std::size_t>(spec.max_tiles - spec.min_tiles + 1);
    const Eigen::Index n_tiles = spec.min_tiles + static_cast<Eigen::Index>(rng.index(span));
    Eigen::VectorXd centre(spec.dim);
    centre(0) = planted[i];
    for (Eigen::Index d = 1; d < spec.dim; ++d) centre(d) = rng.normal();
    EmbeddingBag bag;
    bag.patient_id = patient_ids[i];
    bag.vectors.resize(n_tiles, spec.dim);
    for (Eigen::Index t = 0; t < n_tiles; ++t) {
      for (Eigen::Index d = 0; d < spec.dim; ++d) {
        const double noise = spec.tile_noise > 0.0 ? spec.tile_noise * rng.normal() : 0.0;
        bag.vectors(t, d) = static_cast<float>(centre(d) + noise);
      }
    }
    if (spec.write_coords) {
      TileCoords c(n_tiles, 2);
      for (Eigen::Index t = 0; t < n_tiles; ++t) {
        c(t, 0) = static_cast<std::int32_t>((t % 8) * 512);
        c(t, 1) = static_cast<std::int32_t>((t / 8) * 512);
      }
      bag.tile_coords = std::move(c);
    }
    bags.push_back(std::move(bag));
  }
  return bags;
}

SynthCohort gen_multimodal_cohort(const SynthSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n_patients);
  const auto n_mod = static_cast<Eigen::Index>(spec.modalities.size()) + (spec.bags ? 1 : 0);
  SynthCohort out;
  out.patient_ids = make_ids(spec.n_patients);

  Rng pr(derive_seed(spec.seed, {1}));
  out.planted.resize(n, n_mod);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index m = 0; m < n_mod; ++m) out.planted(i, m) = pr.normal();
  }
  out.eta = Eigen::VectorXd::Zero(n);
  for (std::size_t m = 0; m < spec.modalities.size(); ++m) {
    out.eta += spec.modalities[m].signal_beta * out.planted.col(static_cast<Eigen::Index>(m));
  }
  if (spec.bags) out.eta += spec.bags->signal_beta * out.planted.col(n_mod - 1);

  Rng osr(derive_seed(spec.seed, {2}));
  Rng dfr(derive_seed(spec.seed, {3}));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& id = out.patient_ids[static_cast<std::size_t>(i)];
    out.os[id] = draw_outcome(spec.lambda, out.eta(i), spec.c_max, osr);
    out.dfs[id] = draw_outcome(spec.lambda * spec.dfs_rate_factor, out.eta(i), spec.c_max, dfr);
  }

  static const std::vector<std::string> kLevels = {"A", "B", "C"};
  for (std::size_t m = 0; m < spec.modalities.size(); ++m) {
    const auto& ms = spec.modalities[m];
    Rng rng(derive_seed(spec.seed, {4, m}));
    const Eigen::Index p = 1 + ms.n_noise + ms.n_categorical_noise;
    std::vector<Column> cols;
    cols.push_back({ms.name + ".f0", ColumnKind::kNumeric, {}});
    for (int j = 0; j < ms.n_noise; ++j) {
      cols.push_back({ms.name + ".f" + std::to_string(j + 1), ColumnKind::kNumeric, {}});
    }
    for (int j = 0; j < ms.n_categorical_noise; ++j) {
      cols.push_back({ms.name + ".c" + std::to_string(j + 1), ColumnKind::kCategorical, kLevels});
    }
    Eigen::MatrixXd v(n, p);
    MissingMask miss = MissingMask::Constant(n, p, false);
    for (Eigen::Index i = 0; i < n; ++i) {
      v(i, 0) = out.planted(i, static_cast<Eigen::Index>(m));
      for (Eigen::Index j = 1; j < p; ++j) {
        const bool categorical = j > ms.n_noise;
        v(i, j) = categorical ? static_cast<double>(rng.index(kLevels.size())) : rng.normal();
        if (ms.missing_rate > 0.0 && rng.uniform() < ms.missing_rate) {
          miss(i, j) = true;
          v(i, j) = 0.0;
        }
      }
    }
    out.modalities.push_back({ms.name, FeatureTable(out.patient_ids, std::move(cols), std::move(v), std::move(miss))});
  }
  if (spec.bags) {
    std::vector<double> planted(out.planted.col(n_mod - 1).data(), out.planted.col(n_mod - 1).data() + n);
    out.modalities.push_back(
        {spec.bags->name, gen_bags(*spec.bags, out.patient_ids, planted, derive_seed(spec.seed, {5}))});
  }
  return out;
}

std::vector<std::filesystem::path> write_synth_cohort(const std::filesystem::path& dir,
                                                      const SynthCohort& cohort) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto open = [&](const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot write " + p.string());
    written.push_back(p);
    return f;
  };
  {
    const FeatureTable empty(cohort.patient_ids, {}, Eigen::MatrixXd(static_cast<Eigen::Index>(cohort.patient_ids.size()), 0),
                             MissingMask(static_cast<Eigen::Index>(cohort.patient_ids.size()), 0));
    auto f = open(dir / "outcomes.csv");
    write_cohort_csv(f, empty, cohort.os, cohort.dfs);
  }
  for (const auto& m : cohort.modalities) {
    if (m.is_table()) {
      auto f = open(dir / (m.name + ".csv"));
      write_feature_csv(f, m.table());
    } else {
      auto f = open(dir / (m.name + ".emb"));
      write_embedding_container(f, m.bags());
    }
  }
  return written;
}

}  // namespace mmem
