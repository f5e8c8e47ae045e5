#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmem/datamodel.hpp"

namespace mmem {

inline constexpr double kDefaultBaselineRate = 1.0 / (3.0 * 365.25);  // per day

struct LinearCohortSpec {
  std::size_t n_patients = 200;
  std::vector<double> beta{1.0};
  // Standard-normal covariates with zero coefficient appended after the
  // planted ones.
  int n_noise = 0;
  double lambda = kDefaultBaselineRate;
  // Censoring times are uniform on [0, c_max]; infinity disables censoring.
  double c_max = 5.0 * 365.25;
  std::uint64_t seed = 0;
};

struct LinearCohort {
  FeatureTable features;  // columns x1..xp, planted first
  std::vector<SurvivalOutcome> outcomes;
  Eigen::VectorXd eta;    // true linear predictor
};

LinearCohort gen_linear_cox_cohort(const LinearCohortSpec& spec);

// Exponential event time with rate lambda * exp(eta), by inverse transform.
double draw_event_time(double lambda, double eta, double u);

struct SynthModalitySpec {
  std::string name;
  double signal_beta = 1.0;  // 0 makes the modality pure noise
  int n_noise = 3;
  int n_categorical_noise = 0;
  // Fraction of cells blanked in noise columns.
  double missing_rate = 0.0;
};

struct BagSpec {
  std::string name = "wsi";
  double signal_beta = 1.0;
  Eigen::Index min_tiles = 16;
  Eigen::Index max_tiles = 64;
  Eigen::Index dim = 16;
  double tile_noise = 0.5;
  bool write_coords = false;
};

struct SynthSpec {
  std::size_t n_patients = 300;
  std::vector<SynthModalitySpec> modalities;
  std::optional<BagSpec> bags;
  double lambda = kDefaultBaselineRate;
  // DFS uses lambda * dfs_rate_factor with the same linear predictor.
  double dfs_rate_factor = 1.5;
  double c_max = 5.0 * 365.25;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthCohort {
  std::vector<std::string> patient_ids;
  std::map<std::string, SurvivalOutcome> os;
  std::map<std::string, SurvivalOutcome> dfs;
  std::vector<Modality> modalities;
  Eigen::VectorXd eta;
  // Planted covariate of each modality, in modality order (bags last).
  Eigen::MatrixXd planted;
};

// Hazard driven by the sum of one planted covariate per modality; noise
// columns are added per modality.
SynthCohort gen_multimodal_cohort(const SynthSpec& spec);

// Tiles whose coordinate 0 is the patient's planted value plus per-tile
// noise; other coordinates are per-patient noise plus per-tile noise.
std::vector<EmbeddingBag> gen_bags(const BagSpec& spec, std::span<const std::string> patient_ids,
                                   std::span<const double> planted, std::uint64_t seed);

std::string synth_patient_id(std::size_t i, std::size_t n);

// Writes outcomes.csv, one <name>.csv per table modality and <name>.emb for
// the bag modality into dir. Returns the written paths.
std::vector<std::filesystem::path> write_synth_cohort(const std::filesystem::path& dir,
                                                      const SynthCohort& cohort);

}  // namespace mmem
