#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mmem/datamodel.hpp"

namespace mmem {

enum class WeightSource { kValidation, kUniform };

std::string_view to_string(WeightSource s);

struct ModalityWeights {
  std::vector<std::string> modality_names;
  std::vector<double> weights;
  WeightSource source = WeightSource::kValidation;
  std::vector<double> p_val;  // per-modality validation C-index
};

// w_m = p_m / sum(p). Every p_m must be positive.
ModalityWeights modality_weights(std::vector<std::string> names, std::vector<double> p_val);
ModalityWeights uniform_weights(std::vector<std::string> names);

// Weighted sum of the modality columns. Modality names and order must match.
Eigen::VectorXd fuse_risks(const RiskScoreTable& scores, const ModalityWeights& w);

// Averages validation metrics of several folds before normalising, for the
// non-default global weighting mode.
ModalityWeights average_weights(std::span<const ModalityWeights> per_fold);

}  // namespace mmem
