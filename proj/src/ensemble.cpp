#include "mmem/ensemble.hpp"

#include <cmath>

#include "mmem/error.hpp"
#include "mmem/text.hpp"

namespace mmem {

std::string_view to_string(WeightSource s) {
  return s == WeightSource::kUniform ? "uniform" : "validation-performance";
}

ModalityWeights modality_weights(std::vector<std::string> names, std::vector<double> p_val) {
  if (names.empty() || names.size() != p_val.size()) {
    throw PreconditionError("modality_weights: need one validation score per modality");
  }
  double total = 0.0;
  for (std::size_t m = 0; m < p_val.size(); ++m) {
    if (!(p_val[m] > 0.0) || !std::isfinite(p_val[m])) {
      throw PreconditionError("modality_weights: validation score of '" + names[m] +
                              "' is not positive (" + format_double(p_val[m]) + ")");
    }
    total += p_val[m];
  }
  ModalityWeights w;
  w.modality_names = std::move(names);
  w.source = WeightSource::kValidation;
  for (double p : p_val) w.weights.push_back(p / total);
  w.p_val = std::move(p_val);
  return w;
}

ModalityWeights uniform_weights(std::vector<std::string> names) {
  if (names.empty()) throw PreconditionError("uniform_weights: no modalities");
  ModalityWeights w;
  w.source = WeightSource::kUniform;
  w.weights.assign(names.size(), 1.0 / static_cast<double>(names.size()));
  w.modality_names = std::move(names);
  return w;
}

Eigen::VectorXd fuse_risks(const RiskScoreTable& scores, const ModalityWeights& w) {
  scores.validate();
  if (scores.modality_names != w.modality_names) {
    throw PreconditionError("fuse_risks: modality names/order of scores and weights differ");
  }
  if (w.weights.size() != w.modality_names.size()) throw PreconditionError("fuse_risks: malformed weights");
  const Eigen::Index n = scores.scores.rows();
  const Eigen::Index m_count = scores.scores.cols();
  Eigen::VectorXd fused(n);
  // Sums run in modality order. Uniform weights give the plain mean
  // (sum, then divide by M).
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index m = 0; m < m_count; ++m) {
      const double r = scores.scores(i, m);
      acc += w.source == WeightSource::kUniform ? r : w.weights[static_cast<std::size_t>(m)] * r;
    }
    fused(i) = w.source == WeightSource::kUniform ? acc / static_cast<double>(m_count) : acc;
  }
  return fused;
}

ModalityWeights average_weights(std::span<const ModalityWeights> per_fold) {
  if (per_fold.empty()) throw PreconditionError("average_weights: no folds");
  const auto& names = per_fold.front().modality_names;
  std::vector<double> mean(names.size(), 0.0);
  for (const auto& w : per_fold) {
    if (w.modality_names != names || w.p_val.size() != names.size()) {
      throw PreconditionError("average_weights: folds disagree on modalities");
    }
    for (std::size_t m = 0; m < names.size(); ++m) mean[m] += w.p_val[m] / static_cast<double>(per_fold.size());
  }
  return modality_weights(names, std::move(mean));
}

}  // namespace mmem
