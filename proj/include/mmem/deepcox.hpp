#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmem/autodiff.hpp"
#include "mmem/datamodel.hpp"
#include "mmem/random.hpp"

namespace mmem {

struct DeepCoxConfig {
  Eigen::Index proj_dim = 256;
  int n_heads = 8;
  Eigen::Index n_landmarks = 64;
  int pinv_iters = 6;
  double dropout = 0.25;
  double lr = 0.001;
  int epochs = 100;
  int plateau_patience = 5;
  double plateau_gamma = 0.1;
  Eigen::Index train_bag_cap = 4096;
  std::uint64_t seed = 0;
  // false skips the attention block: projection -> pool -> head.
  bool use_attention = true;

  void validate() const;
};

enum class Mode { kEval, kTrain };

// Projection (dim_in x P + bias) -> ReLU -> dropout -> multi-head attention
// (query/key/value maps without bias, output map with bias) -> mean pool
// -> linear head (P x 1 + bias).
class DeepCoxModel {
 public:
  enum Slot : std::size_t {
    kProjW, kProjB, kQueryW, kKeyW, kValueW, kOutW, kOutB, kHeadW, kHeadB, kNumSlots
  };

  DeepCoxModel() = default;
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation from config.seed.
  DeepCoxModel(Eigen::Index input_dim, const DeepCoxConfig& config);
  // Restores a model from stored parameter arrays; shapes are checked.
  static DeepCoxModel from_parameters(Eigen::Index input_dim, const DeepCoxConfig& config,
                                      std::vector<Eigen::MatrixXd> params);

  Eigen::Index input_dim() const { return input_dim_; }
  const DeepCoxConfig& config() const { return config_; }
  std::vector<Eigen::MatrixXd>& parameters() { return params_; }
  const std::vector<Eigen::MatrixXd>& parameters() const { return params_; }
  static const char* slot_name(std::size_t slot);

  // Records the forward pass for one bag (tiles as rows) and returns the
  // 1x1 risk node. `rng` supplies dropout masks in training mode.
  ad::Var build(ad::Tape& tape, const Eigen::MatrixXd& tiles, Mode mode, Rng* rng) const;

 private:
  Eigen::Index input_dim_ = 0;
  DeepCoxConfig config_;
  std::vector<Eigen::MatrixXd> params_;
};

// Eval mode is deterministic; training mode needs an rng for dropout.
double forward_bag(const DeepCoxModel& model, const EmbeddingBag& bag, Mode mode = Mode::kEval,
                   Rng* rng = nullptr);
Eigen::VectorXd predict_bags(const DeepCoxModel& model, std::span<const EmbeddingBag> bags);

// -(1/D) * Breslow log partial likelihood with the risks as linear predictor.
double cox_nll(std::span<const double> risks, std::span<const SurvivalOutcome> outcomes);
// d cox_nll / d risk_i.
Eigen::VectorXd cox_nll_gradient(std::span<const double> risks,
                                 std::span<const SurvivalOutcome> outcomes);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct DeepCoxTrainResult {
  DeepCoxModel model;      // parameters of the epoch with the lowest val loss
  double val_cindex = 0.0; // NaN when the validation set has no comparable pair
  double best_val_loss = 0.0;
  int best_epoch = 0;
  std::vector<EpochLog> history;
};

// Full-cohort loss and one Adam step per epoch; plateau learning-rate decay
// on the validation loss.
DeepCoxTrainResult train_deep_cox(std::span<const EmbeddingBag> bags,
                                  std::span<const SurvivalOutcome> outcomes,
                                  const DeepCoxConfig& config,
                                  std::span<const EmbeddingBag> val_bags,
                                  std::span<const SurvivalOutcome> val_outcomes);

// Loss and parameter gradients of cox_nll over the bags in eval mode.
double cox_nll_with_gradients(const DeepCoxModel& model, std::span<const EmbeddingBag> bags,
                              std::span<const SurvivalOutcome> outcomes,
                              std::vector<Eigen::MatrixXd>* grads);

struct FiniteDiffResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t n_checked = 0;
};

// Central differences over every parameter entry. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6); entries whose gradient
// is below 1e-6 in magnitude are therefore compared on an absolute scale.
FiniteDiffResult finite_diff_check(const DeepCoxModel& model, std::span<const EmbeddingBag> bags,
                                   std::span<const SurvivalOutcome> outcomes, double h = 1e-5);

// Binary layout (little endian): "MDCX", u32 version = 1, u32 array count,
// then per array: u32 name length, name bytes, u32 rows, u32 cols, rows*cols
// f64 values in row-major order. The config is stored next to it as
// <path>.json.
void write_checkpoint(const std::filesystem::path& path, const DeepCoxModel& model);
DeepCoxModel read_checkpoint(const std::filesystem::path& path);

}  // namespace mmem
