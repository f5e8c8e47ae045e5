#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmem/datamodel.hpp"

namespace mmem {

enum class TieMethod { kBreslow, kEfron };

// Right-continuous step function; value 0 before the first step.
struct StepFunction {
  std::vector<double> times;
  std::vector<double> values;

  double operator()(double t) const;
};

struct CoxModel {
  std::vector<std::string> feature_names;
  Eigen::VectorXd beta;
  StepFunction baseline_cumhaz;
  bool converged = false;
  // True when the unpenalized fit diverged (separation) and the model was
  // refit with a small ridge penalty.
  bool ridge_fallback = false;
  double ridge = 0.0;
  double final_loglik = 0.0;
  int n_iter = 0;
};

struct CoxFitOptions {
  TieMethod ties = TieMethod::kEfron;
  double tol = 1e-7;
  int max_iter = 100;
  double ridge = 0.0;
};

// Log partial likelihood and its first two derivatives at beta. `information`
// is the negated Hessian.
struct CoxDerivatives {
  double loglik = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd information;
};

// Risk sets include every patient with time >= t. Throws PreconditionError
// when there are no events.
double log_partial_likelihood(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                              std::span<const SurvivalOutcome> outcomes,
                              TieMethod ties = TieMethod::kEfron);

// Same quantity with the linear predictor supplied directly.
double log_partial_likelihood_scores(const Eigen::VectorXd& eta,
                                     std::span<const SurvivalOutcome> outcomes,
                                     TieMethod ties = TieMethod::kBreslow);

CoxDerivatives cox_derivatives(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                               std::span<const SurvivalOutcome> outcomes, TieMethod ties);

// Newton-Raphson with step halving. Divergence (||beta|| > 50 or a
// coefficient still drifting after the likelihood has converged) triggers a
// refit with ridge 1e-6. Throws ConvergenceError if that also fails.
CoxModel fit_cox(const Eigen::MatrixXd& x, std::span<const SurvivalOutcome> outcomes,
                 std::vector<std::string> feature_names, const CoxFitOptions& options = {});
CoxModel fit_cox(const FeatureTable& table, std::span<const SurvivalOutcome> outcomes,
                 const CoxFitOptions& options = {});

// Linear predictor x'beta (the log-partial hazard).
Eigen::VectorXd predict_risk(const CoxModel& model, const Eigen::MatrixXd& x);
// Columns are looked up by the model's feature names.
Eigen::VectorXd predict_risk(const CoxModel& model, const FeatureTable& table);

// Breslow cumulative baseline hazard at each distinct event time.
StepFunction breslow_baseline(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                              std::span<const SurvivalOutcome> outcomes);

}  // namespace mmem
