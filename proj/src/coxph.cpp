#include "mmem/coxph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mmem/error.hpp"

namespace mmem {
namespace {

constexpr double kDivergenceNorm = 50.0;
constexpr double kFallbackRidge = 1e-6;
constexpr int kMaxHalvings = 40;

// Patients ordered by decreasing time; ties keep index order.
std::vector<std::size_t> order_by_time_desc(std::span<const SurvivalOutcome> outcomes) {
  std::vector<std::size_t> order(outcomes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return outcomes[a].time > outcomes[b].time;
  });
  return order;
}

void require_events(std::span<const SurvivalOutcome> outcomes, const char* who) {
  if (count_events(outcomes) == 0) {
    throw PreconditionError(std::string(who) + ": no events in the data");
  }
}

// Shared pass over tied-time groups. With want_derivs == false only the
// likelihood is accumulated.
CoxDerivatives evaluate(const Eigen::VectorXd& eta, const Eigen::MatrixXd* x,
                        std::span<const SurvivalOutcome> outcomes, TieMethod ties,
                        bool want_derivs) {
  const std::size_t n = outcomes.size();
  const Eigen::Index p = want_derivs ? x->cols() : 0;
  const double shift = eta.size() ? eta.maxCoeff() : 0.0;
  const Eigen::VectorXd w = (eta.array() - shift).exp().matrix();
  const auto order = order_by_time_desc(outcomes);

  CoxDerivatives out;
  out.gradient = Eigen::VectorXd::Zero(p);
  out.information = Eigen::MatrixXd::Zero(p, p);
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

  std::size_t i = 0;
  while (i < n) {
    const double t = outcomes[order[i]].time;
    int d = 0;
    double d0 = 0.0;
    Eigen::VectorXd d1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(p, p);
    std::size_t j = i;
    for (; j < n && outcomes[order[j]].time == t; ++j) {
      const std::size_t k = order[j];
      s0 += w[k];
      if (want_derivs) {
        const auto xk = x->row(static_cast<Eigen::Index>(k)).transpose();
        s1.noalias() += w[k] * xk;
        s2.noalias() += w[k] * xk * xk.transpose();
        if (outcomes[k].event) {
          d1.noalias() += w[k] * xk;
          d2.noalias() += w[k] * xk * xk.transpose();
          out.gradient += xk;
        }
      }
      if (outcomes[k].event) {
        ++d;
        d0 += w[k];
        out.loglik += eta[static_cast<Eigen::Index>(k)];
      }
    }
    for (int l = 0; l < d; ++l) {
      const double f = ties == TieMethod::kEfron ? static_cast<double>(l) / d : 0.0;
      const double denom = s0 - f * d0;
      out.loglik -= std::log(denom) + shift;
      if (want_derivs) {
        const Eigen::VectorXd a = (s1 - f * d1) / denom;
        out.gradient -= a;
        out.information += (s2 - f * d2) / denom - a * a.transpose();
      }
    }
    i = j;
  }
  return out;
}

struct NewtonResult {
  Eigen::VectorXd beta;
  double loglik = 0.0;  // unpenalized
  int n_iter = 0;
  bool converged = false;
  bool diverged = false;
  std::string detail;
};

double penalized(double loglik, const Eigen::VectorXd& beta, double ridge) {
  return loglik - 0.5 * ridge * beta.squaredNorm();
}

// Newton step on the penalized objective; nullopt if the information matrix
// is not positive definite.
std::optional<Eigen::VectorXd> newton_step(const CoxDerivatives& d, const Eigen::VectorXd& beta,
                                           double ridge) {
  const Eigen::Index p = beta.size();
  Eigen::MatrixXd info = d.information + ridge * Eigen::MatrixXd::Identity(p, p);
  Eigen::VectorXd grad = d.gradient - ridge * beta;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
  const Eigen::VectorXd diag = ldlt.vectorD();
  const double dmax = diag.cwiseAbs().maxCoeff();
  if (!(diag.minCoeff() > 1e-12 * std::max(1.0, dmax))) return std::nullopt;
  Eigen::VectorXd step = ldlt.solve(grad);
  if (!step.allFinite()) return std::nullopt;
  return step;
}

NewtonResult newton(const Eigen::MatrixXd& x, std::span<const SurvivalOutcome> outcomes,
                    const CoxFitOptions& opt, double ridge, bool check_divergence) {
  NewtonResult res;
  const Eigen::Index p = x.cols();
  res.beta = Eigen::VectorXd::Zero(p);
  CoxDerivatives d = cox_derivatives(res.beta, x, outcomes, opt.ties);
  double cur = penalized(d.loglik, res.beta, ridge);

  for (int iter = 1; iter <= opt.max_iter; ++iter) {
    res.n_iter = iter;
    auto step = newton_step(d, res.beta, ridge);
    if (!step) {
      if (iter == 1) {
        throw PreconditionError(
            "fit_cox: information matrix is singular at beta = 0 (rank-deficient design needs "
            "ridge > 0)");
      }
      res.diverged = true;
      res.detail = "singular information matrix at iteration " + std::to_string(iter);
      return res;
    }
    Eigen::VectorXd next = res.beta + *step;
    CoxDerivatives dn = cox_derivatives(next, x, outcomes, opt.ties);
    double val = penalized(dn.loglik, next, ridge);
    int halvings = 0;
    while (!(val >= cur) && halvings < kMaxHalvings) {
      *step *= 0.5;
      next = res.beta + *step;
      dn = cox_derivatives(next, x, outcomes, opt.ties);
      val = penalized(dn.loglik, next, ridge);
      ++halvings;
    }
    if (!(val >= cur)) {
      // No ascent possible along the Newton direction: treat as converged.
      res.converged = true;
      break;
    }
    const double change = val - cur;
    res.beta = next;
    d = std::move(dn);
    cur = val;
    if (check_divergence && res.beta.norm() > kDivergenceNorm) {
      res.diverged = true;
      res.detail = "coefficient norm exceeded " + std::to_string(kDivergenceNorm);
      return res;
    }
    if (std::abs(change) < opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.loglik = d.loglik;
  if (res.converged && check_divergence) {
    // Monotone likelihood: the loglik flattens while a coefficient keeps
    // running off to infinity.
    auto step = newton_step(d, res.beta, ridge);
    if (!step) {
      res.diverged = true;
      res.detail = "singular information matrix at convergence";
    } else {
      for (Eigen::Index j = 0; j < p; ++j) {
        if (std::abs((*step)[j]) > 1e-3 * std::max(1.0, std::abs(res.beta[j]))) {
          res.diverged = true;
          res.detail = "coefficient " + std::to_string(j) + " still drifting at convergence";
          break;
        }
      }
    }
  }
  return res;
}

}  // namespace

double StepFunction::operator()(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

double log_partial_likelihood_scores(const Eigen::VectorXd& eta,
                                     std::span<const SurvivalOutcome> outcomes, TieMethod ties) {
  if (static_cast<std::size_t>(eta.size()) != outcomes.size()) {
    throw PreconditionError("log_partial_likelihood: score/outcome length mismatch");
  }
  require_events(outcomes, "log_partial_likelihood");
  if (!eta.allFinite()) throw PreconditionError("log_partial_likelihood: non-finite scores");
  return evaluate(eta, nullptr, outcomes, ties, false).loglik;
}

double log_partial_likelihood(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                              std::span<const SurvivalOutcome> outcomes, TieMethod ties) {
  if (x.cols() != beta.size()) throw PreconditionError("log_partial_likelihood: beta/X mismatch");
  return log_partial_likelihood_scores(x * beta, outcomes, ties);
}

CoxDerivatives cox_derivatives(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                               std::span<const SurvivalOutcome> outcomes, TieMethod ties) {
  if (x.rows() != static_cast<Eigen::Index>(outcomes.size()) || x.cols() != beta.size()) {
    throw PreconditionError("cox_derivatives: shape mismatch");
  }
  require_events(outcomes, "cox_derivatives");
  return evaluate(x * beta, &x, outcomes, ties, true);
}

CoxModel fit_cox(const Eigen::MatrixXd& x, std::span<const SurvivalOutcome> outcomes,
                 std::vector<std::string> feature_names, const CoxFitOptions& options) {
  if (x.rows() != static_cast<Eigen::Index>(outcomes.size())) {
    throw PreconditionError("fit_cox: row count differs from outcome count");
  }
  if (static_cast<Eigen::Index>(feature_names.size()) != x.cols()) {
    throw PreconditionError("fit_cox: feature name count differs from column count");
  }
  if (!x.allFinite()) throw PreconditionError("fit_cox: non-finite covariates");
  require_events(outcomes, "fit_cox");

  NewtonResult res = newton(x, outcomes, options, options.ridge, true);
  CoxModel model;
  model.ridge = options.ridge;
  if (res.diverged || !res.converged) {
    const double ridge = std::max(options.ridge, kFallbackRidge);
    const std::string first = res.diverged ? res.detail : "no convergence in max_iter";
    if (ridge == options.ridge && res.diverged) {
      throw ConvergenceError("fit_cox: diverged with ridge " + std::to_string(ridge) + " (" +
                             first + ")");
    }
    res = newton(x, outcomes, options, ridge, false);
    if (!res.converged) {
      std::ostringstream msg;
      msg << "fit_cox: no convergence after ridge fallback (" << first << "; " << res.n_iter
          << " iterations, |beta| = " << res.beta.norm() << ")";
      throw ConvergenceError(msg.str());
    }
    model.ridge_fallback = true;
    model.ridge = ridge;
  }
  model.feature_names = std::move(feature_names);
  model.beta = res.beta;
  model.converged = res.converged;
  model.final_loglik = res.loglik;
  model.n_iter = res.n_iter;
  model.baseline_cumhaz = breslow_baseline(model.beta, x, outcomes);
  return model;
}

CoxModel fit_cox(const FeatureTable& table, std::span<const SurvivalOutcome> outcomes,
                 const CoxFitOptions& options) {
  for (Eigen::Index c = 0; c < table.cols(); ++c) {
    if (table.column(c).kind == ColumnKind::kCategorical) {
      throw PreconditionError("fit_cox: categorical column '" + table.column(c).name +
                              "' must be encoded first");
    }
  }
  if (table.missing().any()) throw PreconditionError("fit_cox: table has missing cells");
  return fit_cox(table.values(), outcomes, table.column_names(), options);
}

Eigen::VectorXd predict_risk(const CoxModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.beta.size()) {
    throw PreconditionError("predict_risk: expected " + std::to_string(model.beta.size()) +
                            " columns, got " + std::to_string(x.cols()));
  }
  return x * model.beta;
}

Eigen::VectorXd predict_risk(const CoxModel& model, const FeatureTable& table) {
  std::vector<Eigen::Index> idx;
  for (const auto& name : model.feature_names) {
    auto c = table.column_index(name);
    if (!c) throw PreconditionError("predict_risk: table lacks model feature '" + name + "'");
    idx.push_back(*c);
  }
  const FeatureTable sel = table.select_columns(std::span<const Eigen::Index>(idx));
  if (sel.missing().any()) throw PreconditionError("predict_risk: missing cells in model features");
  return predict_risk(model, sel.values());
}

StepFunction breslow_baseline(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                              std::span<const SurvivalOutcome> outcomes) {
  const Eigen::VectorXd w = (x * beta).array().exp().matrix();
  const auto order = order_by_time_desc(outcomes);
  // Accumulate risk-set sums from the latest time backwards, then the hazard
  // increments forwards.
  std::vector<double> times, increments;
  double s0 = 0.0;
  std::size_t i = 0;
  const std::size_t n = outcomes.size();
  while (i < n) {
    const double t = outcomes[order[i]].time;
    int d = 0;
    std::size_t j = i;
    for (; j < n && outcomes[order[j]].time == t; ++j) {
      s0 += w[static_cast<Eigen::Index>(order[j])];
      if (outcomes[order[j]].event) ++d;
    }
    if (d > 0) {
      times.push_back(t);
      increments.push_back(d / s0);
    }
    i = j;
  }
  StepFunction f;
  double acc = 0.0;
  for (std::size_t k = times.size(); k-- > 0;) {
    acc += increments[k];
    f.times.push_back(times[k]);
    f.values.push_back(acc);
  }
  return f;
}

}  // namespace mmem
