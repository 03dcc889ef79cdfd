#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "atmle/error.hpp"

namespace atmle {

// Shared result type for the regression solvers. `beta` lives in the full
// column space with zeros outside `selected`; `information` is restricted to
// the selected columns. The objective trace is non-increasing.
struct CoefficientFit {
  Eigen::VectorXd beta;
  std::vector<int> selected;
  Eigen::MatrixXd information;
  std::vector<double> objective_trace;
  std::vector<std::string> names;
  bool converged = true;
  int iterations = 0;

  // Lasso extras (empty for logistic fits).
  double lambda = 0.0;
  std::vector<double> lambda_grid;
  std::vector<double> cv_mse;

  double predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return x * beta;
  }
};

// Weighted logistic regression by damped iteratively reweighted least
// squares. Converged when the empirical-mean score has max component
// <= 1e-8, capped at 100 iterations. Throws RankError when the (weighted)
// design is column-rank deficient and SeparationError when the likelihood
// is unbounded.
CoefficientFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& weights = Eigen::VectorXd(),
                            const std::vector<std::string>& names = {});

// Weighted Bernoulli log-likelihood and its analytic gradient on the
// empirical-mean scale (the objective and score the IRLS solver works with).
double logistic_log_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& weights,
                               const Eigen::VectorXd& beta);
Eigen::VectorXd logistic_score(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& weights,
                               const Eigen::VectorXd& beta);

enum class LambdaRule { cv_min, one_se };

struct LassoOptions {
  std::vector<double> lambda_grid;  // empty -> auto grid from the data
  int n_lambda = 50;
  double lambda_min_ratio = 1e-4;
  int cv_folds = 5;
  LambdaRule lambda_rule = LambdaRule::cv_min;
  uint64_t seed = 1;
  std::vector<int> unpenalized = {0};  // columns never penalized, always kept
  int max_sweeps = 100000;
  double tol = 1e-11;
};

// Weighted L1-penalized least squares, minimizing
//   (1/2n) sum_i w_i (y_i - x_i'beta)^2 + lambda * ||beta_penalized||_1
// by cyclic coordinate descent on RMS-standardized columns, lambda chosen by
// K-fold cross-validated weighted MSE (plain CV minimum), followed by an
// unpenalized refit on the selected columns so the weighted normal equations
// hold exactly there.
CoefficientFit fit_weighted_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& weights,
                                  const LassoOptions& options = {},
                                  const std::vector<std::string>& names = {});

// Max absolute component of (1/n) X' diag(w) (y - X beta) over the selected
// columns; the relaxed refit drives this to ~machine precision.
double normal_equation_residual(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& weights,
                                const CoefficientFit& fit);

}  // namespace atmle
