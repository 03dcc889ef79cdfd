#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "atmle/rng.hpp"
#include "atmle/solvers.hpp"

namespace atmle {

namespace {

double soft_threshold(double z, double lambda) {
  if (z > lambda) return z - lambda;
  if (z < -lambda) return z + lambda;
  return 0.0;
}

struct Problem {
  const Eigen::MatrixXd& X;
  const Eigen::VectorXd& y;
  const Eigen::VectorXd& w;
  Eigen::VectorXd scale;        // weighted RMS per column; 0 marks a dead column
  std::vector<bool> penalized;  // per column
  long n;

  double objective(const Eigen::VectorXd& beta, double lambda) const {
    const Eigen::VectorXd r = y - X * beta;
    double obj = 0.5 * (w.array() * r.array().square()).sum() / double(n);
    for (int j = 0; j < X.cols(); ++j) {
      if (penalized[size_t(j)]) obj += lambda * std::abs(beta[j] * scale[j]);
    }
    return obj;
  }
};

// Cyclic coordinate descent at a fixed lambda, warm-started from beta.
// Updates operate on the standardized scale where each live column has
// weighted mean square one. Returns sweeps used; appends to trace if given.
int descend(const Problem& prob, double lambda, Eigen::VectorXd& beta,
            Eigen::VectorXd& resid, int max_sweeps, double tol,
            std::vector<double>* trace) {
  const int p = int(prob.X.cols());
  int sweep = 0;
  if (trace) trace->push_back(prob.objective(beta, lambda));
  for (; sweep < max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (int j = 0; j < p; ++j) {
      const double s = prob.scale[j];
      if (s == 0.0) continue;
      const double beta_std = beta[j] * s;
      const double grad =
          (prob.w.array() * prob.X.col(j).array() * resid.array()).sum() / (double(prob.n) * s);
      const double z = grad + beta_std;
      const double updated = prob.penalized[size_t(j)] ? soft_threshold(z, lambda) : z;
      const double delta_std = updated - beta_std;
      if (delta_std != 0.0) {
        beta[j] = updated / s;
        resid -= (delta_std / s) * prob.X.col(j);
        max_delta = std::max(max_delta, std::abs(delta_std));
      }
    }
    if (trace) trace->push_back(prob.objective(beta, lambda));
    if (max_delta <= tol) {
      ++sweep;
      break;
    }
  }
  return sweep;
}

std::vector<double> make_grid(const Problem& prob, const LassoOptions& opt) {
  if (!opt.lambda_grid.empty()) {
    for (size_t i = 1; i < opt.lambda_grid.size(); ++i) {
      if (opt.lambda_grid[i] > opt.lambda_grid[i - 1]) {
        throw PreconditionError("lambda grid must be non-increasing");
      }
    }
    return opt.lambda_grid;
  }
  // residual after fitting the unpenalized columns alone
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(prob.X.cols());
  Eigen::VectorXd resid = prob.y;
  descend(prob, std::numeric_limits<double>::infinity(), beta, resid, 1000, 1e-13, nullptr);
  double lambda_max = 0.0;
  for (int j = 0; j < prob.X.cols(); ++j) {
    if (!prob.penalized[size_t(j)] || prob.scale[j] == 0.0) continue;
    const double g = std::abs(
        (prob.w.array() * prob.X.col(j).array() * resid.array()).sum() /
        (double(prob.n) * prob.scale[j]));
    lambda_max = std::max(lambda_max, g);
  }
  if (lambda_max <= 1e-300) return {0.0};
  std::vector<double> grid(size_t(opt.n_lambda));
  const double log_max = std::log(lambda_max);
  const double log_min = std::log(lambda_max * opt.lambda_min_ratio);
  for (int i = 0; i < opt.n_lambda; ++i) {
    grid[size_t(i)] =
        std::exp(log_max + (log_min - log_max) * double(i) / double(opt.n_lambda - 1));
  }
  return grid;
}

}  // namespace

CoefficientFit fit_weighted_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& weights,
                                  const LassoOptions& options,
                                  const std::vector<std::string>& names) {
  const long n = X.rows();
  const int p = int(X.cols());
  if (y.size() != n) throw PreconditionError("response length does not match design rows");
  Eigen::VectorXd w = weights.size() ? weights : Eigen::VectorXd::Ones(n);
  if (w.size() != n) throw PreconditionError("weight length does not match design rows");
  if (!X.allFinite() || !y.allFinite() || !w.allFinite()) {
    throw PreconditionError("non-finite entries in lasso inputs");
  }
  if ((w.array() < 0).any()) throw PreconditionError("negative weights");
  if (w.sum() <= 0) throw PreconditionError("all weights are zero");
  if (options.cv_folds < 2) throw PreconditionError("cv_folds must be at least 2");

  Problem prob{X, y, w, Eigen::VectorXd(p), std::vector<bool>(size_t(p), true), n};
  for (int j = 0; j < p; ++j) {
    const double ms = (w.array() * X.col(j).array().square()).sum() / double(n);
    prob.scale[j] = ms > 1e-24 ? std::sqrt(ms) : 0.0;
  }
  for (int j : options.unpenalized) {
    if (j < 0 || j >= p) throw PreconditionError("unpenalized column index out of range");
    prob.penalized[size_t(j)] = false;
  }

  const std::vector<double> grid = make_grid(prob, options);

  CoefficientFit fit;
  fit.names = names;
  fit.lambda_grid = grid;

  // K-fold cross-validated weighted MSE over the shared grid.
  size_t best = 0;
  if (grid.size() > 1) {
    const int folds = int(std::min<long>(options.cv_folds, n));
    std::vector<int> fold_of(static_cast<size_t>(n));
    {
      std::vector<int> order(static_cast<size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      Rng rng(derive_seed(options.seed, 0x6f6c6473));
      rng.shuffle(order);
      for (long i = 0; i < n; ++i) fold_of[size_t(order[size_t(i)])] = int(i % folds);
    }
    std::vector<double> cv_sse(grid.size(), 0.0), cv_wsum(grid.size(), 0.0);
    std::vector<std::vector<double>> fold_mse(grid.size());
    for (int f = 0; f < folds; ++f) {
      Eigen::VectorXd w_train = w;
      for (long i = 0; i < n; ++i) {
        if (fold_of[size_t(i)] == f) w_train[i] = 0.0;
      }
      if (w_train.sum() <= 0) continue;
      Problem train{X, y, w_train, Eigen::VectorXd(p), prob.penalized, n};
      for (int j = 0; j < p; ++j) {
        const double ms = (w_train.array() * X.col(j).array().square()).sum() / double(n);
        train.scale[j] = ms > 1e-24 ? std::sqrt(ms) : 0.0;
      }
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
      Eigen::VectorXd resid = y;
      for (size_t g = 0; g < grid.size(); ++g) {
        descend(train, grid[g], beta, resid, options.max_sweeps, options.tol, nullptr);
        double sse = 0.0, wsum = 0.0;
        for (long i = 0; i < n; ++i) {
          if (fold_of[size_t(i)] == f && w[i] > 0) {
            sse += w[i] * resid[i] * resid[i];
            wsum += w[i];
          }
        }
        cv_sse[g] += sse;
        cv_wsum[g] += wsum;
        if (wsum > 0) fold_mse[g].push_back(sse / wsum);
      }
    }
    fit.cv_mse.resize(grid.size());
    for (size_t g = 0; g < grid.size(); ++g) {
      fit.cv_mse[g] = cv_wsum[g] > 0 ? cv_sse[g] / cv_wsum[g]
                                     : std::numeric_limits<double>::infinity();
    }
    for (size_t g = 1; g < grid.size(); ++g) {
      if (fit.cv_mse[g] < fit.cv_mse[best]) best = g;
    }
    if (options.lambda_rule == LambdaRule::one_se && fold_mse[best].size() > 1) {
      // standard error of the CV curve at the minimum, across folds
      const auto& fm = fold_mse[best];
      double mean = 0.0;
      for (double v : fm) mean += v;
      mean /= double(fm.size());
      double var = 0.0;
      for (double v : fm) var += (v - mean) * (v - mean);
      var /= double(fm.size() - 1);
      const double cv_se = std::sqrt(var / double(fm.size()));
      for (size_t g = 0; g <= best; ++g) {
        if (fit.cv_mse[g] <= fit.cv_mse[best] + cv_se) {
          best = g;  // largest lambda within one SE of the minimum
          break;
        }
      }
    }
  }
  fit.lambda = grid[best];

  // Full-data path down to the chosen lambda; the recorded trace is the
  // final segment at lambda itself.
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd resid = y;
  for (size_t g = 0; g < best; ++g) {
    descend(prob, grid[g], beta, resid, options.max_sweeps, options.tol, nullptr);
  }
  fit.iterations =
      descend(prob, fit.lambda, beta, resid, options.max_sweeps, options.tol,
              &fit.objective_trace);
  fit.converged = fit.iterations < options.max_sweeps;

  for (int j = 0; j < p; ++j) {
    const bool keep = !prob.penalized[size_t(j)] ? prob.scale[j] > 0.0 : beta[j] != 0.0;
    if (keep) fit.selected.push_back(j);
  }

  // Relaxed refit: unpenalized weighted least squares on the selected
  // columns, so the working-model score is solved exactly there.
  fit.beta = Eigen::VectorXd::Zero(p);
  if (!fit.selected.empty()) {
    const int k = int(fit.selected.size());
    Eigen::MatrixXd Xs(n, k);
    for (int j = 0; j < k; ++j) Xs.col(j) = X.col(fit.selected[size_t(j)]);
    const Eigen::VectorXd sw = w.array().sqrt();
    const Eigen::MatrixXd Xsw = sw.asDiagonal() * Xs;
    const Eigen::VectorXd ysw = sw.asDiagonal() * y;
    const Eigen::VectorXd sol = Xsw.colPivHouseholderQr().solve(ysw);
    for (int j = 0; j < k; ++j) fit.beta[fit.selected[size_t(j)]] = sol[j];
    fit.information = Xs.transpose() * w.asDiagonal() * Xs / double(n);
  }
  return fit;
}

double normal_equation_residual(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& weights,
                                const CoefficientFit& fit) {
  const Eigen::VectorXd w =
      weights.size() ? weights : Eigen::VectorXd::Ones(X.rows());
  const Eigen::VectorXd resid = y - X * fit.beta;
  double worst = 0.0;
  for (int j : fit.selected) {
    const double g =
        (w.array() * X.col(j).array() * resid.array()).sum() / double(X.rows());
    worst = std::max(worst, std::abs(g));
  }
  return worst;
}

}  // namespace atmle
