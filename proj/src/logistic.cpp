#include <Eigen/Dense>
#include <cmath>

#include "atmle/solvers.hpp"
#include "atmle/stats.hpp"

namespace atmle {

namespace {

std::string column_label(const std::vector<std::string>& names, int j) {
  if (j < int(names.size())) return names[size_t(j)];
  return "column " + std::to_string(j);
}

double log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& w) {
  // log(1+e^eta) computed stably on both tails
  double ll = 0.0;
  for (long i = 0; i < eta.size(); ++i) {
    const double e = eta[i];
    const double log1pe = e > 30.0 ? e : std::log1p(std::exp(e));
    ll += w[i] * (y[i] * e - log1pe);
  }
  return ll;
}

}  // namespace

double logistic_log_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& weights,
                               const Eigen::VectorXd& beta) {
  const Eigen::VectorXd w = weights.size() ? weights : Eigen::VectorXd::Ones(X.rows());
  return log_likelihood(X * beta, y, w) / double(X.rows());
}

Eigen::VectorXd logistic_score(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& weights,
                               const Eigen::VectorXd& beta) {
  const Eigen::VectorXd w = weights.size() ? weights : Eigen::VectorXd::Ones(X.rows());
  const Eigen::VectorXd eta = X * beta;
  Eigen::VectorXd prob(eta.size());
  for (long i = 0; i < eta.size(); ++i) prob[i] = expit(eta[i]);
  return X.transpose() * (w.array() * (y - prob).array()).matrix() / double(X.rows());
}

CoefficientFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& weights,
                            const std::vector<std::string>& names) {
  const long n = X.rows();
  const int p = int(X.cols());
  if (y.size() != n) throw PreconditionError("label length does not match design rows");
  if (!X.allFinite() || !y.allFinite()) {
    throw PreconditionError("non-finite entries in logistic regression inputs");
  }
  Eigen::VectorXd w = weights.size() ? weights : Eigen::VectorXd::Ones(n);
  if (w.size() != n) throw PreconditionError("weight length does not match design rows");
  if ((w.array() < 0).any()) throw PreconditionError("negative regression weights");
  if (w.sum() <= 0) throw PreconditionError("all regression weights are zero");
  for (long i = 0; i < n; ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      throw PreconditionError("logistic labels must be 0/1, got " + std::to_string(y[i]) +
                              " at row " + std::to_string(i));
    }
  }

  // Rank check on the weight-supported rows.
  Eigen::MatrixXd Xw = w.array().sqrt().matrix().asDiagonal() * X;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
  if (qr.rank() < p) {
    std::vector<std::string> dropped;
    const auto& perm = qr.colsPermutation().indices();
    for (int j = int(qr.rank()); j < p; ++j) dropped.push_back(column_label(names, perm[j]));
    std::string msg = "design is rank deficient; drop columns:";
    for (const auto& c : dropped) msg += " " + c;
    throw RankError(msg, dropped);
  }

  Eigen::VectorXd col_rms(p);
  for (int j = 0; j < p; ++j) col_rms[j] = std::sqrt(X.col(j).squaredNorm() / double(n));

  CoefficientFit fit;
  fit.names = names;
  fit.beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double ll = log_likelihood(eta, y, w);
  fit.objective_trace.push_back(-ll);

  const double score_tol = 1e-8;
  const int max_iter = 100;
  bool converged = false;

  Eigen::VectorXd prob(n), d(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    for (long i = 0; i < n; ++i) {
      prob[i] = expit(eta[i]);
      d[i] = w[i] * prob[i] * (1.0 - prob[i]);
    }
    Eigen::VectorXd score = X.transpose() * (w.array() * (y - prob).array()).matrix() / double(n);
    if (score.cwiseAbs().maxCoeff() <= score_tol) {
      converged = true;
      fit.iterations = iter;
      break;
    }
    Eigen::MatrixXd hess = X.transpose() * d.asDiagonal() * X / double(n);
    Eigen::VectorXd step = hess.ldlt().solve(score);

    // damping: halve the step while the likelihood would decrease
    double t = 1.0;
    Eigen::VectorXd eta_new;
    double ll_new = 0.0;
    for (int halving = 0; halving <= 20; ++halving) {
      eta_new = eta + t * (X * step);
      ll_new = log_likelihood(eta_new, y, w);
      if (ll_new >= ll || halving == 20) break;
      t *= 0.5;
    }
    fit.beta += t * step;
    eta = eta_new;
    ll = std::max(ll, ll_new);
    fit.objective_trace.push_back(-ll);
    fit.iterations = iter + 1;

    // unbounded likelihood: some coefficient is running off to infinity
    int worst = 0;
    double worst_mag = 0.0;
    for (int j = 0; j < p; ++j) {
      const double mag = std::abs(fit.beta[j]) * std::max(col_rms[j], 1e-12);
      if (mag > worst_mag) {
        worst_mag = mag;
        worst = j;
      }
    }
    if (worst_mag > 30.0) {
      throw SeparationError("complete separation detected: likelihood unbounded along " +
                                column_label(names, worst),
                            column_label(names, worst));
    }
  }
  fit.converged = converged;

  for (int j = 0; j < p; ++j) fit.selected.push_back(j);
  for (long i = 0; i < n; ++i) {
    prob[i] = expit(eta[i]);
    d[i] = w[i] * prob[i] * (1.0 - prob[i]);
  }
  fit.information = X.transpose() * d.asDiagonal() * X / double(n);
  return fit;
}

}  // namespace atmle
