#include "atmle/balance.hpp"

#include <cmath>

#include "atmle/basis.hpp"
#include "atmle/solvers.hpp"

namespace atmle {

namespace {

BalanceReport balance_on_label(const Eigen::MatrixXd& W, const Eigen::VectorXd& label) {
  const int d = int(W.cols());
  BalanceReport rep;
  rep.coefficients = Eigen::VectorXd::Zero(d);
  rep.smd = Eigen::VectorXd::Zero(d);
  for (int j = 0; j < d; ++j) rep.names.push_back("W" + std::to_string(j + 1));

  // standardized mean differences
  const long n1 = long(label.sum());
  const long n0 = label.size() - n1;
  if (n1 == 0 || n0 == 0) {
    throw PreconditionError("balance report requires both groups present");
  }
  for (int j = 0; j < d; ++j) {
    double m1 = 0, m0 = 0, s1 = 0, s0 = 0;
    for (long i = 0; i < label.size(); ++i) (label[i] == 1.0 ? m1 : m0) += W(i, j);
    m1 /= double(n1);
    m0 /= double(n0);
    for (long i = 0; i < label.size(); ++i) {
      const double c = W(i, j) - (label[i] == 1.0 ? m1 : m0);
      (label[i] == 1.0 ? s1 : s0) += c * c;
    }
    s1 = n1 > 1 ? s1 / double(n1 - 1) : 0.0;
    s0 = n0 > 1 ? s0 / double(n0 - 1) : 0.0;
    const double pooled_sd = std::sqrt(std::max((s1 + s0) / 2.0, 1e-24));
    rep.smd[j] = (m1 - m0) / pooled_sd;
  }

  Eigen::MatrixXd X(W.rows(), d + 1);
  X.col(0).setOnes();
  X.rightCols(d) = W;
  try {
    std::vector<std::string> names = {"1"};
    names.insert(names.end(), rep.names.begin(), rep.names.end());
    const CoefficientFit fit = fit_logistic(X, label, Eigen::VectorXd(), names);
    rep.coefficients = fit.beta.tail(d);
    rep.max_abs_coef = d > 0 ? rep.coefficients.cwiseAbs().maxCoeff() : 0.0;
  } catch (const SeparationError&) {
    rep.separation = true;
    rep.coefficients.setConstant(std::numeric_limits<double>::quiet_NaN());
    rep.max_abs_coef = std::numeric_limits<double>::infinity();
  }
  return rep;
}

}  // namespace

BalanceReport balance_report(const Cohort& cohort) {
  return balance_on_label(cohort.covariates, cohort.study.cast<double>());
}

BalanceReport treatment_balance_report(const Cohort& cohort, const std::vector<int>& rows) {
  const long m = long(rows.size());
  Eigen::MatrixXd W(m, cohort.dim());
  Eigen::VectorXd label(m);
  for (long i = 0; i < m; ++i) {
    W.row(i) = cohort.covariates.row(rows[size_t(i)]);
    label[i] = double(cohort.treatment[rows[size_t(i)]]);
  }
  return balance_on_label(W, label);
}

}  // namespace atmle
