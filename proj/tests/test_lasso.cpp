#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "atmle/rng.hpp"
#include "atmle/solvers.hpp"

using namespace atmle;

TEST_CASE("penalty at infinity leaves only the intercept, at the weighted mean") {
  Eigen::MatrixXd X(4, 2);
  X << 1, 0.5, 1, -1.0, 1, 2.0, 1, 0.1;
  Eigen::VectorXd y(4);
  y << 1, 2, 3, 4;
  Eigen::VectorXd w(4);
  w << 1, 2, 3, 4;
  LassoOptions opts;
  opts.lambda_grid = {1e9};
  const CoefficientFit fit = fit_weighted_lasso(X, y, w, opts);
  CHECK(fit.selected == std::vector<int>{0});
  const double wmean = (w.array() * y.array()).sum() / w.sum();
  CHECK(fit.beta[0] == doctest::Approx(wmean).epsilon(1e-12));
  CHECK(fit.beta[1] == 0.0);
}

TEST_CASE("noiseless response is interpolated exactly at lambda zero") {
  Eigen::MatrixXd X(5, 2);
  Eigen::VectorXd y(5);
  for (int i = 0; i < 5; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = double(i) - 2.0;
    y[i] = 2.0 * X(i, 1);
  }
  LassoOptions opts;
  opts.lambda_grid = {0.0};
  const CoefficientFit fit = fit_weighted_lasso(X, y, Eigen::VectorXd(), opts);
  CHECK(std::abs(fit.beta[0]) <= 1e-12);
  CHECK(fit.beta[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("relaxed refit zeroes the weighted normal equations on random problems") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const long n = 20;
    const int p = 5;
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n), w(n);
    for (long i = 0; i < n; ++i) {
      X(i, 0) = 1.0;
      for (int j = 1; j < p; ++j) X(i, j) = rng.normal();
      y[i] = 0.5 + X(i, 1) - 2.0 * X(i, 3) + rng.normal();
      w[i] = 0.1 + rng.uniform();
    }
    LassoOptions opts;
    opts.seed = 1000 + uint64_t(trial);
    const CoefficientFit fit = fit_weighted_lasso(X, y, w, opts);
    CHECK(normal_equation_residual(X, y, w, fit) <= 1e-10);
  }
}

TEST_CASE("coordinate descent objective is monotone non-increasing") {
  Rng rng(29);
  const long n = 120;
  const int p = 8;
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (long i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) X(i, j) = rng.normal();
    y[i] = 1.0 + 0.8 * X(i, 2) + rng.normal();
  }
  const CoefficientFit fit = fit_weighted_lasso(X, y, Eigen::VectorXd());
  REQUIRE(fit.objective_trace.size() >= 2);
  for (size_t t = 1; t < fit.objective_trace.size(); ++t) {
    CHECK(fit.objective_trace[t] <=
          fit.objective_trace[t - 1] + 1e-10 * (1.0 + std::abs(fit.objective_trace[t - 1])));
  }
}

TEST_CASE("cross-validation recovers a sparse truth's support") {
  Rng rng(5);
  const long n = 400;
  const int p = 8;
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (long i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) X(i, j) = rng.normal();
    y[i] = 2.0 + 1.5 * X(i, 1) - 2.5 * X(i, 4) + rng.normal(0.0, 0.5);
  }
  const CoefficientFit fit = fit_weighted_lasso(X, y, Eigen::VectorXd());
  // the strong signals must be selected and accurately refit
  CHECK(std::find(fit.selected.begin(), fit.selected.end(), 1) != fit.selected.end());
  CHECK(std::find(fit.selected.begin(), fit.selected.end(), 4) != fit.selected.end());
  CHECK(fit.beta[1] == doctest::Approx(1.5).epsilon(0.1));
  CHECK(fit.beta[4] == doctest::Approx(-2.5).epsilon(0.1));
}

TEST_CASE("one-SE rule never selects a larger model than the CV minimum") {
  Rng rng(31);
  const long n = 150;
  const int p = 6;
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (long i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) X(i, j) = rng.normal();
    y[i] = 1.0 + 0.4 * X(i, 1) + rng.normal();
  }
  LassoOptions cv_min;
  LassoOptions one_se;
  one_se.lambda_rule = LambdaRule::one_se;
  const CoefficientFit a = fit_weighted_lasso(X, y, Eigen::VectorXd(), cv_min);
  const CoefficientFit b = fit_weighted_lasso(X, y, Eigen::VectorXd(), one_se);
  CHECK(b.lambda >= a.lambda);
  CHECK(b.selected.size() <= a.selected.size());
}

TEST_CASE("degenerate inputs are rejected") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(3, 1);
  Eigen::VectorXd y(3);
  y << 1, 2, 3;
  CHECK_THROWS_AS(fit_weighted_lasso(X, y, Eigen::VectorXd::Zero(3)), PreconditionError);
  Eigen::VectorXd bad = y;
  bad[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_weighted_lasso(X, bad, Eigen::VectorXd()), PreconditionError);
}
