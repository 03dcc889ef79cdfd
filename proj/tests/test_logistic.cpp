#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "atmle/rng.hpp"
#include "atmle/solvers.hpp"
#include "atmle/stats.hpp"

using namespace atmle;

TEST_CASE("intercept-only with balanced labels gives beta = 0") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 1);
  Eigen::VectorXd y(4);
  y << 0, 0, 1, 1;
  const CoefficientFit fit = fit_logistic(X, y);
  CHECK(fit.converged);
  CHECK(fit.beta[0] == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("saturated two-cell model matches the empirical logits") {
  // x=0: 3 zeros, 1 one (p=1/4); x=1: 1 zero, 3 ones (p=3/4)
  Eigen::MatrixXd X(8, 2);
  Eigen::VectorXd y(8);
  int r = 0;
  for (int i = 0; i < 4; ++i, ++r) {
    X.row(r) << 1, 0;
    y[r] = i < 1 ? 1 : 0;
  }
  for (int i = 0; i < 4; ++i, ++r) {
    X.row(r) << 1, 1;
    y[r] = i < 3 ? 1 : 0;
  }
  const CoefficientFit fit = fit_logistic(X, y);
  CHECK(fit.beta[0] == doctest::Approx(-std::log(3.0)).epsilon(1e-7));
  CHECK(fit.beta[1] == doctest::Approx(2.0 * std::log(3.0)).epsilon(1e-7));
}

TEST_CASE("recovers the external treatment mechanism from simulated draws") {
  // A ~ Bernoulli(expit(-2 + 1.6 W1 - 2 W2)), W ~ N(0,1)
  const long n = 200000;
  Rng rng(99);
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (long i = 0; i < n; ++i) {
    const double w1 = rng.normal(), w2 = rng.normal();
    X.row(i) << 1.0, w1, w2;
    y[i] = rng.bernoulli(expit(-2.0 + 1.6 * w1 - 2.0 * w2));
  }
  const CoefficientFit fit = fit_logistic(X, y);
  REQUIRE(fit.converged);
  // 3 MC standard errors from the inverse information
  const Eigen::MatrixXd cov = fit.information.inverse() / double(n);
  const Eigen::Vector3d truth(-2.0, 1.6, -2.0);
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(fit.beta[j] - truth[j]) <= 3.0 * std::sqrt(cov(j, j)));
  }
}

TEST_CASE("complete separation raises an error naming the separating column") {
  Eigen::MatrixXd X(4, 2);
  X << 1, 0, 1, 0, 1, 1, 1, 1;
  Eigen::VectorXd y(4);
  y << 0, 0, 1, 1;
  CHECK_THROWS_AS(fit_logistic(X, y, Eigen::VectorXd(), {"1", "x"}), SeparationError);
  try {
    fit_logistic(X, y, Eigen::VectorXd(), {"1", "x"});
  } catch (const SeparationError& e) {
    CHECK(e.column == "x");
  }
}

TEST_CASE("rank deficiency lists the redundant columns") {
  Eigen::MatrixXd X(6, 3);
  for (int i = 0; i < 6; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = double(i);
    X(i, 2) = 2.0 * double(i);  // collinear with column 1
  }
  Eigen::VectorXd y(6);
  y << 0, 1, 0, 1, 0, 1;
  CHECK_THROWS_AS(fit_logistic(X, y, Eigen::VectorXd(), {"1", "x", "2x"}), RankError);
}

TEST_CASE("analytic score matches central finite differences of the log-likelihood") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const long n = 60;
    const int p = 3;
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n), w(n), beta(p);
    for (long i = 0; i < n; ++i) {
      X(i, 0) = 1.0;
      for (int j = 1; j < p; ++j) X(i, j) = rng.normal();
      y[i] = rng.bernoulli(0.5);
      w[i] = 0.2 + rng.uniform();
    }
    for (int j = 0; j < p; ++j) beta[j] = rng.normal(0.0, 0.7);

    const Eigen::VectorXd analytic = logistic_score(X, y, w, beta);
    const double h = 1e-6;
    for (int j = 0; j < p; ++j) {
      Eigen::VectorXd up = beta, dn = beta;
      up[j] += h;
      dn[j] -= h;
      const double fd = (logistic_log_likelihood(X, y, w, up) -
                         logistic_log_likelihood(X, y, w, dn)) /
                        (2.0 * h);
      CHECK(std::abs(analytic[j] - fd) <=
            1e-6 * std::max(1.0, std::abs(analytic[j])));
    }
  }
}

TEST_CASE("objective trace is non-increasing") {
  Rng rng(3);
  const long n = 200;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (long i = 0; i < n; ++i) {
    X.row(i) << 1.0, rng.normal(), rng.normal();
    y[i] = rng.bernoulli(expit(0.5 * X(i, 1) - X(i, 2)));
  }
  const CoefficientFit fit = fit_logistic(X, y);
  for (size_t t = 1; t < fit.objective_trace.size(); ++t) {
    CHECK(fit.objective_trace[t] <= fit.objective_trace[t - 1] + 1e-10);
  }
}

TEST_CASE("integer weights behave like row replication") {
  Eigen::MatrixXd X2(4, 1);
  X2.setOnes();
  Eigen::VectorXd y2(4);
  y2 << 1, 0, 0, 0;
  const CoefficientFit a = fit_logistic(X2, y2);
  Eigen::MatrixXd X3(2, 1);
  X3.setOnes();
  Eigen::VectorXd y3(2);
  y3 << 1, 0;
  Eigen::VectorXd w3(2);
  w3 << 1, 3;
  const CoefficientFit b = fit_logistic(X3, y3, w3);
  CHECK(a.beta[0] == doctest::Approx(b.beta[0]).epsilon(1e-8));
}
