#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "atmle/cohort.hpp"

namespace atmle {

// Covariate balance between the two study groups, summarized by the
// non-intercept coefficients of a logistic refit of the group label on
// [1, W] plus per-covariate standardized mean differences.
struct BalanceReport {
  Eigen::VectorXd coefficients;  // non-intercept entries
  double max_abs_coef = 0.0;
  Eigen::VectorXd smd;
  bool separation = false;  // refit hit unbounded likelihood; coefs not usable
  std::vector<std::string> names;
};

// Label = study indicator (S ~ [1, W]). Both groups must be present.
BalanceReport balance_report(const Cohort& cohort);

// Label = treatment indicator (A ~ [1, W]) over the given rows.
BalanceReport treatment_balance_report(const Cohort& cohort, const std::vector<int>& rows);

}  // namespace atmle
