#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "atmle/error.hpp"

namespace atmle {

// One study record: (study indicator, covariates, treatment, outcome).
struct Observation {
  int study = 0;                // 1 = trial participant, 0 = external
  Eigen::VectorXd covariates;   // fixed dimension across the cohort
  int treatment = 0;            // 1 = active arm
  double outcome = 0.0;
  int source = -1;              // optional data-source label, -1 = absent
};

// Validated columnar cohort. Immutable after construction; row order is
// significant and preserved by every operation that consumes it.
struct Cohort {
  Eigen::VectorXi study;        // n
  Eigen::MatrixXd covariates;   // n x d
  Eigen::VectorXi treatment;    // n
  Eigen::VectorXd outcome;      // n
  Eigen::VectorXi source;       // n, -1 where absent
  double randomization_prob = 0.5;  // known P(A=1 | study, W) in the trial
  std::array<long, 4> cell_counts{};  // counts by (study, treatment): s*2+a

  long rows() const { return study.size(); }
  int dim() const { return int(covariates.cols()); }
  bool has_source() const { return (source.array() >= 0).any(); }
};

// Checks invariants (binary study/treatment, finite values, consistent
// covariate dimension, r in (0,1)) and tabulates the (s,a) cells.
Cohort validate_cohort(const std::vector<Observation>& rows, double randomization_prob);

// Columnar variant used by file ingestion and the generators; idempotent.
Cohort validate_cohort(Cohort raw);

// Row indices of trial and external records, each in original order.
std::pair<std::vector<int>, std::vector<int>> split_by_study(const Cohort& cohort);

// New cohort holding the given rows in the given order.
Cohort subset_cohort(const Cohort& cohort, const std::vector<int>& indices);

// Concatenation preserving per-argument row order (first then second).
Cohort concat_cohorts(const Cohort& first, const Cohort& second);

}  // namespace atmle
