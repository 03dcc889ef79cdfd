#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>

#include "atmle/balance.hpp"
#include "atmle/cohort.hpp"
#include "atmle/nuisance.hpp"

namespace atmle {

enum class ScoreScale { logit, probability };
enum class TrimPolicy { best_distance, random };

struct MatchSpec {
  int k = 1;                          // externals matched to each trial unit
  int m = 0;                          // controls per external treated unit; 0 skips stage 2
  ScoreScale scale = ScoreScale::logit;
  bool replacement = false;
  std::optional<double> caliper;      // in score-scale units
  std::optional<int> target_external_n;
};

// The unit kept or dropped as a block when trimming: a single matched
// external after stage 1, or a treated external with its matched controls
// after stage 2.
struct TrimUnit {
  std::vector<int> members;            // pooled-cohort row indices
  std::vector<double> pair_distances;  // one per match event inside the unit
  double distance = 0.0;               // ranking distance (mean over pairs)
};

struct MatchResult {
  enum class Stage { tes_only, tes_then_ps };
  std::vector<int> selected_external;  // ascending pooled-cohort row indices
  std::vector<double> pair_distances;  // one entry per match event
  Stage stage = Stage::tes_only;
  BalanceReport balance_before;        // trial vs. full external pool
  BalanceReport balance_after;         // trial vs. selected externals
  std::optional<BalanceReport> treatment_balance_before;  // within externals, stage 2
  std::optional<BalanceReport> treatment_balance_after;
  std::vector<TrimUnit> trim_units;
  std::vector<std::string> warnings;
  int shortfall_units = 0;  // trial units under-matched (caliper) or treated dropped
};

// Outcome-blind pre-filter: keeps external rows whose covariates satisfy the
// predicate, in their original order.
std::vector<int> apply_eligibility_filter(
    const Cohort& cohort, const std::vector<int>& external_rows,
    const std::function<bool(const Eigen::RowVectorXd&)>& predicate);

// Stage 1: greedy nearest-neighbor 1:k matching of every trial unit on the
// trial enrollment score. Trial units are processed in descending score
// order; each unit takes its k matches one at a time by smallest absolute
// distance on the chosen scale, ties broken by lowest row index.
MatchResult match_trial_enrollment(const Cohort& cohort,
                                   const Eigen::VectorXd& enrollment_score,
                                   const MatchSpec& spec);

// Stage 2: refits the external propensity on the stage-1 subset only, then
// greedily matches each selected external treated unit with m controls on
// the logit scale, treated units in descending propensity order. Treated
// units with fewer than m available controls are dropped with a warning.
MatchResult match_propensity(const Cohort& cohort, const MatchResult& stage1, int m,
                             const BasisSpec& score_basis = BasisSpec::main_terms(),
                             const FitOptions& fit_options = {});

// Reduces the selected external set to exactly `target_external_n` rows,
// keeping whole matched units: best_distance keeps the units with smallest
// distances; random subsamples units uniformly with the given seed.
MatchResult trim_to_size(const Cohort& cohort, const MatchResult& result,
                         int target_external_n, TrimPolicy policy, uint64_t seed = 0);

// Uniform sample of n pool entries without replacement, ascending order.
std::vector<int> sample_random(const std::vector<int>& pool, int n, uint64_t seed);

}  // namespace atmle
