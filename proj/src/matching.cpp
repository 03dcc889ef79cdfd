#include "atmle/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "atmle/rng.hpp"
#include "atmle/stats.hpp"

namespace atmle {

namespace {

double transform_score(double p, ScoreScale scale) {
  if (scale == ScoreScale::probability) return p;
  return logit(clamp_prob(p, 1e-12, 1.0 - 1e-12));
}

using ScoredSet = std::set<std::pair<double, int>>;

// Nearest available entry to `target`; ties broken by lowest row index.
ScoredSet::iterator nearest_available(const ScoredSet& avail, double target) {
  auto above = avail.lower_bound({target, std::numeric_limits<int>::min()});
  if (above == avail.begin()) return above;  // may be end() when empty
  if (above == avail.end()) {
    const double below_score = std::prev(above)->first;
    return avail.lower_bound({below_score, std::numeric_limits<int>::min()});
  }
  const double below_score = std::prev(above)->first;
  auto below = avail.lower_bound({below_score, std::numeric_limits<int>::min()});
  const double d_above = above->first - target;
  const double d_below = target - below_score;
  if (d_below < d_above) return below;
  if (d_above < d_below) return above;
  return below->second < above->second ? below : above;
}

Cohort analysis_subset(const Cohort& cohort, const std::vector<int>& trial_rows,
                       const std::vector<int>& selected_external) {
  std::vector<int> rows = trial_rows;
  rows.insert(rows.end(), selected_external.begin(), selected_external.end());
  std::sort(rows.begin(), rows.end());
  return subset_cohort(cohort, rows);
}

}  // namespace

std::vector<int> apply_eligibility_filter(
    const Cohort& cohort, const std::vector<int>& external_rows,
    const std::function<bool(const Eigen::RowVectorXd&)>& predicate) {
  std::vector<int> kept;
  for (int i : external_rows) {
    const Eigen::RowVectorXd w = cohort.covariates.row(i);
    if (predicate(w)) kept.push_back(i);
  }
  return kept;
}

MatchResult match_trial_enrollment(const Cohort& cohort,
                                   const Eigen::VectorXd& enrollment_score,
                                   const MatchSpec& spec) {
  const long n = cohort.rows();
  if (enrollment_score.size() != n) {
    throw PreconditionError("enrollment score must cover every cohort row");
  }
  if (spec.k < 1) throw PreconditionError("k must be at least 1");
  const auto [trial_rows, external_rows] = split_by_study(cohort);
  if (trial_rows.empty()) throw PreconditionError("no trial rows to match");
  if (!spec.replacement &&
      long(external_rows.size()) < long(spec.k) * long(trial_rows.size())) {
    throw PoolExhaustedError(
        "external pool too small for 1:" + std::to_string(spec.k) + " matching: need " +
        std::to_string(long(spec.k) * long(trial_rows.size())) + ", have " +
        std::to_string(external_rows.size()) + " (shortfall " +
        std::to_string(long(spec.k) * long(trial_rows.size()) -
                       long(external_rows.size())) +
        ")");
  }

  MatchResult result;
  result.stage = MatchResult::Stage::tes_only;
  result.balance_before = balance_report(cohort);

  ScoredSet avail;
  for (int i : external_rows) {
    avail.insert({transform_score(enrollment_score[i], spec.scale), i});
  }

  std::vector<int> order = trial_rows;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (enrollment_score[a] != enrollment_score[b]) {
      return enrollment_score[a] > enrollment_score[b];
    }
    return a < b;
  });

  std::set<int> selected;
  for (int unit : order) {
    const double target = transform_score(enrollment_score[unit], spec.scale);
    std::vector<std::pair<double, int>> taken;  // with-replacement scratch
    int received = 0;
    for (int t = 0; t < spec.k; ++t) {
      const auto it = nearest_available(avail, target);
      if (it == avail.end()) break;
      const double dist = std::abs(it->first - target);
      if (spec.caliper && dist > *spec.caliper) break;
      const int row = it->second;
      result.pair_distances.push_back(dist);
      result.trim_units.push_back({{row}, {dist}, dist});
      selected.insert(row);
      taken.push_back(*it);
      avail.erase(it);
      ++received;
    }
    if (spec.replacement) {
      for (const auto& entry : taken) avail.insert(entry);
    }
    if (received < spec.k) {
      ++result.shortfall_units;
    }
  }
  if (result.shortfall_units > 0) {
    result.warnings.push_back(std::to_string(result.shortfall_units) +
                              " trial unit(s) received fewer than " +
                              std::to_string(spec.k) + " matches under the caliper");
  }
  if (spec.replacement) {
    // with replacement a row may be matched repeatedly; keep its best distance
    std::map<int, TrimUnit> best;
    for (const auto& u : result.trim_units) {
      auto [it, inserted] = best.try_emplace(u.members[0], u);
      if (!inserted && u.distance < it->second.distance) it->second = u;
    }
    result.trim_units.clear();
    for (auto& [row, unit] : best) result.trim_units.push_back(std::move(unit));
  }

  result.selected_external.assign(selected.begin(), selected.end());
  result.balance_after =
      balance_report(analysis_subset(cohort, trial_rows, result.selected_external));
  return result;
}

MatchResult match_propensity(const Cohort& cohort, const MatchResult& stage1, int m,
                             const BasisSpec& score_basis, const FitOptions& fit_options) {
  if (m < 1) throw PreconditionError("m must be at least 1 for propensity matching");
  const auto [trial_rows, external_rows] = split_by_study(cohort);
  (void)external_rows;

  std::vector<int> treated, controls;
  for (int i : stage1.selected_external) {
    (cohort.treatment[i] == 1 ? treated : controls).push_back(i);
  }
  if (treated.empty() || controls.empty()) {
    throw PreconditionError(
        "propensity matching requires both treated and control rows in the selected "
        "external subset");
  }

  // Refit the propensity on the stage-1 subset only.
  const long ns = long(stage1.selected_external.size());
  Eigen::MatrixXd W(ns, cohort.dim());
  Eigen::VectorXd label(ns);
  for (long i = 0; i < ns; ++i) {
    const int row = stage1.selected_external[size_t(i)];
    W.row(i) = cohort.covariates.row(row);
    label[i] = double(cohort.treatment[row]);
  }
  Design design = expand_basis(W, score_basis);
  (void)fit_options;
  const CoefficientFit fit = fit_logistic(design.X, label, Eigen::VectorXd(),
                                          design.info.names);
  std::map<int, double> score;  // logit scale
  {
    const Eigen::VectorXd eta = design.X * fit.beta;
    for (long i = 0; i < ns; ++i) score[stage1.selected_external[size_t(i)]] = eta[i];
  }

  MatchResult result;
  result.stage = MatchResult::Stage::tes_then_ps;
  result.balance_before = stage1.balance_after;
  result.treatment_balance_before =
      treatment_balance_report(cohort, stage1.selected_external);
  result.warnings = stage1.warnings;

  std::sort(treated.begin(), treated.end(), [&](int a, int b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  });
  ScoredSet avail;
  for (int c : controls) avail.insert({score[c], c});

  std::set<int> selected;
  for (int unit : treated) {
    if (long(avail.size()) < m) {
      ++result.shortfall_units;
      continue;
    }
    TrimUnit group;
    group.members = {unit};
    const double target = score[unit];
    for (int t = 0; t < m; ++t) {
      const auto it = nearest_available(avail, target);
      const double dist = std::abs(it->first - target);
      group.members.push_back(it->second);
      group.pair_distances.push_back(dist);
      result.pair_distances.push_back(dist);
      avail.erase(it);
    }
    group.distance = 0.0;
    for (double d : group.pair_distances) group.distance += d;
    group.distance /= double(group.pair_distances.size());
    for (int row : group.members) selected.insert(row);
    result.trim_units.push_back(std::move(group));
  }
  if (result.shortfall_units > 0) {
    result.warnings.push_back(std::to_string(result.shortfall_units) +
                              " treated external unit(s) dropped: fewer than " +
                              std::to_string(m) + " controls available");
  }

  result.selected_external.assign(selected.begin(), selected.end());
  result.balance_after =
      balance_report(analysis_subset(cohort, trial_rows, result.selected_external));
  result.treatment_balance_after =
      treatment_balance_report(cohort, result.selected_external);
  return result;
}

MatchResult trim_to_size(const Cohort& cohort, const MatchResult& result,
                         int target_external_n, TrimPolicy policy, uint64_t seed) {
  const int current = int(result.selected_external.size());
  if (target_external_n > current) {
    throw PreconditionError("trim target " + std::to_string(target_external_n) +
                            " exceeds the selected external size " +
                            std::to_string(current));
  }
  if (target_external_n == current) return result;

  std::vector<int> order(result.trim_units.size());
  std::iota(order.begin(), order.end(), 0);
  if (policy == TrimPolicy::best_distance) {
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const auto& ua = result.trim_units[size_t(a)];
      const auto& ub = result.trim_units[size_t(b)];
      if (ua.distance != ub.distance) return ua.distance < ub.distance;
      return *std::min_element(ua.members.begin(), ua.members.end()) <
             *std::min_element(ub.members.begin(), ub.members.end());
    });
  } else {
    Rng rng(seed);
    rng.shuffle(order);
  }

  MatchResult out;
  out.stage = result.stage;
  out.balance_before = result.balance_before;
  out.treatment_balance_before = result.treatment_balance_before;
  out.warnings = result.warnings;
  out.shortfall_units = result.shortfall_units;

  std::set<int> selected;
  int room = target_external_n;
  for (int idx : order) {
    if (room == 0) break;
    const TrimUnit& unit = result.trim_units[size_t(idx)];
    // skip members already selected via another unit (with-replacement case)
    std::vector<int> fresh;
    for (int row : unit.members) {
      if (!selected.count(row)) fresh.push_back(row);
    }
    if (fresh.empty()) continue;
    if (int(fresh.size()) <= room) {
      out.trim_units.push_back(unit);
      for (int row : fresh) selected.insert(row);
      for (double d : unit.pair_distances) out.pair_distances.push_back(d);
      room -= int(fresh.size());
    } else {
      // partial unit to hit the exact target; pairing is broken here
      TrimUnit partial;
      partial.distance = unit.distance;
      for (int row : fresh) {
        if (room == 0) break;
        partial.members.push_back(row);
        selected.insert(row);
        --room;
      }
      const size_t pairs = partial.members.empty()
                               ? 0
                               : std::min(unit.pair_distances.size(),
                                          partial.members.size() - 1);
      partial.pair_distances.assign(unit.pair_distances.begin(),
                                    unit.pair_distances.begin() + long(pairs));
      for (double d : partial.pair_distances) out.pair_distances.push_back(d);
      out.trim_units.push_back(std::move(partial));
      out.warnings.push_back("matched unit split to reach the exact external target " +
                             std::to_string(target_external_n));
    }
  }

  out.selected_external.assign(selected.begin(), selected.end());
  const auto [trial_rows, external_rows] = split_by_study(cohort);
  (void)external_rows;
  out.balance_after =
      balance_report(analysis_subset(cohort, trial_rows, out.selected_external));
  if (out.stage == MatchResult::Stage::tes_then_ps) {
    out.treatment_balance_after =
        treatment_balance_report(cohort, out.selected_external);
  }
  return out;
}

std::vector<int> sample_random(const std::vector<int>& pool, int n, uint64_t seed) {
  if (n < 0 || n > int(pool.size())) {
    throw PreconditionError("random sample size " + std::to_string(n) +
                            " exceeds the pool size " + std::to_string(pool.size()));
  }
  Rng rng(seed);
  std::vector<int> positions = sample_without_replacement(int(pool.size()), n, rng);
  std::vector<int> out;
  out.reserve(size_t(n));
  for (int p : positions) out.push_back(pool[size_t(p)]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace atmle
