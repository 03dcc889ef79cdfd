#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "atmle/cohort.hpp"
#include "atmle/estimators.hpp"
#include "atmle/matching.hpp"

namespace atmle {

// Synthetic hybrid-study generator: a trial cohort plus five external
// sources with increasing covariate shift and outcome bias.
//   trial:    W1,W2,W3 ~ N(0,1) iid, A ~ Bern(r)
//   source j: W1,W3 ~ N(0.2(j-1),1), W2 ~ N(-0.2(j-1),1),
//             A ~ Bern(expit(-2 + 1.6 W1 - 2 W2))
//   Y = 2.5 + 0.9 W1 + 1.1 W2 + 2.7 W3 + 0.5 A + U_Y + (1-S) b
// with U_Y ~ N(0, uy_sd^2) and source-specific bias b.
struct DGPConfig {
  int n_rct = 400;
  std::array<int, 5> source_sizes = {5000, 5000, 5000, 5000, 5000};
  uint64_t seed = 1;
  double uy_sd = 3.0;
  double randomization_prob = 0.5;
  static constexpr double true_ate = 0.5;
};

// Outcome bias of external source j (1-based) at (w, a).
double dgp_bias(int source, const Eigen::RowVectorXd& w, int a);

// Trial rows first (source label 0), then sources 1..5; deterministic in
// the seed.
Cohort generate_pool(const DGPConfig& config);

enum class Strategy { rct_only, random_sample, tes_ps_matching };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct ExperimentConfig {
  int replications = 500;
  std::vector<int> external_sizes = {500, 600, 700, 800, 900, 1000};
  std::vector<Strategy> strategies = {Strategy::rct_only, Strategy::random_sample,
                                      Strategy::tes_ps_matching};
  int k = 30;
  int m = 1;
  TrimPolicy trim_policy = TrimPolicy::best_distance;
  uint64_t master_seed = 20240801;
  int workers = 0;  // 0 = hardware concurrency; results do not depend on it
  DGPConfig dgp;
  EstimatorOptions estimator;
};

struct ReplicateCell {
  Strategy strategy{};
  int external_n = 0;
  Estimate estimate;
  std::array<long, 5> source_counts{};  // selected externals per source
  bool ok = true;
  std::string error;
};

// One full draw-and-estimate pass: a fresh pool from the replicate-derived
// seed, one analysis cohort per (strategy, size), the designated estimator
// on each.
std::vector<ReplicateCell> run_replicate(const ExperimentConfig& config,
                                         int replicate_index);

struct MetricsRow {
  std::string strategy;
  int external_n = 0;
  double abs_bias = 0.0;
  double variance = 0.0;
  double mean_ci_width = 0.0;
  double coverage = 0.0;
  double power = 0.0;
  long n_replications = 0;
};

struct SourceSummary {
  std::array<double, 5> mean_counts{};
  double frac_first_exceeds_last = 0.0;  // share of replicates with n(source1) > n(source5)
};

struct ExperimentResult {
  std::vector<MetricsRow> rows;
  std::map<std::pair<std::string, int>, SourceSummary> source_stats;
  long failed_cells = 0;
  std::vector<std::string> failures;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

enum class MetricsFormat { csv, markdown };
std::string emit_metrics(const std::vector<MetricsRow>& rows, MetricsFormat format);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

}  // namespace atmle
