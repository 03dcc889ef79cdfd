#include "atmle/simulation.hpp"

#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <sstream>
#include <thread>

#include "atmle/rng.hpp"
#include "atmle/stats.hpp"

namespace atmle {

double dgp_bias(int source, const Eigen::RowVectorXd& w, int a) {
  switch (source) {
    case 1: return 0.0;
    case 2:
    case 3: return 0.5 + 1.4 * w[0] * a;
    case 4: return 0.5 + 1.4 * w[0] * a + 0.2 * w[2];
    case 5: return 1.3 + 1.4 * w[0] * a + 0.2 * w[2];
    default: throw PreconditionError("unknown source label " + std::to_string(source));
  }
}

Cohort generate_pool(const DGPConfig& config) {
  if (config.n_rct < 1) throw PreconditionError("n_rct must be positive");
  long n = config.n_rct;
  for (int s : config.source_sizes) {
    if (s < 0) throw PreconditionError("source sizes must be nonnegative");
    n += s;
  }

  Cohort c;
  c.study.resize(n);
  c.covariates.resize(n, 3);
  c.treatment.resize(n);
  c.outcome.resize(n);
  c.source.resize(n);
  c.randomization_prob = config.randomization_prob;

  Rng rng(config.seed);
  long row = 0;
  for (long i = 0; i < config.n_rct; ++i, ++row) {
    const double w1 = rng.normal(), w2 = rng.normal(), w3 = rng.normal();
    const int a = rng.bernoulli(config.randomization_prob);
    const double uy = rng.normal(0.0, config.uy_sd);
    c.study[row] = 1;
    c.source[row] = 0;
    c.covariates.row(row) << w1, w2, w3;
    c.treatment[row] = a;
    c.outcome[row] = 2.5 + 0.9 * w1 + 1.1 * w2 + 2.7 * w3 + 0.5 * a + uy;
  }
  for (int j = 1; j <= 5; ++j) {
    const double shift = 0.2 * double(j - 1);
    for (int i = 0; i < config.source_sizes[size_t(j - 1)]; ++i, ++row) {
      const double w1 = rng.normal(shift, 1.0);
      const double w2 = rng.normal(-shift, 1.0);
      const double w3 = rng.normal(shift, 1.0);
      const int a = rng.bernoulli(expit(-2.0 + 1.6 * w1 - 2.0 * w2));
      const double uy = rng.normal(0.0, config.uy_sd);
      c.study[row] = 0;
      c.source[row] = j;
      c.covariates.row(row) << w1, w2, w3;
      c.treatment[row] = a;
      const Eigen::RowVectorXd w = c.covariates.row(row);
      c.outcome[row] =
          2.5 + 0.9 * w1 + 1.1 * w2 + 2.7 * w3 + 0.5 * a + uy + dgp_bias(j, w, a);
    }
  }
  return validate_cohort(std::move(c));
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::rct_only: return "rct_only";
    case Strategy::random_sample: return "random";
    case Strategy::tes_ps_matching: return "tes_ps_matching";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "rct_only") return Strategy::rct_only;
  if (name == "random") return Strategy::random_sample;
  if (name == "tes_ps_matching") return Strategy::tes_ps_matching;
  throw ConfigError("unknown strategy '" + name +
                    "' (expected rct_only, random, or tes_ps_matching)");
}

namespace {

std::array<long, 5> source_counts(const Cohort& pool, const std::vector<int>& selected) {
  std::array<long, 5> counts{};
  for (int i : selected) {
    const int j = pool.source[i];
    if (j >= 1 && j <= 5) ++counts[size_t(j - 1)];
  }
  return counts;
}

Cohort analysis_cohort(const Cohort& pool, const std::vector<int>& trial_rows,
                       const std::vector<int>& selected_external) {
  std::vector<int> rows = trial_rows;
  rows.insert(rows.end(), selected_external.begin(), selected_external.end());
  std::sort(rows.begin(), rows.end());
  return subset_cohort(pool, rows);
}

}  // namespace

std::vector<ReplicateCell> run_replicate(const ExperimentConfig& config,
                                         int replicate_index) {
  const uint64_t rep_seed = derive_seed(config.master_seed, uint64_t(replicate_index));

  DGPConfig dgp = config.dgp;
  dgp.seed = derive_seed(rep_seed, 1);
  const Cohort pool = generate_pool(dgp);
  const auto [trial_rows, external_rows] = split_by_study(pool);

  std::vector<ReplicateCell> cells;
  auto run_cell = [&](Strategy strategy, int external_n, auto&& body) {
    ReplicateCell cell;
    cell.strategy = strategy;
    cell.external_n = external_n;
    try {
      body(cell);
    } catch (const std::exception& err) {
      cell.ok = false;
      cell.error = err.what();
    }
    cells.push_back(std::move(cell));
  };

  for (Strategy strategy : config.strategies) {
    if (strategy == Strategy::rct_only) {
      run_cell(strategy, 0, [&](ReplicateCell& cell) {
        const Cohort rct = subset_cohort(pool, trial_rows);
        EstimatorOptions opts = config.estimator;
        opts.fit.seed = derive_seed(rep_seed, 2);
        cell.estimate = estimate_tmle_rct(rct, opts.qbar_basis, opts.fit, opts.alpha);
      });
    } else if (strategy == Strategy::random_sample) {
      for (int external_n : config.external_sizes) {
        run_cell(strategy, external_n, [&](ReplicateCell& cell) {
          const std::vector<int> selected = sample_random(
              external_rows, external_n, derive_seed(rep_seed, 1000 + uint64_t(external_n)));
          const Cohort analysis = analysis_cohort(pool, trial_rows, selected);
          EstimatorOptions opts = config.estimator;
          opts.fit.seed = derive_seed(rep_seed, 2000 + uint64_t(external_n));
          cell.estimate = estimate_atmle(analysis, opts).combined;
          cell.source_counts = source_counts(pool, selected);
        });
      }
    } else {
      // The k:1 / m:1 match is shared across external sizes; only the trim
      // differs.
      MatchResult matched;
      bool matched_ok = false;
      std::string matched_error;
      try {
        EstimatorOptions opts = config.estimator;
        Eigen::VectorXd score(pool.rows());
        {
          NuisanceOptions no;
          no.score_basis = opts.score_basis;
          no.fit = opts.fit;
          no.fit.seed = derive_seed(rep_seed, 3);
          Design design = expand_basis(pool.covariates, no.score_basis);
          const CoefficientFit fit = fit_logistic(
              design.X, pool.study.cast<double>(), Eigen::VectorXd(), design.info.names);
          score = (design.X * fit.beta).unaryExpr([](double eta) { return expit(eta); });
        }
        MatchSpec spec;
        spec.k = config.k;
        spec.m = config.m;
        MatchResult stage1 = match_trial_enrollment(pool, score, spec);
        matched = config.m > 0
                      ? match_propensity(pool, stage1, config.m, opts.score_basis, opts.fit)
                      : std::move(stage1);
        matched_ok = true;
      } catch (const std::exception& err) {
        matched_error = err.what();
      }
      for (int external_n : config.external_sizes) {
        run_cell(strategy, external_n, [&](ReplicateCell& cell) {
          if (!matched_ok) throw Error(ErrorKind::runtime, matched_error);
          const MatchResult trimmed =
              trim_to_size(pool, matched, external_n, config.trim_policy,
                           derive_seed(rep_seed, 3000 + uint64_t(external_n)));
          const Cohort analysis =
              analysis_cohort(pool, trial_rows, trimmed.selected_external);
          EstimatorOptions opts = config.estimator;
          opts.fit.seed = derive_seed(rep_seed, 4000 + uint64_t(external_n));
          cell.estimate = estimate_atmle(analysis, opts).combined;
          cell.source_counts = source_counts(pool, trimmed.selected_external);
        });
      }
    }
  }
  return cells;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.replications < 2) throw PreconditionError("need at least 2 replications");
  if (config.strategies.empty()) throw PreconditionError("no strategies requested");

  std::vector<std::vector<ReplicateCell>> results(static_cast<size_t>(config.replications));
  const int workers_wanted =
      config.workers > 0 ? config.workers : int(std::thread::hardware_concurrency());
  const int workers = std::max(1, std::min(workers_wanted, config.replications));

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int idx = next.fetch_add(1);
      if (idx >= config.replications) break;
      results[size_t(idx)] = run_replicate(config, idx);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  // Aggregate in replicate order so the output is worker-count invariant.
  struct Agg {
    std::vector<double> points, widths;
    long covered = 0, rejected = 0, first_gt_last = 0;
    std::array<double, 5> counts{};
    long n_counts = 0;
  };
  std::map<std::pair<std::string, int>, Agg> agg;
  ExperimentResult out;
  for (int rep = 0; rep < config.replications; ++rep) {
    for (const ReplicateCell& cell : results[size_t(rep)]) {
      const auto key = std::make_pair(strategy_name(cell.strategy), cell.external_n);
      if (!cell.ok) {
        ++out.failed_cells;
        out.failures.push_back("replicate " + std::to_string(rep) + " " + key.first + "/" +
                               std::to_string(cell.external_n) + ": " + cell.error);
        continue;
      }
      Agg& a = agg[key];
      a.points.push_back(cell.estimate.point);
      a.widths.push_back(cell.estimate.ci_hi - cell.estimate.ci_lo);
      if (cell.estimate.ci_lo <= DGPConfig::true_ate &&
          DGPConfig::true_ate <= cell.estimate.ci_hi) {
        ++a.covered;
      }
      if (cell.estimate.p_value < 0.05) ++a.rejected;
      if (cell.strategy != Strategy::rct_only) {
        for (int j = 0; j < 5; ++j) a.counts[size_t(j)] += double(cell.source_counts[size_t(j)]);
        if (cell.source_counts[0] > cell.source_counts[4]) ++a.first_gt_last;
        ++a.n_counts;
      }
    }
  }

  // Row order: rct_only first, then by external size, strategies in the
  // requested order.
  std::vector<std::pair<std::string, int>> keys;
  for (Strategy s : config.strategies) {
    if (s == Strategy::rct_only) keys.emplace_back(strategy_name(s), 0);
  }
  for (int external_n : config.external_sizes) {
    for (Strategy s : config.strategies) {
      if (s != Strategy::rct_only) keys.emplace_back(strategy_name(s), external_n);
    }
  }
  for (const auto& key : keys) {
    const auto it = agg.find(key);
    if (it == agg.end()) continue;
    const Agg& a = it->second;
    MetricsRow row;
    row.strategy = key.first;
    row.external_n = key.second;
    row.n_replications = long(a.points.size());
    if (!a.points.empty()) {
      const Eigen::Map<const Eigen::VectorXd> pts(a.points.data(), long(a.points.size()));
      row.abs_bias = std::abs(pts.mean() - DGPConfig::true_ate);
      const double sd = sample_sd(pts);
      row.variance = sd * sd;
      row.mean_ci_width =
          Eigen::Map<const Eigen::VectorXd>(a.widths.data(), long(a.widths.size())).mean();
      row.coverage = double(a.covered) / double(row.n_replications);
      row.power = double(a.rejected) / double(row.n_replications);
    }
    out.rows.push_back(row);
    if (a.n_counts > 0) {
      SourceSummary s;
      for (int j = 0; j < 5; ++j) s.mean_counts[size_t(j)] = a.counts[size_t(j)] / double(a.n_counts);
      s.frac_first_exceeds_last = double(a.first_gt_last) / double(a.n_counts);
      out.source_stats[key] = s;
    }
  }
  return out;
}

namespace {

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char ch : s) {
    if (ch == '"') quoted += "\"\"";
    else quoted += ch;
  }
  quoted += "\"";
  return quoted;
}

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

std::string emit_metrics(const std::vector<MetricsRow>& rows, MetricsFormat format) {
  if (rows.empty()) throw PreconditionError("no metric rows to emit");
  std::ostringstream os;
  if (format == MetricsFormat::csv) {
    os << "strategy,external_n,abs_bias,variance,mean_ci_width,coverage,power,"
          "n_replications\n";
    for (const MetricsRow& r : rows) {
      os << csv_quote(r.strategy) << ',' << r.external_n << ',' << fmt_full(r.abs_bias)
         << ',' << fmt_full(r.variance) << ',' << fmt_full(r.mean_ci_width) << ','
         << fmt_full(r.coverage) << ',' << fmt_full(r.power) << ',' << r.n_replications
         << '\n';
    }
  } else {
    os << "| strategy | external_n | abs_bias | variance | mean_ci_width | coverage | "
          "power | n_replications |\n";
    os << "|---|---|---|---|---|---|---|---|\n";
    for (const MetricsRow& r : rows) {
      os << "| " << r.strategy << " | " << r.external_n << " | " << fmt_short(r.abs_bias)
         << " | " << fmt_short(r.variance) << " | " << fmt_short(r.mean_ci_width) << " | "
         << fmt_short(r.coverage) << " | " << fmt_short(r.power) << " | "
         << r.n_replications << " |\n";
    }
  }
  return os.str();
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("empty metrics CSV");
  if (line != "strategy,external_n,abs_bias,variance,mean_ci_width,coverage,power,n_replications") {
    throw ConfigError("unexpected metrics CSV header: " + line);
  }
  std::vector<MetricsRow> rows;
  long line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    // split respecting RFC-4180 quotes
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
      const char ch = line[i];
      if (quoted) {
        if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else if (ch == '"') {
          quoted = false;
        } else {
          cur += ch;
        }
      } else if (ch == '"') {
        quoted = true;
      } else if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    fields.push_back(cur);
    if (fields.size() != 8) {
      throw ConfigError("metrics CSV line " + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " fields, expected 8");
    }
    MetricsRow r;
    r.strategy = fields[0];
    r.external_n = std::stoi(fields[1]);
    r.abs_bias = std::stod(fields[2]);
    r.variance = std::stod(fields[3]);
    r.mean_ci_width = std::stod(fields[4]);
    r.coverage = std::stod(fields[5]);
    r.power = std::stod(fields[6]);
    r.n_replications = std::stol(fields[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace atmle
