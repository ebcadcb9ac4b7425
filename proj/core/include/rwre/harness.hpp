#pragma once

// Monte Carlo experiments: one walk per replicate stopped successively at the
// hitting times of the n grid, a fit at every stop, and the coverage of the
// chi-square regions.

#include "rwre/config.hpp"
#include "rwre/estimate.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rwre {

struct ExperimentPlan {
  ModelConfig model;
  Vector theta_star;
  std::vector<std::int64_t> n_grid;  // strictly increasing
  std::size_t replicates = 1;
  std::vector<double> gammas;
  std::uint64_t master_seed = 1;
  std::size_t threads = 0;  // 0: hardware concurrency
  std::size_t anchor = 0;   // a0 as a support index
  std::uint64_t max_steps_factor = kDefaultMaxStepsPerSite;
  OptimizerConfig optimizer;

  void validate() const;
};

struct ReplicateRecord {
  std::size_t replicate = 0;
  std::int64_t n = 0;
  bool failed = false;
  std::string message;
  std::uint64_t hitting_time = 0;
  Vector theta_hat;
  double loglik = 0.0;
  bool converged = false;
  bool at_boundary = false;
  bool sigma_reliable = false;
  std::optional<Matrix> sigma_hat;
  std::vector<bool> covered;  // per gamma; empty when failed
};

struct ExperimentReport {
  ExperimentPlan plan;
  std::vector<std::string> param_names;
  std::vector<ReplicateRecord> records;  // ordered by (replicate, n)
  std::size_t failures = 0;

  // Fraction of non-failed replicates whose region contains theta_star;
  // |n_grid| x |gammas|, NaN where every fit failed.
  Matrix coverage() const;
  std::vector<std::size_t> evaluated_per_n() const;
};

// order: optional permutation of replicate indices giving the execution order;
// the report does not depend on it.
ExperimentReport run_experiment(const ExperimentPlan& plan, std::span<const std::size_t> order = {});

// Walk, stops and fits of a single replicate.
std::vector<ReplicateRecord> run_replicate(const ExperimentPlan& plan, const ParamSpace& space,
                                           const EnvKernel& kernel, std::size_t replicate);

struct QuantileRow {
  std::int64_t n = 0;
  std::string quantity;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  std::size_t count = 0;
};

// Mean over replicates of the Hessian-based covariance (n sigma_hat)^{-1}
// against the empirical covariance of theta_hat across replicates.
struct CovarianceRow {
  std::int64_t n = 0;
  std::string entry;
  double hessian_based = 0.0;
  double empirical = 0.0;
};

struct SummaryTables {
  std::vector<std::int64_t> n_grid;
  std::vector<double> gammas;
  std::vector<QuantileRow> theta_quantiles;
  std::vector<QuantileRow> sigma_quantiles;
  Matrix coverage;
  std::vector<std::size_t> evaluated;
  std::vector<CovarianceRow> covariance;
};

SummaryTables summarize(const ExperimentReport& report);

// Linear-interpolation sample quantile (type 7).
double sample_quantile(std::vector<double> values, double prob);

// Output directory layout: records.csv, coverage.csv, manifest.json. All three
// are byte-identical across runs of the same plan, whatever the thread count;
// the thread count is not recorded.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);
ExperimentReport read_report(const std::filesystem::path& dir);
// theta_quantiles.csv, sigma_quantiles.csv, coverage.csv, covariance_check.csv
void write_summary(const SummaryTables& tables, const std::filesystem::path& dir);

std::string format_double(double v);
std::string version_string();

}  // namespace rwre
