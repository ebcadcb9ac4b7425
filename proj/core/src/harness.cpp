#include "rwre/harness.hpp"

#include "rwre/error.hpp"
#include "rwre/walk.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#ifndef RWRE_VERSION
#define RWRE_VERSION "unknown"
#endif

namespace rwre {

using nlohmann::json;

void ExperimentPlan::validate() const {
  if (n_grid.empty()) throw InputError("n_grid must not be empty");
  if (n_grid.front() < 1) throw InputError("n_grid values must be positive");
  for (std::size_t i = 1; i < n_grid.size(); ++i) {
    if (n_grid[i] <= n_grid[i - 1]) throw InputError("n_grid must be strictly increasing");
  }
  if (replicates < 1) throw InputError("replicates must be at least 1");
  for (double g : gammas) {
    if (!(g > 0.0 && g < 1.0)) throw InputError("gammas must lie in (0, 1)");
  }
  if (max_steps_factor < 1) throw InputError("max_steps_factor must be at least 1");
  optimizer.validate();
}

namespace {

std::vector<std::string> names_of(const ParamSpace& space) {
  std::vector<std::string> names = space.param_names();
  for (std::size_t k = names.size(); k < space.dim(); ++k) names.push_back("theta" + std::to_string(k));
  return names;
}

// Index of the first visit to m.
std::uint64_t first_visit(const WalkTrajectory& traj, std::int64_t m) {
  const auto it = std::find(traj.positions.begin(), traj.positions.end(), m);
  return static_cast<std::uint64_t>(it - traj.positions.begin());
}

ReplicateRecord fit_record(const ExperimentPlan& plan, const ParamSpace& space, const WalkTrajectory& traj,
                           std::size_t replicate, std::int64_t n) {
  ReplicateRecord rec;
  rec.replicate = replicate;
  rec.n = n;
  try {
    rec.hitting_time = first_visit(traj, n);
    const MleResult res = fit(space, left_steps(traj, n), plan.anchor, plan.optimizer);
    rec.theta_hat = res.theta_hat;
    rec.loglik = res.loglik_at_hat;
    rec.converged = res.converged;
    rec.at_boundary = res.at_boundary;
    rec.sigma_reliable = res.sigma_reliable;
    rec.sigma_hat = res.sigma_hat;
    if (!res.converged) {
      rec.failed = true;
      rec.message = "optimizer did not converge";
    } else if (!res.sigma_hat) {
      rec.failed = true;
      rec.message = "information estimate unavailable";
    } else {
      for (double g : plan.gammas) rec.covered.push_back(confidence_region(res, g).contains(plan.theta_star));
    }
  } catch (const Error& e) {
    rec.failed = true;
    rec.message = e.what();
    rec.covered.clear();
  }
  return rec;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(std::move(cell));
  return out;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw InputError("malformed number '" + s + "'");
  return v;
}

std::int64_t parse_int(const std::string& s) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw InputError("malformed integer '" + s + "'");
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

json model_to_json(const ModelConfig& m) {
  json j;
  j["parameterization"] = m.parameterization;
  j["support"] = m.support;
  j["epsilon"] = m.epsilon;
  j["lower"] = m.lower;
  j["upper"] = m.upper;
  j["weight_lower"] = m.weight_lower;
  j["weight_upper"] = m.weight_upper;
  j["beta"] = m.beta;
  j["g1"] = m.g1;
  j["pattern"] = m.pattern;
  return j;
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.parameterization = j.at("parameterization").get<std::string>();
  m.support = j.at("support").get<std::vector<double>>();
  m.epsilon = j.at("epsilon").get<double>();
  m.lower = j.at("lower").get<std::vector<double>>();
  m.upper = j.at("upper").get<std::vector<double>>();
  m.weight_lower = j.at("weight_lower").get<double>();
  m.weight_upper = j.at("weight_upper").get<double>();
  m.beta = j.at("beta").get<double>();
  m.g1 = j.at("g1").get<double>();
  m.pattern = j.at("pattern").get<std::vector<std::vector<double>>>();
  return m;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

std::string gamma_label(double g) { return "gamma_" + format_double(g); }

void write_coverage_csv(std::ostream& out, const std::vector<std::int64_t>& n_grid,
                        const std::vector<double>& gammas, const Matrix& coverage,
                        const std::vector<std::size_t>& evaluated) {
  out << "n,evaluated";
  for (double g : gammas) out << ',' << gamma_label(g);
  out << '\n';
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    out << n_grid[i] << ',' << evaluated[i];
    for (std::size_t j = 0; j < gammas.size(); ++j) {
      out << ',' << format_double(coverage(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    out << '\n';
  }
}

}  // namespace

std::vector<ReplicateRecord> run_replicate(const ExperimentPlan& plan, const ParamSpace& space,
                                           const EnvKernel& kernel, std::size_t replicate) {
  const std::int64_t n_max = plan.n_grid.back();
  std::vector<ReplicateRecord> out;
  WalkTrajectory traj;
  std::string walk_error;
  try {
    EnvironmentPath env(kernel, 0, n_max, plan.master_seed, replicate);
    traj = simulate_walk(env, n_max, plan.master_seed,
                         plan.max_steps_factor * static_cast<std::uint64_t>(n_max), replicate);
  } catch (const WalkTimeoutError& e) {
    traj = e.partial();
    walk_error = e.what();
  }
  const std::int64_t reached =
      traj.positions.empty() ? 0 : *std::max_element(traj.positions.begin(), traj.positions.end());
  for (std::int64_t n : plan.n_grid) {
    if (n > reached) {
      ReplicateRecord rec;
      rec.replicate = replicate;
      rec.n = n;
      rec.failed = true;
      rec.message = walk_error.empty() ? "walk did not reach n" : walk_error;
      out.push_back(std::move(rec));
      continue;
    }
    out.push_back(fit_record(plan, space, traj, replicate, n));
  }
  return out;
}

ExperimentReport run_experiment(const ExperimentPlan& plan, std::span<const std::size_t> order) {
  plan.validate();
  const ParamSpace space = plan.model.build();
  space.check(plan.theta_star);
  if (plan.anchor >= space.support().size()) throw InputError("anchor is not a support index");
  const EnvKernel kernel = space.kernel(plan.theta_star);
  if (!diagnose(kernel).ballistic) throw RefusalError("the model at theta_star is not ballistic");

  std::vector<std::size_t> sequence(plan.replicates);
  std::iota(sequence.begin(), sequence.end(), std::size_t{0});
  if (!order.empty()) {
    std::vector<std::size_t> sorted(order.begin(), order.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted != sequence) throw InputError("order must be a permutation of the replicate indices");
    sequence.assign(order.begin(), order.end());
  }

  std::vector<std::vector<ReplicateRecord>> slots(plan.replicates);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < sequence.size(); i = next++) {
      try {
        slots[sequence[i]] = run_replicate(plan, space, kernel, sequence[i]);
      } catch (...) {
        const std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::size_t threads = plan.threads ? plan.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, plan.replicates);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  ExperimentReport report;
  report.plan = plan;
  report.param_names = names_of(space);
  for (auto& slot : slots) {
    for (auto& rec : slot) {
      if (rec.failed) ++report.failures;
      report.records.push_back(std::move(rec));
    }
  }
  return report;
}

Matrix ExperimentReport::coverage() const {
  const auto rows = static_cast<Eigen::Index>(plan.n_grid.size());
  const auto cols = static_cast<Eigen::Index>(plan.gammas.size());
  Matrix hits = Matrix::Zero(rows, cols);
  const std::vector<std::size_t> counts = evaluated_per_n();
  for (const auto& rec : records) {
    if (rec.failed) continue;
    const auto i = std::find(plan.n_grid.begin(), plan.n_grid.end(), rec.n) - plan.n_grid.begin();
    for (Eigen::Index j = 0; j < cols; ++j) hits(i, j) += rec.covered[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
  }
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto c = counts[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < cols; ++j) {
      hits(i, j) = c ? hits(i, j) / static_cast<double>(c) : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return hits;
}

std::vector<std::size_t> ExperimentReport::evaluated_per_n() const {
  std::vector<std::size_t> counts(plan.n_grid.size(), 0);
  for (const auto& rec : records) {
    if (rec.failed) continue;
    const auto it = std::find(plan.n_grid.begin(), plan.n_grid.end(), rec.n);
    if (it != plan.n_grid.end()) ++counts[static_cast<std::size_t>(it - plan.n_grid.begin())];
  }
  return counts;
}

double sample_quantile(std::vector<double> values, double prob) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double h = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

SummaryTables summarize(const ExperimentReport& report) {
  if (report.records.empty()) throw InputError("cannot summarize an empty report");
  SummaryTables tables;
  tables.n_grid = report.plan.n_grid;
  tables.gammas = report.plan.gammas;
  tables.coverage = report.coverage();
  tables.evaluated = report.evaluated_per_n();
  const auto& names = report.param_names;
  const auto d = static_cast<Eigen::Index>(names.size());

  auto quantile_row = [](std::int64_t n, std::string quantity, const std::vector<double>& v) {
    QuantileRow row;
    row.n = n;
    row.quantity = std::move(quantity);
    row.count = v.size();
    row.min = sample_quantile(v, 0.0);
    row.q1 = sample_quantile(v, 0.25);
    row.median = sample_quantile(v, 0.5);
    row.q3 = sample_quantile(v, 0.75);
    row.max = sample_quantile(v, 1.0);
    return row;
  };

  for (std::int64_t n : tables.n_grid) {
    std::vector<const ReplicateRecord*> ok;
    for (const auto& rec : report.records) {
      if (rec.n == n && !rec.failed) ok.push_back(&rec);
    }
    for (Eigen::Index k = 0; k < d; ++k) {
      std::vector<double> v;
      for (const auto* rec : ok) v.push_back(rec->theta_hat(k));
      tables.theta_quantiles.push_back(quantile_row(n, names[static_cast<std::size_t>(k)], v));
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = i; j < d; ++j) {
        std::vector<double> v;
        for (const auto* rec : ok) v.push_back((*rec->sigma_hat)(i, j));
        const std::string entry = "sigma[" + names[static_cast<std::size_t>(i)] + "," +
                                  names[static_cast<std::size_t>(j)] + "]";
        tables.sigma_quantiles.push_back(quantile_row(n, entry, v));
      }
    }

    Matrix mean_inverse = Matrix::Zero(d, d);
    std::size_t inverted = 0;
    for (const auto* rec : ok) {
      const Eigen::FullPivLU<Matrix> lu(*rec->sigma_hat);
      if (!lu.isInvertible()) continue;
      mean_inverse += lu.inverse() / static_cast<double>(n);
      ++inverted;
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (inverted) mean_inverse /= static_cast<double>(inverted);
    Vector mean = Vector::Zero(d);
    for (const auto* rec : ok) mean += rec->theta_hat;
    Matrix empirical = Matrix::Constant(d, d, nan);
    if (ok.size() >= 2) {
      mean /= static_cast<double>(ok.size());
      empirical.setZero();
      for (const auto* rec : ok) {
        const Vector c = rec->theta_hat - mean;
        empirical += c * c.transpose();
      }
      empirical /= static_cast<double>(ok.size() - 1);
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = i; j < d; ++j) {
        CovarianceRow row;
        row.n = n;
        row.entry = "cov[" + names[static_cast<std::size_t>(i)] + "," + names[static_cast<std::size_t>(j)] + "]";
        row.hessian_based = inverted ? mean_inverse(i, j) : nan;
        row.empirical = empirical(i, j);
        tables.covariance.push_back(std::move(row));
      }
    }
  }
  return tables;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string version_string() { return RWRE_VERSION; }

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& plan = report.plan;
  const auto d = report.param_names.size();

  std::ofstream records = open_out(dir / "records.csv");
  records << "replicate,n,failed,hitting_time,loglik,converged,at_boundary,sigma_reliable";
  for (const auto& name : report.param_names) records << ",theta_" << name;
  for (const auto& a : report.param_names) {
    for (const auto& b : report.param_names) records << ",sigma_" << a << "_" << b;
  }
  for (double g : plan.gammas) records << ",covered_" << gamma_label(g);
  records << ",message\n";
  for (const auto& rec : report.records) {
    records << rec.replicate << ',' << rec.n << ',' << int(rec.failed) << ',' << rec.hitting_time << ','
            << format_double(rec.loglik) << ',' << int(rec.converged) << ',' << int(rec.at_boundary) << ','
            << int(rec.sigma_reliable);
    for (std::size_t k = 0; k < d; ++k) {
      records << ',';
      if (rec.theta_hat.size() == static_cast<Eigen::Index>(d)) records << format_double(rec.theta_hat(k));
    }
    for (std::size_t k = 0; k < d * d; ++k) {
      records << ',';
      if (rec.sigma_hat) records << format_double((*rec.sigma_hat)(k / d, k % d));
    }
    for (std::size_t j = 0; j < plan.gammas.size(); ++j) {
      records << ',';
      if (!rec.failed) records << int(rec.covered[j]);
    }
    records << ',' << csv_quote(rec.message) << '\n';
  }

  std::ofstream coverage = open_out(dir / "coverage.csv");
  write_coverage_csv(coverage, plan.n_grid, plan.gammas, report.coverage(), report.evaluated_per_n());

  json manifest;
  manifest["version"] = version_string();
  manifest["param_names"] = report.param_names;
  manifest["records"] = report.records.size();
  manifest["failures"] = report.failures;
  json& p = manifest["plan"];
  p["model"] = model_to_json(plan.model);
  p["theta_star"] = to_std(plan.theta_star);
  p["n_grid"] = plan.n_grid;
  p["replicates"] = plan.replicates;
  p["gammas"] = plan.gammas;
  p["master_seed"] = plan.master_seed;
  p["anchor"] = plan.anchor;
  p["max_steps_factor"] = plan.max_steps_factor;
  p["optimizer"] = {{"max_iters", plan.optimizer.max_iters},
                    {"grad_tol", plan.optimizer.grad_tol},
                    {"n_starts", plan.optimizer.n_starts},
                    {"start_seed", plan.optimizer.start_seed}};
  std::ofstream(dir / "manifest.json", std::ios::binary) << manifest.dump(2) << '\n';
}

ExperimentReport read_report(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw InputError("cannot read " + (dir / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw InputError("malformed manifest: " + std::string(e.what()));
  }

  ExperimentReport report;
  try {
    const json& p = manifest.at("plan");
    auto& plan = report.plan;
    plan.model = model_from_json(p.at("model"));
    const auto theta = p.at("theta_star").get<std::vector<double>>();
    plan.theta_star = Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    plan.n_grid = p.at("n_grid").get<std::vector<std::int64_t>>();
    plan.replicates = p.at("replicates").get<std::size_t>();
    plan.gammas = p.at("gammas").get<std::vector<double>>();
    plan.master_seed = p.at("master_seed").get<std::uint64_t>();
    plan.anchor = p.at("anchor").get<std::size_t>();
    plan.max_steps_factor = p.at("max_steps_factor").get<std::uint64_t>();
    const json& o = p.at("optimizer");
    plan.optimizer.max_iters = o.at("max_iters").get<int>();
    plan.optimizer.grad_tol = o.at("grad_tol").get<double>();
    plan.optimizer.n_starts = o.at("n_starts").get<int>();
    plan.optimizer.start_seed = o.at("start_seed").get<std::uint64_t>();
    report.param_names = manifest.at("param_names").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw InputError("malformed manifest: " + std::string(e.what()));
  }

  std::ifstream rf(dir / "records.csv");
  if (!rf) throw InputError("cannot read " + (dir / "records.csv").string());
  const std::size_t d = report.param_names.size();
  const std::size_t n_gamma = report.plan.gammas.size();
  const std::size_t expected = 8 + d + d * d + n_gamma + 1;
  std::string line;
  std::getline(rf, line);
  std::size_t line_no = 1;
  while (std::getline(rf, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != expected) {
      throw InputError("records.csv:" + std::to_string(line_no) + ": expected " + std::to_string(expected) +
                       " columns");
    }
    ReplicateRecord rec;
    rec.replicate = static_cast<std::size_t>(parse_int(cells[0]));
    rec.n = parse_int(cells[1]);
    rec.failed = cells[2] == "1";
    rec.hitting_time = static_cast<std::uint64_t>(parse_int(cells[3]));
    rec.loglik = parse_double(cells[4]);
    rec.converged = cells[5] == "1";
    rec.at_boundary = cells[6] == "1";
    rec.sigma_reliable = cells[7] == "1";
    std::size_t c = 8;
    if (!cells[c].empty()) {
      rec.theta_hat.resize(static_cast<Eigen::Index>(d));
      for (std::size_t k = 0; k < d; ++k) rec.theta_hat(k) = parse_double(cells[c + k]);
    }
    c += d;
    if (!cells[c].empty()) {
      Matrix s(d, d);
      for (std::size_t k = 0; k < d * d; ++k) s(k / d, k % d) = parse_double(cells[c + k]);
      rec.sigma_hat = s;
    }
    c += d * d;
    if (!rec.failed) {
      for (std::size_t j = 0; j < n_gamma; ++j) rec.covered.push_back(cells[c + j] == "1");
    }
    c += n_gamma;
    rec.message = cells[c];
    if (rec.failed) ++report.failures;
    report.records.push_back(std::move(rec));
  }
  return report;
}

void write_summary(const SummaryTables& tables, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write_quantiles = [&](const std::string& file, const std::vector<QuantileRow>& rows) {
    std::ofstream out = open_out(dir / file);
    out << "n,quantity,count,min,q1,median,q3,max\n";
    for (const auto& r : rows) {
      out << r.n << ',' << csv_quote(r.quantity) << ',' << r.count << ',' << format_double(r.min) << ','
          << format_double(r.q1) << ',' << format_double(r.median) << ',' << format_double(r.q3) << ','
          << format_double(r.max) << '\n';
    }
  };
  write_quantiles("theta_quantiles.csv", tables.theta_quantiles);
  write_quantiles("sigma_quantiles.csv", tables.sigma_quantiles);

  std::ofstream coverage = open_out(dir / "coverage.csv");
  write_coverage_csv(coverage, tables.n_grid, tables.gammas, tables.coverage, tables.evaluated);

  std::ofstream cov = open_out(dir / "covariance_check.csv");
  cov << "n,entry,hessian_based,empirical,ratio\n";
  for (const auto& r : tables.covariance) {
    cov << r.n << ',' << csv_quote(r.entry) << ',' << format_double(r.hessian_based) << ','
        << format_double(r.empirical) << ',' << format_double(r.hessian_based / r.empirical) << '\n';
  }
}

}  // namespace rwre
