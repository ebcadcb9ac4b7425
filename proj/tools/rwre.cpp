#include "rwre/config.hpp"
#include "rwre/error.hpp"
#include "rwre/estimate.hpp"
#include "rwre/filter.hpp"
#include "rwre/harness.hpp"
#include "rwre/walk.hpp"

#include <CLI/CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using nlohmann::json;
using rwre::Matrix;
using rwre::Vector;

enum ExitCode { kOk = 0, kRuntimeError = 1, kInputError = 2, kFailures = 3 };

struct ModelOptions {
  std::string model = "two-state";
  std::vector<double> theta;
  std::size_t anchor = 0;
};

rwre::ModelConfig resolve_model(const std::string& name) {
  const auto presets = rwre::preset_model_names();
  if (std::find(presets.begin(), presets.end(), name) != presets.end()) return rwre::preset_model_config(name);
  return rwre::load_model_config(name);
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

json diagnostics_json(const rwre::ModelDiagnostics& d) {
  return {{"e_log_tilde", d.e_log_tilde}, {"e_tilde", d.e_tilde},         {"iid", d.iid},
          {"transient_right", d.transient_right}, {"ballistic", d.ballistic},
          {"sigma_minus", d.sigma_minus}, {"sigma_plus", d.sigma_plus}};
}

json kernel_json(const rwre::EnvKernel& k) {
  return {{"support", k.support.values()}, {"q", matrix_json(k.q)}, {"mu", to_std(k.mu)}};
}

void emit(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw rwre::InputError("cannot write " + out);
  f << j.dump(2) << '\n';
}

rwre::LeftStepsSequence read_steps(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw rwre::InputError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != "z") throw rwre::InputError(path + ": expected a header line 'z'");
  rwre::LeftStepsSequence seq;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(line, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != line.size() || line.front() == '-') {
      throw rwre::InputError(path + ":" + std::to_string(line_no) + ": not a nonnegative integer");
    }
    seq.z.push_back(v);
  }
  if (seq.z.size() < 2) throw rwre::InputError(path + ": need at least Z_0 and Z_1");
  if (seq.z.front() != 0) throw rwre::InputError(path + ": Z_0 must be 0");
  return seq;
}

void write_steps(const rwre::LeftStepsSequence& seq, std::ostream& out) {
  out << "z\n";
  for (auto v : seq.z) out << v << '\n';
}

void add_model_options(CLI::App* cmd, ModelOptions& opt, bool need_theta) {
  cmd->add_option("--model", opt.model, "Preset name or model TOML file")
      ->capture_default_str();
  auto* theta = cmd->add_option("--theta", opt.theta, "Parameter vector, comma separated")->delimiter(',');
  if (need_theta) theta->required();
  cmd->add_option("--anchor", opt.anchor, "Support index of the conditioning state a0")->capture_default_str();
}

int run_simulate(const ModelOptions& opt, std::int64_t n, std::uint64_t seed, std::uint64_t replicate,
                 const std::string& route, std::uint64_t max_steps_factor, const std::string& out) {
  const rwre::ParamSpace space = resolve_model(opt.model).build();
  const Vector theta = to_vector(opt.theta);
  space.check(theta);
  const rwre::EnvKernel kernel = space.kernel(theta);
  const rwre::ModelDiagnostics diag = rwre::diagnose(kernel);
  if (n < 1) throw rwre::InputError("n must be positive");

  rwre::LeftStepsSequence seq;
  std::uint64_t hitting_time = 0;
  if (route == "walk") {
    if (!diag.transient_right) throw rwre::RefusalError("the walk is not transient to the right");
    rwre::EnvironmentPath env(kernel, 0, n, seed, replicate);
    const auto traj = rwre::simulate_walk(env, n, seed, max_steps_factor * static_cast<std::uint64_t>(n), replicate);
    seq = rwre::left_steps(traj);
    hitting_time = traj.hitting_time();
  } else {
    seq = rwre::simulate_bpire(kernel, static_cast<std::size_t>(n), seed, replicate);
    std::uint64_t total = 0;
    for (auto v : seq.z) total += v;
    hitting_time = static_cast<std::uint64_t>(n) + 2 * total;
  }

  json meta = {{"version", rwre::version_string()},
               {"model", opt.model},
               {"route", route},
               {"n", n},
               {"hitting_time", hitting_time},
               {"seed", seed},
               {"replicate", replicate},
               {"theta", opt.theta},
               {"param_names", space.param_names()},
               {"kernel", kernel_json(kernel)},
               {"diagnostics", diagnostics_json(diag)}};
  if (out.empty() || out == "-") {
    write_steps(seq, std::cout);
    std::cerr << meta.dump(2) << '\n';
    return kOk;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw rwre::InputError("cannot write " + out);
  write_steps(seq, f);
  emit(meta, out + ".json");
  return kOk;
}

int run_loglik(const ModelOptions& opt, const std::string& data, bool want_hessian, const std::string& out) {
  const rwre::ParamSpace space = resolve_model(opt.model).build();
  const Vector theta = to_vector(opt.theta);
  const auto seq = read_steps(data);
  const auto eval = rwre::loglik(space, theta, seq, opt.anchor, true, want_hessian);
  json j = {{"version", rwre::version_string()},
            {"model", opt.model},
            {"theta", opt.theta},
            {"param_names", space.param_names()},
            {"anchor", opt.anchor},
            {"n", eval.n},
            {"loglik", eval.loglik},
            {"grad", to_std(eval.grad)}};
  if (eval.hessian) j["hessian"] = matrix_json(*eval.hessian);
  emit(j, out);
  return kOk;
}

int run_fit(const ModelOptions& opt, const std::string& data, const rwre::OptimizerConfig& cfg,
            const std::vector<double>& gammas, const std::string& out) {
  const rwre::ParamSpace space = resolve_model(opt.model).build();
  const auto seq = read_steps(data);
  const rwre::MleResult res = rwre::fit(space, seq, opt.anchor, cfg);
  json j = {{"version", rwre::version_string()},
            {"model", opt.model},
            {"param_names", space.param_names()},
            {"anchor", opt.anchor},
            {"n", res.n},
            {"theta_hat", to_std(res.theta_hat)},
            {"loglik", res.loglik_at_hat},
            {"converged", res.converged},
            {"at_boundary", res.at_boundary},
            {"sigma_reliable", res.sigma_reliable},
            {"grad_sup_norm", res.grad_sup_norm},
            {"optimizer",
             {{"max_iters", cfg.max_iters},
              {"grad_tol", cfg.grad_tol},
              {"n_starts", cfg.n_starts},
              {"start_seed", cfg.start_seed}}}};
  json starts = json::array();
  for (const auto& s : res.starts) {
    starts.push_back({{"start", to_std(s.start)},
                      {"theta", to_std(s.theta)},
                      {"loglik", std::isfinite(s.loglik) ? json(s.loglik) : json(nullptr)},
                      {"converged", s.converged},
                      {"iterations", s.iterations},
                      {"message", s.message}});
  }
  j["starts"] = starts;
  j["sigma_hat"] = res.sigma_hat ? matrix_json(*res.sigma_hat) : json(nullptr);
  json regions = json::array();
  if (res.sigma_hat) {
    for (double g : gammas) {
      const auto region = rwre::confidence_region(res, g);
      json axes = json::array();
      for (const auto& a : region.axes) {
        axes.push_back({{"direction", to_std(a.direction)},
                        {"half_length", a.degenerate ? json(nullptr) : json(a.half_length)},
                        {"degenerate", a.degenerate}});
      }
      regions.push_back({{"gamma", g},
                         {"chi2_quantile", region.chi2_quantile},
                         {"degenerate", region.degenerate},
                         {"axes", axes}});
    }
  }
  j["regions"] = regions;
  const rwre::EnvKernel kernel = space.kernel(res.theta_hat);
  j["diagnostics_at_hat"] = diagnostics_json(rwre::diagnose(kernel));
  emit(j, out);
  return res.converged ? kOk : kFailures;
}

int run_diagnose(const ModelOptions& opt, const std::string& out) {
  const rwre::ParamSpace space = resolve_model(opt.model).build();
  const Vector theta = to_vector(opt.theta);
  space.check(theta);
  const rwre::EnvKernel kernel = space.kernel(theta);
  json j = {{"model", opt.model},
            {"param_names", space.param_names()},
            {"lower", to_std(space.lower())},
            {"upper", to_std(space.upper())},
            {"theta", opt.theta},
            {"kernel", kernel_json(kernel)},
            {"diagnostics", diagnostics_json(rwre::diagnose(kernel))},
            {"warnings", space.warnings()}};
  emit(j, out);
  return kOk;
}

int run_experiment(const std::string& plan_path, const std::string& out, std::optional<std::size_t> threads) {
  rwre::ExperimentPlan plan = rwre::load_plan(plan_path);
  if (threads) plan.threads = *threads;
  const auto start = std::chrono::steady_clock::now();
  const rwre::ExperimentReport report = rwre::run_experiment(plan);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  rwre::write_report(report, out);
  emit({{"wall_clock_seconds", seconds}, {"threads", plan.threads}}, (std::filesystem::path(out) / "timing.json").string());
  std::cerr << report.records.size() << " records, " << report.failures << " failed, " << seconds << " s\n";
  return report.failures == 0 ? kOk : kFailures;
}

int run_summarize(const std::string& in, const std::string& out) {
  const rwre::ExperimentReport report = rwre::read_report(in);
  rwre::write_summary(rwre::summarize(report), out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random walk in a Markov environment: simulation and likelihood inference"};
  app.set_version_flag("--version", rwre::version_string());
  app.require_subcommand(1);

  ModelOptions sim_opt;
  std::int64_t sim_n = 1000;
  std::uint64_t sim_seed = 1, sim_replicate = 0, sim_max_steps = rwre::kDefaultMaxStepsPerSite;
  std::string sim_route = "walk", sim_out;
  auto* sim = app.add_subcommand("simulate", "Simulate left-step counts Z_0..Z_n");
  add_model_options(sim, sim_opt, true);
  sim->add_option("--n", sim_n, "Target level n")->capture_default_str();
  sim->add_option("--seed", sim_seed, "Seed")->capture_default_str();
  sim->add_option("--replicate", sim_replicate, "Replicate stream index")->capture_default_str();
  sim->add_option("--route", sim_route, "walk: run the walk; bpire: branching process")
      ->check(CLI::IsMember({"walk", "bpire"}))
      ->capture_default_str();
  sim->add_option("--max-steps-factor", sim_max_steps, "Step cap per site")->capture_default_str();
  sim->add_option("--out", sim_out, "CSV output; metadata goes to <out>.json");

  ModelOptions ll_opt;
  std::string ll_data, ll_out;
  bool ll_hessian = false;
  auto* ll = app.add_subcommand("loglik", "Log-likelihood and gradient at theta");
  add_model_options(ll, ll_opt, true);
  ll->add_option("--data", ll_data, "CSV of left-step counts")->required();
  ll->add_flag("--hessian", ll_hessian, "Also report the Hessian");
  ll->add_option("--out", ll_out, "JSON output (default stdout)");

  ModelOptions fit_opt;
  std::string fit_data, fit_out;
  rwre::OptimizerConfig fit_cfg;
  std::vector<double> fit_gammas{0.01, 0.05, 0.1};
  auto* fitc = app.add_subcommand("fit", "Maximum likelihood estimate and confidence regions");
  add_model_options(fitc, fit_opt, false);
  fitc->add_option("--data", fit_data, "CSV of left-step counts")->required();
  fitc->add_option("--max-iters", fit_cfg.max_iters)->capture_default_str();
  fitc->add_option("--grad-tol", fit_cfg.grad_tol)->capture_default_str();
  fitc->add_option("--starts", fit_cfg.n_starts)->capture_default_str();
  fitc->add_option("--start-seed", fit_cfg.start_seed)->capture_default_str();
  fitc->add_option("--gamma", fit_gammas, "Region levels")->delimiter(',')->capture_default_str();
  fitc->add_option("--out", fit_out, "JSON output (default stdout)");

  ModelOptions diag_opt;
  std::string diag_out;
  auto* diag = app.add_subcommand("diagnose", "Kernel, stationary law and regime at theta");
  add_model_options(diag, diag_opt, true);
  diag->add_option("--out", diag_out, "JSON output (default stdout)");

  auto* exp = app.add_subcommand("experiment", "Monte Carlo experiments");
  exp->require_subcommand(1);
  std::string run_plan, run_out;
  std::optional<std::size_t> run_threads;
  auto* run = exp->add_subcommand("run", "Run an experiment plan");
  run->add_option("--plan", run_plan, "Plan TOML file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "Output directory")->required();
  run->add_option("--threads", run_threads, "Worker threads (0: all cores)");
  std::string sum_in, sum_out;
  auto* sum = exp->add_subcommand("summarize", "Summary tables of an experiment directory");
  sum->add_option("--in", sum_in, "Experiment output directory")->required()->check(CLI::ExistingDirectory);
  sum->add_option("--out", sum_out, "Table directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return run_simulate(sim_opt, sim_n, sim_seed, sim_replicate, sim_route, sim_max_steps, sim_out);
    if (*ll) return run_loglik(ll_opt, ll_data, ll_hessian, ll_out);
    if (*fitc) return run_fit(fit_opt, fit_data, fit_cfg, fit_gammas, fit_out);
    if (*diag) return run_diagnose(diag_opt, diag_out);
    if (*run) return run_experiment(run_plan, run_out, run_threads);
    if (*sum) return run_summarize(sum_in, sum_out);
  } catch (const rwre::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const rwre::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const rwre::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
