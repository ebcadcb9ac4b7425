#include "rwre/walk.hpp"

#include "rwre/filter.hpp"

#include <algorithm>
#include <cmath>

namespace rwre {

EnvironmentPath::EnvironmentPath(const EnvKernel& kernel, std::int64_t lowest, std::int64_t highest,
                                 std::uint64_t seed, std::uint64_t replicate)
    : kernel_(&kernel),
      right_rng_(seed, stream_id(replicate, StreamPurpose::kEnvironmentRight)),
      left_rng_(seed, stream_id(replicate, StreamPurpose::kEnvironmentLeft)) {
  if (lowest > highest) throw InputError("environment range is empty");
  right_.push_back(sample_index(right_rng_, kernel_->mu, kernel_->size()));
  extend_to(lowest, highest);
}

void EnvironmentPath::extend_to(std::int64_t lowest, std::int64_t highest) {
  const auto n = kernel_->size();
  while (this->highest() < highest) {
    right_.push_back(sample_index(right_rng_, kernel_->q.row(static_cast<Eigen::Index>(right_.back())), n));
  }
  while (this->lowest() > lowest) {
    const std::size_t from = left_.empty() ? right_.front() : left_.back();
    left_.push_back(sample_index(left_rng_, kernel_->q_rev.row(static_cast<Eigen::Index>(from)), n));
  }
}

std::size_t EnvironmentPath::state(std::int64_t x) {
  if (x < lowest() || x > highest()) extend_to(std::min(x, lowest()), std::max(x, highest()));
  return state_at(x);
}

std::size_t EnvironmentPath::state_at(std::int64_t x) const {
  if (x < lowest() || x > highest()) throw InputError("site outside the environment window");
  return x >= 0 ? right_[static_cast<std::size_t>(x)] : left_[static_cast<std::size_t>(-x - 1)];
}

EnvironmentPath simulate_environment(const EnvKernel& kernel, std::int64_t lowest,
                                     std::int64_t highest, std::uint64_t seed,
                                     std::uint64_t replicate) {
  return EnvironmentPath(kernel, lowest, highest, seed, replicate);
}

WalkTrajectory simulate_walk(EnvironmentPath& env, std::int64_t n, std::uint64_t seed,
                             std::uint64_t max_steps, std::uint64_t replicate) {
  if (n <= 0) throw InputError("walk target n must be positive");
  if (max_steps == 0) max_steps = std::max(kDefaultMaxStepsPerSite * static_cast<std::uint64_t>(n), kMinDefaultMaxSteps);
  Philox4x32 rng(seed, stream_id(replicate, StreamPurpose::kWalk));
  WalkTrajectory traj;
  traj.target = n;
  traj.positions.reserve(static_cast<std::size_t>(4 * n));
  std::int64_t x = 0;
  traj.positions.push_back(x);
  while (x != n) {
    if (traj.positions.size() > max_steps) {
      throw WalkTimeoutError("walk did not reach site " + std::to_string(n) + " within " +
                                 std::to_string(max_steps) + " steps",
                             std::move(traj));
    }
    x += rng.uniform() < env.omega(x) ? 1 : -1;
    traj.positions.push_back(x);
  }
  return traj;
}

LeftStepsSequence left_steps(const WalkTrajectory& traj) { return left_steps(traj, traj.target); }

LeftStepsSequence left_steps(const WalkTrajectory& traj, std::int64_t m) {
  if (m <= 0 || m > traj.target) throw InputError("left-step horizon must lie in [1, target]");
  LeftStepsSequence out;
  out.z.assign(static_cast<std::size_t>(m) + 1, 0);
  const auto& pos = traj.positions;
  for (std::size_t t = 0; t + 1 < pos.size() && pos[t] != m; ++t) {
    const std::int64_t x = pos[t];
    if (pos[t + 1] == x - 1 && x >= 0) ++out.z[static_cast<std::size_t>(m - x)];
  }
  return out;
}

BpirePath simulate_bpire_path(const EnvKernel& kernel, std::size_t n, std::uint64_t seed,
                              std::uint64_t replicate) {
  Philox4x32 rng(seed, stream_id(replicate, StreamPurpose::kBranching));
  const auto size = kernel.size();
  BpirePath path;
  path.states.reserve(n + 1);
  path.steps.z.reserve(n + 1);
  path.states.push_back(sample_index(rng, kernel.mu, size));
  path.steps.z.push_back(0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t next = sample_index(rng, kernel.q_rev.row(static_cast<Eigen::Index>(path.states.back())), size);
    const double success = kernel.support[next];
    std::uint64_t total = 0;
    for (std::uint64_t i = 0; i <= path.steps.z.back(); ++i) total += sample_geometric(rng, success);
    path.states.push_back(next);
    path.steps.z.push_back(total);
  }
  return path;
}

LeftStepsSequence simulate_bpire(const EnvKernel& kernel, std::size_t n, std::uint64_t seed,
                                 std::uint64_t replicate) {
  return simulate_bpire_path(kernel, n, seed, replicate).steps;
}

double sample_r_series(const EnvKernel& kernel, std::size_t a, Philox4x32& rng, double* residual) {
  std::size_t state = a;
  double product = kernel.support.tilde(state);
  double r = 1.0 + product;
  for (std::size_t terms = 1; product >= kSeriesCutoff && terms < kSeriesMaxTerms; ++terms) {
    state = sample_index(rng, kernel.q.row(static_cast<Eigen::Index>(state)), kernel.size());
    product *= kernel.support.tilde(state);
    r += product;
  }
  if (residual) *residual = product;
  return r;
}

StationaryEstimate estimate_invariant_density(const EnvKernel& kernel, std::size_t truncation,
                                              std::size_t mc_samples, std::uint64_t seed) {
  if (!diagnose(kernel).ballistic) {
    throw RefusalError("invariant density requires a ballistic model");
  }
  if (mc_samples == 0) throw InputError("mc_samples must be positive");
  const auto size = static_cast<Eigen::Index>(kernel.size());
  StationaryEstimate est;
  est.truncation = truncation;
  est.mc_samples = mc_samples;
  est.table = Matrix::Zero(size, static_cast<Eigen::Index>(truncation) + 1);
  est.mean_inverse_r = Vector::Zero(size);
  est.mean_r = Vector::Zero(size);
  est.var_r = Vector::Zero(size);
  for (Eigen::Index a = 0; a < size; ++a) {
    Philox4x32 rng(seed, stream_id(static_cast<std::uint64_t>(a), StreamPurpose::kInvariantDensity));
    double sum_r = 0.0;
    double sum_r2 = 0.0;
    for (std::size_t s = 0; s < mc_samples; ++s) {
      double residual = 0.0;
      const double r = sample_r_series(kernel, static_cast<std::size_t>(a), rng, &residual);
      est.max_series_residual = std::max(est.max_series_residual, residual);
      sum_r += r;
      sum_r2 += r * r;
      const double p = 1.0 / r;
      double mass = p;
      for (std::size_t x = 0; x <= truncation; ++x) {
        est.table(a, static_cast<Eigen::Index>(x)) += mass;
        mass *= 1.0 - p;
      }
    }
    const double m = static_cast<double>(mc_samples);
    est.mean_r(a) = sum_r / m;
    est.var_r(a) = mc_samples > 1 ? (sum_r2 - m * est.mean_r(a) * est.mean_r(a)) / (m - 1.0) : 0.0;
    est.mean_inverse_r(a) = est.table(a, 0) / m;
    est.table.row(a) *= kernel.mu(a) / m;
  }
  return est;
}

Matrix apply_pair_kernel(const EnvKernel& kernel, const Matrix& table) {
  const auto size = table.rows();
  const auto width = table.cols();
  EmissionTable emission(kernel.support);
  Matrix out = Matrix::Zero(size, width);
  for (Eigen::Index b = 0; b < size; ++b) {
    for (Eigen::Index y = 0; y < width; ++y) {
      double acc = 0.0;
      for (Eigen::Index x = 0; x < width; ++x) {
        const double g = std::exp(emission.log_g(static_cast<std::size_t>(b), static_cast<std::uint64_t>(x),
                                                 static_cast<std::uint64_t>(y)));
        double into_b = 0.0;
        for (Eigen::Index a = 0; a < size; ++a) into_b += table(a, x) * kernel.q_rev(a, b);
        acc += into_b * g;
      }
      out(b, y) = acc;
    }
  }
  return out;
}

}  // namespace rwre
