#pragma once

// Simulation of the environment, the walk up to its hitting time, the
// left-step counts it leaves behind, and the branching process with
// immigration that has the same law as those counts.

#include "rwre/env.hpp"
#include "rwre/error.hpp"
#include "rwre/rng.hpp"

#include <cstdint>
#include <vector>

namespace rwre {

// Environment states (support indices) on a contiguous window of sites.
// Sites right of the window are drawn from q, sites left of it from the
// reversed kernel; each direction has its own stream, so the value at a site
// does not depend on the order in which the window was grown.
class EnvironmentPath {
 public:
  EnvironmentPath(const EnvKernel& kernel, std::int64_t lowest, std::int64_t highest,
                  std::uint64_t seed, std::uint64_t replicate = 0);

  std::int64_t lowest() const noexcept { return -static_cast<std::int64_t>(left_.size()); }
  std::int64_t highest() const noexcept { return static_cast<std::int64_t>(right_.size()) - 1; }

  // Support index at site x; grows the window if needed.
  std::size_t state(std::int64_t x);
  // Support index at site x, which must already be inside the window.
  std::size_t state_at(std::int64_t x) const;
  // Right-step probability at site x; grows the window if needed.
  double omega(std::int64_t x) { return kernel_->support[state(x)]; }

  void extend_to(std::int64_t lowest, std::int64_t highest);

 private:
  const EnvKernel* kernel_;
  Philox4x32 right_rng_;
  Philox4x32 left_rng_;
  std::vector<std::size_t> right_;  // sites 0, 1, 2, ...
  std::vector<std::size_t> left_;   // sites -1, -2, ...
};

// The kernel must outlive the returned path.
EnvironmentPath simulate_environment(const EnvKernel& kernel, std::int64_t lowest,
                                     std::int64_t highest, std::uint64_t seed,
                                     std::uint64_t replicate = 0);

struct WalkTrajectory {
  std::vector<std::int64_t> positions;  // X_0 = 0, ..., X_{T_n} = n
  std::int64_t target = 0;              // n

  std::uint64_t hitting_time() const noexcept { return positions.empty() ? 0 : positions.size() - 1; }
};

class WalkTimeoutError : public Error {
 public:
  WalkTimeoutError(const std::string& what, WalkTrajectory partial)
      : Error(what), partial_(std::move(partial)) {}
  const WalkTrajectory& partial() const noexcept { return partial_; }

 private:
  WalkTrajectory partial_;
};

inline constexpr std::uint64_t kDefaultMaxStepsPerSite = 200;
inline constexpr std::uint64_t kMinDefaultMaxSteps = 1000000;

// Runs the walk from 0 until its first visit to n (> 0). max_steps = 0 means
// max(200 n, 10^6). Throws WalkTimeoutError if the cap is reached first.
WalkTrajectory simulate_walk(EnvironmentPath& env, std::int64_t n, std::uint64_t seed,
                             std::uint64_t max_steps = 0, std::uint64_t replicate = 0);

// (Z_0, ..., Z_n): Z_k counts the left steps taken from site n - k before T_n.
struct LeftStepsSequence {
  std::vector<std::uint64_t> z;

  std::size_t n() const noexcept { return z.empty() ? 0 : z.size() - 1; }
};

LeftStepsSequence left_steps(const WalkTrajectory& traj);
// Left steps of the same trajectory stopped at its first visit to m <= target.
LeftStepsSequence left_steps(const WalkTrajectory& traj, std::int64_t m);

// Z_0 = 0, Z_{k+1} = sum of Z_k + 1 geometric draws with success probability
// equal to the reversed environment at k + 1, the reversed environment
// starting from the stationary law.
LeftStepsSequence simulate_bpire(const EnvKernel& kernel, std::size_t n, std::uint64_t seed,
                                 std::uint64_t replicate = 0);

// Same recursion, also returning the hidden reversed-environment states.
struct BpirePath {
  std::vector<std::size_t> states;  // support indices of the reversed environment
  LeftStepsSequence steps;
};
BpirePath simulate_bpire_path(const EnvKernel& kernel, std::size_t n, std::uint64_t seed,
                              std::uint64_t replicate = 0);

// Monte Carlo estimate of the invariant law pi(a, x) of the pair
// (reversed environment, Z), x = 0..truncation.
//
// pi(a, x) = mu(a) E[R^{-1} (1 - R^{-1})^x], where R = 1 + t_0 + t_0 t_1 + ...,
// t_k = (1 - omega_k) / omega_k along the forward environment chain started at
// omega_0 = a. Given the environment, the stationary Z at a site is geometric
// with success probability 1 / R. Series are cut when the running product falls
// below 1e-12 or after 1e5 terms.
struct StationaryEstimate {
  std::size_t truncation = 0;
  std::size_t mc_samples = 0;      // per support state
  Matrix table;                    // |S| x (truncation + 1)
  Vector mean_inverse_r;           // E_a[1/R] per state
  Vector mean_r;                   // E_a[R] per state
  Vector var_r;                    // Var_a[R] per state
  double max_series_residual = 0;  // largest truncated product seen
};

inline constexpr double kSeriesCutoff = 1e-12;
inline constexpr std::size_t kSeriesMaxTerms = 100000;

StationaryEstimate estimate_invariant_density(const EnvKernel& kernel, std::size_t truncation,
                                              std::size_t mc_samples, std::uint64_t seed);

// One draw of R along the forward chain from state a. Returns the series value;
// residual receives the last running product.
double sample_r_series(const EnvKernel& kernel, std::size_t a, Philox4x32& rng, double* residual = nullptr);

// sum_{a, x} pi(a, x) Pi((a, x), (b, y)) for y = 0..truncation, with
// Pi((a, x), (b, y)) = q_rev(a, b) g_b(x, y).
Matrix apply_pair_kernel(const EnvKernel& kernel, const Matrix& table);

}  // namespace rwre
