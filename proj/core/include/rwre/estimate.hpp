#pragma once

// Maximum likelihood fitting, the normalized-Hessian information estimate and
// chi-square confidence regions.

#include "rwre/env.hpp"
#include "rwre/filter.hpp"
#include "rwre/optimizer.hpp"
#include "rwre/walk.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rwre {

struct OptimizerConfig {
  int max_iters = 200;
  // Applies to the projected gradient of the per-increment average
  // log-likelihood, l_n / n.
  double grad_tol = 1e-6;
  int n_starts = 5;
  std::uint64_t start_seed = 1;

  void validate() const;
};

struct StartReport {
  Vector start;
  Vector theta;
  double loglik = 0.0;  // -inf when the start failed
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
  std::string message;
};

struct MleResult {
  Vector theta_hat;
  double loglik_at_hat = 0.0;
  // -(1/n) times the Hessian of l_n at theta_hat; absent if it could not be
  // computed.
  std::optional<Matrix> sigma_hat;
  bool converged = false;
  bool at_boundary = false;
  // Converged at an interior point with sigma_hat positive semidefinite
  // (smallest eigenvalue >= -1e-8).
  bool sigma_reliable = false;
  double grad_sup_norm = 0.0;  // of grad(l_n) / n at theta_hat
  std::vector<StartReport> starts;
  std::size_t n = 0;
};

// Multi-start box-constrained maximization of l_n(theta, a0). The first start is
// the box center, the others are uniform in the box. Never throws on
// optimization failure; the result then has converged = false.
MleResult fit(const ParamSpace& space, const LeftStepsSequence& z, std::size_t a0_index,
              const OptimizerConfig& cfg = {});
MleResult fit(const LikelihoodEvaluator& evaluator, const OptimizerConfig& cfg = {});

// Starting points used by fit(), in order.
std::vector<Vector> start_points(const ParamSpace& space, const OptimizerConfig& cfg);

struct EllipseAxis {
  Vector direction;
  double half_length = 0.0;  // infinite along degenerate directions
  bool degenerate = false;
};

// {theta : n (theta_hat - theta)^T sigma (theta_hat - theta) <= chi2_quantile}
struct ConfidenceRegion {
  Vector center;
  Matrix shape;
  std::size_t n = 0;
  double gamma = 0.0;
  double chi2_quantile = 0.0;
  std::vector<EllipseAxis> axes;
  bool degenerate = false;

  double statistic(const Vector& theta) const;
  bool contains(const Vector& theta) const { return statistic(theta) <= chi2_quantile; }
};

inline constexpr double kDegenerateEigenvalue = 1e-10;

ConfidenceRegion confidence_region(const MleResult& res, double gamma);
ConfidenceRegion confidence_region(const Vector& center, const Matrix& sigma, std::size_t n, double gamma);

double chi2_quantile(int dof, double p);
double chi2_cdf(int dof, double x);

}  // namespace rwre
