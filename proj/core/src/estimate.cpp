#include "rwre/estimate.hpp"

#include "rwre/error.hpp"
#include "rwre/rng.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <limits>

namespace rwre {

void OptimizerConfig::validate() const {
  if (max_iters < 1) throw InputError("max_iters must be at least 1");
  if (!(grad_tol > 0.0)) throw InputError("grad_tol must be positive");
  if (n_starts < 1) throw InputError("n_starts must be at least 1");
}

std::vector<Vector> start_points(const ParamSpace& space, const OptimizerConfig& cfg) {
  std::vector<Vector> out{space.center()};
  Philox4x32 rng(cfg.start_seed, stream_id(0, StreamPurpose::kStarts));
  const Vector width = space.upper() - space.lower();
  for (int s = 1; s < cfg.n_starts; ++s) {
    Vector x(static_cast<Eigen::Index>(space.dim()));
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = space.lower()(k) + rng.uniform() * width(k);
    out.push_back(std::move(x));
  }
  return out;
}

MleResult fit(const ParamSpace& space, const LeftStepsSequence& z, std::size_t a0_index,
              const OptimizerConfig& cfg) {
  return fit(LikelihoodEvaluator(space, z, a0_index), cfg);
}

MleResult fit(const LikelihoodEvaluator& evaluator, const OptimizerConfig& cfg) {
  cfg.validate();
  const ParamSpace& space = evaluator.space();
  const double scale = 1.0 / static_cast<double>(evaluator.n());
  const Objective objective = [&](const Vector& theta, Vector& grad) {
    const auto eval = evaluator.evaluate_unchecked(theta, true);
    grad = -scale * eval.grad;
    return -scale * eval.loglik;
  };
  BoxMinimizerOptions options;
  options.max_iters = cfg.max_iters;
  options.grad_tol = cfg.grad_tol;

  MleResult res;
  res.n = evaluator.n();
  res.loglik_at_hat = -std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  bool any = false;
  for (const Vector& start : start_points(space, cfg)) {
    StartReport report;
    report.start = start;
    report.loglik = -std::numeric_limits<double>::infinity();
    try {
      const auto r = minimize_box(objective, start, space.lower(), space.upper(), options);
      report.theta = r.x;
      report.converged = r.converged;
      report.iterations = r.iterations;
      report.evaluations = r.evaluations;
      report.message = r.message;
      if (std::isfinite(r.value)) report.loglik = -r.value / scale;
    } catch (const Error& e) {
      report.message = e.what();
    }
    // Strict improvement only: ties keep the earlier start.
    if (std::isfinite(report.loglik) && (!any || report.loglik > res.starts[best].loglik)) {
      best = res.starts.size();
      any = true;
    }
    res.starts.push_back(std::move(report));
  }
  if (!any) {
    res.theta_hat = space.center();
    return res;
  }

  const StartReport& winner = res.starts[best];
  res.theta_hat = winner.theta;
  res.loglik_at_hat = winner.loglik;
  const Vector width = space.upper() - space.lower();
  for (Eigen::Index k = 0; k < res.theta_hat.size(); ++k) {
    const double tol = 1e-9 * width(k);
    if (res.theta_hat(k) <= space.lower()(k) + tol || res.theta_hat(k) >= space.upper()(k) - tol) {
      res.at_boundary = true;
    }
  }
  try {
    const auto eval = evaluator.evaluate_unchecked(res.theta_hat, true);
    res.grad_sup_norm = scale * eval.grad.cwiseAbs().maxCoeff();
    res.converged = projected_gradient_norm(res.theta_hat, -scale * eval.grad, space.lower(),
                                            space.upper()) <= cfg.grad_tol;
  } catch (const Error&) {
    res.converged = false;
  }
  try {
    const Matrix sigma = -scale * evaluator.hessian(res.theta_hat);
    if (sigma.allFinite()) res.sigma_hat = sigma;
  } catch (const Error&) {
  }
  if (res.sigma_hat && res.converged && !res.at_boundary) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(*res.sigma_hat, Eigen::EigenvaluesOnly);
    res.sigma_reliable = eig.eigenvalues().minCoeff() >= -1e-8;
  }
  return res;
}

double ConfidenceRegion::statistic(const Vector& theta) const {
  const Vector diff = center - theta;
  return static_cast<double>(n) * diff.dot(shape * diff);
}

ConfidenceRegion confidence_region(const Vector& center, const Matrix& sigma, std::size_t n, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("gamma must lie in (0, 1)");
  if (sigma.rows() != center.size() || sigma.cols() != center.size()) {
    throw InputError("shape matrix does not match the center");
  }
  if (n == 0) throw InputError("confidence region needs n > 0");
  ConfidenceRegion region;
  region.center = center;
  region.shape = sigma;
  region.n = n;
  region.gamma = gamma;
  region.chi2_quantile = chi2_quantile(static_cast<int>(center.size()), 1.0 - gamma);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (sigma + sigma.transpose()));
  for (Eigen::Index i = 0; i < center.size(); ++i) {
    EllipseAxis axis;
    axis.direction = eig.eigenvectors().col(i);
    const double lambda = eig.eigenvalues()(i);
    if (lambda < kDegenerateEigenvalue) {
      axis.degenerate = true;
      axis.half_length = std::numeric_limits<double>::infinity();
      region.degenerate = true;
    } else {
      axis.half_length = std::sqrt(region.chi2_quantile / (static_cast<double>(n) * lambda));
    }
    region.axes.push_back(std::move(axis));
  }
  return region;
}

ConfidenceRegion confidence_region(const MleResult& res, double gamma) {
  if (!res.sigma_hat) throw InputError("fit has no information estimate to build a region from");
  return confidence_region(res.theta_hat, *res.sigma_hat, res.n, gamma);
}

double chi2_quantile(int dof, double p) {
  if (dof < 1) throw InputError("chi-square needs at least one degree of freedom");
  if (!(p > 0.0 && p < 1.0)) throw InputError("chi-square quantile needs p in (0, 1)");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), p);
}

double chi2_cdf(int dof, double x) {
  if (dof < 1) throw InputError("chi-square needs at least one degree of freedom");
  if (x <= 0.0) return 0.0;
  return boost::math::cdf(boost::math::chi_squared_distribution<double>(dof), x);
}

}  // namespace rwre
