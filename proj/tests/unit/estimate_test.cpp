#include "rwre/env.hpp"
#include "rwre/error.hpp"
#include "rwre/estimate.hpp"
#include "rwre/optimizer.hpp"
#include "rwre/walk.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace {

using rwre::Matrix;
using rwre::Vector;

rwre::ParamSpace two_state_space() {
  return rwre::preset_two_state_chain(0.4, 0.8, Vector::Constant(2, 0.01), Vector::Constant(2, 0.99));
}

TEST(ChiSquare, KnownQuantiles) {
  EXPECT_NEAR(rwre::chi2_quantile(2, 0.95), 5.991464547107979, 1e-10);
  EXPECT_NEAR(rwre::chi2_quantile(2, 0.90), 4.605170185988091, 1e-10);
  EXPECT_NEAR(rwre::chi2_quantile(1, 0.95), 3.841458820694124, 1e-10);
  EXPECT_NEAR(rwre::chi2_quantile(3, 0.99), 11.34486673014437, 1e-9);
}

TEST(ChiSquare, TwoDegreesOfFreedomClosedForm) {
  // With two degrees of freedom the law is exponential with mean 2.
  for (double gamma : {0.01, 0.05, 0.1, 0.5, 0.9}) {
    EXPECT_NEAR(rwre::chi2_quantile(2, 1.0 - gamma), -2.0 * std::log(gamma), 1e-10);
    EXPECT_NEAR(rwre::chi2_cdf(2, -2.0 * std::log(gamma)), 1.0 - gamma, 1e-12);
  }
  EXPECT_EQ(rwre::chi2_cdf(2, -1.0), 0.0);
}

TEST(ChiSquare, RejectsBadArguments) {
  EXPECT_THROW(rwre::chi2_quantile(0, 0.5), rwre::InputError);
  EXPECT_THROW(rwre::chi2_quantile(2, 1.0), rwre::InputError);
  EXPECT_THROW(rwre::chi2_quantile(2, 0.0), rwre::InputError);
}

TEST(BoxMinimizer, InteriorQuadratic) {
  Matrix a(3, 3);
  a << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
  Vector c(3);
  c << 0.3, -0.2, 0.1;
  const auto f = [&](const Vector& x, Vector& g) {
    const Vector d = x - c;
    g = a * d;
    return 0.5 * d.dot(a * d);
  };
  const auto r = rwre::minimize_box(f, Vector::Zero(3), Vector::Constant(3, -1), Vector::Constant(3, 1));
  ASSERT_TRUE(r.converged) << r.message;
  EXPECT_LT((r.x - c).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(BoxMinimizer, ActiveBoundOnQuadratic) {
  // Unconstrained minimum at (2, -0.5); the box clips the first coordinate.
  const auto f = [](const Vector& x, Vector& g) {
    g.resize(2);
    g << 2 * (x(0) - 2), 2 * (x(1) + 0.5);
    return (x(0) - 2) * (x(0) - 2) + (x(1) + 0.5) * (x(1) + 0.5);
  };
  const auto r = rwre::minimize_box(f, Vector::Zero(2), Vector::Constant(2, -1), Vector::Constant(2, 1));
  ASSERT_TRUE(r.converged) << r.message;
  EXPECT_NEAR(r.x(0), 1.0, 1e-12);
  EXPECT_NEAR(r.x(1), -0.5, 1e-6);
}

TEST(BoxMinimizer, RosenbrockInsideAndClipped) {
  const auto rosen = [](const Vector& x, Vector& g) {
    g.resize(2);
    g << -2 * (1 - x(0)) - 400 * x(0) * (x(1) - x(0) * x(0)), 200 * (x(1) - x(0) * x(0));
    return (1 - x(0)) * (1 - x(0)) + 100 * (x(1) - x(0) * x(0)) * (x(1) - x(0) * x(0));
  };
  rwre::BoxMinimizerOptions opt;
  opt.max_iters = 500;
  opt.grad_tol = 1e-9;
  Vector x0(2);
  x0 << -1.2, 1.0;
  const auto inside = rwre::minimize_box(rosen, x0, Vector::Constant(2, -2), Vector::Constant(2, 2), opt);
  ASSERT_TRUE(inside.converged) << inside.message;
  EXPECT_LT((inside.x - Vector::Ones(2)).cwiseAbs().maxCoeff(), 1e-6);

  // With x1 <= 0.5 the minimizer sits on the bound; the 1-d problem in x0 has
  // its minimum where d/dx0 [(1-x0)^2 + 100 (0.5 - x0^2)^2] = 0.
  Vector upper(2);
  upper << 2, 0.5;
  opt.grad_tol = 1e-7;
  const auto clipped = rwre::minimize_box(rosen, x0, Vector::Constant(2, -2), upper, opt);
  ASSERT_TRUE(clipped.converged) << clipped.message;
  EXPECT_NEAR(clipped.x(1), 0.5, 1e-12);
  const double x = clipped.x(0);
  EXPECT_NEAR(-2 * (1 - x) - 400 * x * (0.5 - x * x), 0.0, 1e-6);
  EXPECT_LT(clipped.grad(1), 0.0);
}

TEST(BoxMinimizer, InfeasiblePointsAreAvoided) {
  const auto f = [](const Vector& x, Vector& g) {
    if (x(0) > 0.5) throw rwre::NumericalError("outside the domain", 0);
    g = Vector::Constant(1, 2 * (x(0) - 0.4));
    return (x(0) - 0.4) * (x(0) - 0.4);
  };
  const auto r = rwre::minimize_box(f, Vector::Constant(1, -0.9), Vector::Constant(1, -1), Vector::Constant(1, 1));
  ASSERT_TRUE(r.converged) << r.message;
  EXPECT_NEAR(r.x(0), 0.4, 1e-6);
}

TEST(BoxMinimizer, ProjectedGradientNorm) {
  Vector x(2), g(2), lo = Vector::Zero(2), hi = Vector::Ones(2);
  x << 0.0, 0.5;
  g << 3.0, -0.2;
  // Pushing against the lower bound does not count; the free coordinate does.
  EXPECT_NEAR(rwre::projected_gradient_norm(x, g, lo, hi), 0.2, 1e-15);
  g << -3.0, 0.0;
  EXPECT_NEAR(rwre::projected_gradient_norm(x, g, lo, hi), 1.0, 1e-15);
}

TEST(BoxMinimizer, ArgminInvariantUnderConstantShift) {
  const auto base = [](const Vector& x, Vector& g) {
    g.resize(2);
    g << 4 * std::pow(x(0) - 0.3, 3) + x(1), x(0) + 2 * x(1);
    return std::pow(x(0) - 0.3, 4) + x(0) * x(1) + x(1) * x(1);
  };
  const auto shifted = [&](const Vector& x, Vector& g) { return base(x, g) + 1234.5; };
  const Vector lo = Vector::Constant(2, -1), hi = Vector::Constant(2, 1);
  const auto a = rwre::minimize_box(base, Vector::Constant(2, 0.8), lo, hi);
  const auto b = rwre::minimize_box(shifted, Vector::Constant(2, 0.8), lo, hi);
  EXPECT_LT((a.x - b.x).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Fit, OneDimensionalMatchesGridSearch) {
  const auto space = rwre::preset_iid_two_values(0.7, 0.8, 0.01, 0.99);
  const auto z = rwre::simulate_bpire(space.kernel(Vector::Constant(1, 0.4)), 3000, 21);
  const auto objective = [&](double p) { return oracle::iid_closed_form(p, 0.7, 0.8, z.z); };
  double best = 0.01;
  for (double step : {1e-3, 1e-5, 1e-7}) {
    const double lo = std::max(0.01, best - 1000 * step), hi = std::min(0.99, best + 1000 * step);
    double arg = lo, val = objective(lo);
    for (double p = lo; p <= hi; p += step) {
      const double v = objective(p);
      if (v > val) val = v, arg = p;
    }
    best = arg;
  }
  rwre::OptimizerConfig cfg;
  cfg.grad_tol = 1e-9;
  const auto res = rwre::fit(space, z, 0, cfg);
  ASSERT_TRUE(res.converged);
  EXPECT_NEAR(res.theta_hat(0), best, 2e-5);
  EXPECT_NEAR(res.loglik_at_hat, objective(best), 1e-6);
}

TEST(Fit, TwoStepDatasetMatchesFineGrid) {
  // The first factor favours the smaller value, the second the larger one;
  // their product peaks near p = 0.61.
  const auto space = rwre::preset_iid_two_values(0.6, 0.9, 0.01, 0.99);
  rwre::LeftStepsSequence z;
  z.z = {0, 3, 0};
  double arg = 0.01, val = -1e300;
  for (int i = 0; i <= 98000; ++i) {
    const double p = 0.01 + 1e-5 * i;
    const double v = oracle::iid_closed_form(p, 0.6, 0.9, z.z);
    if (v > val) val = v, arg = p;
  }
  ASSERT_GT(arg, 0.02);
  ASSERT_LT(arg, 0.98);
  rwre::OptimizerConfig cfg;
  cfg.grad_tol = 1e-10;
  const auto res = rwre::fit(space, z, 0, cfg);
  EXPECT_NEAR(res.theta_hat(0), arg, 1e-5);
}

TEST(Fit, RecoversTheTwoStateParameters) {
  const auto space = two_state_space();
  Vector theta(2);
  theta << 0.2, 0.9;
  const auto kernel = space.kernel(theta);
  rwre::EnvironmentPath env(kernel, 0, 10000, 77, 0);
  const auto traj = rwre::simulate_walk(env, 10000, 77);
  const auto res = rwre::fit(space, rwre::left_steps(traj), 0);
  ASSERT_TRUE(res.converged);
  EXPECT_FALSE(res.at_boundary);
  EXPECT_TRUE(res.sigma_reliable);
  EXPECT_LT((res.theta_hat - theta).cwiseAbs().maxCoeff(), 0.1);
  EXPECT_LE(res.grad_sup_norm, 1e-6);
  // The first start is the box center.
  EXPECT_LT((res.starts.front().start - space.center()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(res.starts.size(), 5u);
  for (const auto& s : res.starts) EXPECT_LE(s.loglik, res.loglik_at_hat + 1e-9);
}

TEST(Fit, SigmaIsMinusNormalizedHessian) {
  const auto space = two_state_space();
  Vector theta(2);
  theta << 0.3, 0.7;
  const auto z = rwre::simulate_bpire(space.kernel(theta), 2000, 5);
  const auto res = rwre::fit(space, z, 1);
  ASSERT_TRUE(res.sigma_hat.has_value());
  const rwre::LikelihoodEvaluator ev(space, z, 1);
  const auto f = [&](const Vector& t) { return ev.evaluate_unchecked(t, false).loglik; };
  Matrix h(2, 2);
  const double step = 1e-4;
  for (Eigen::Index i = 0; i < 2; ++i) {
    Vector tp = res.theta_hat, tm = res.theta_hat;
    tp(i) += step;
    tm(i) -= step;
    h.col(i) = (oracle::central_gradient(f, tp, step) - oracle::central_gradient(f, tm, step)) / (2 * step);
  }
  const Matrix expected = -h / 2000.0;
  EXPECT_LT((*res.sigma_hat - expected).cwiseAbs().maxCoeff(), 1e-3 * expected.cwiseAbs().maxCoeff());
  EXPECT_EQ(*res.sigma_hat, res.sigma_hat->transpose());
}

TEST(Fit, DeterministicAcrossCalls) {
  const auto space = two_state_space();
  const auto z = rwre::simulate_bpire(space.kernel(Vector::Constant(2, 0.5)), 1500, 8);
  const auto a = rwre::fit(space, z, 0);
  const auto b = rwre::fit(space, z, 0);
  EXPECT_EQ(a.theta_hat, b.theta_hat);
  EXPECT_EQ(a.loglik_at_hat, b.loglik_at_hat);
  ASSERT_EQ(a.starts.size(), b.starts.size());
  for (std::size_t i = 0; i < a.starts.size(); ++i) EXPECT_EQ(a.starts[i].start, b.starts[i].start);
}

TEST(Fit, StartPointsFollowTheSeed) {
  const auto space = two_state_space();
  rwre::OptimizerConfig cfg;
  cfg.n_starts = 4;
  const auto a = rwre::start_points(space, cfg);
  cfg.start_seed = 2;
  const auto b = rwre::start_points(space, cfg);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[0], b[0]);
  EXPECT_NE(a[1], b[1]);
  for (const auto& s : a) {
    EXPECT_TRUE((s.array() >= space.lower().array()).all());
    EXPECT_TRUE((s.array() <= space.upper().array()).all());
  }
}

TEST(Fit, BoundaryMaximumIsFlagged) {
  // All-zero counts favour the larger support value, pushing p to its lower bound.
  const auto space = rwre::preset_iid_two_values(0.7, 0.8, 0.01, 0.99);
  rwre::LeftStepsSequence z;
  z.z.assign(200, 0);
  const auto res = rwre::fit(space, z, 0);
  EXPECT_TRUE(res.at_boundary);
  EXPECT_NEAR(res.theta_hat(0), 0.01, 1e-9);
  EXPECT_FALSE(res.sigma_reliable);
}

TEST(Fit, RejectsBadConfig) {
  const auto space = two_state_space();
  rwre::LeftStepsSequence z;
  z.z = {0, 1, 2};
  rwre::OptimizerConfig cfg;
  cfg.n_starts = 0;
  EXPECT_THROW(rwre::fit(space, z, 0, cfg), rwre::InputError);
  cfg = {};
  cfg.grad_tol = 0.0;
  EXPECT_THROW(rwre::fit(space, z, 0, cfg), rwre::InputError);
}

TEST(Region, ContainsCenterAndScalesAxes) {
  Matrix sigma(2, 2);
  sigma << 2.0, 0.5, 0.5, 1.0;
  Vector center(2);
  center << 0.2, 0.9;
  const auto r = rwre::confidence_region(center, sigma, 1000, 0.05);
  EXPECT_TRUE(r.contains(center));
  EXPECT_EQ(r.statistic(center), 0.0);
  EXPECT_NEAR(r.chi2_quantile, -2.0 * std::log(0.05), 1e-10);
  EXPECT_FALSE(r.degenerate);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
  for (std::size_t i = 0; i < 2; ++i) {
    const double lambda = eig.eigenvalues()(Eigen::Index(i));
    EXPECT_NEAR(r.axes[i].half_length, std::sqrt(r.chi2_quantile / (1000.0 * lambda)), 1e-12);
    // The endpoint of each axis lies on the boundary.
    const Vector tip = center + r.axes[i].half_length * r.axes[i].direction;
    EXPECT_NEAR(r.statistic(tip), r.chi2_quantile, 1e-9);
  }
  // Quadrupling n halves every axis.
  const auto r4 = rwre::confidence_region(center, sigma, 4000, 0.05);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(r4.axes[i].half_length, 0.5 * r.axes[i].half_length, 1e-12);
}

TEST(Region, ShrinksAsGammaGrows) {
  const Matrix sigma = Matrix::Identity(2, 2);
  const Vector center = Vector::Zero(2);
  const auto wide = rwre::confidence_region(center, sigma, 100, 0.01);
  const auto narrow = rwre::confidence_region(center, sigma, 100, 0.1);
  EXPECT_GT(wide.axes[0].half_length, narrow.axes[0].half_length);
  Vector p(2);
  p << 0.2, 0.0;
  // n |p|^2 = 4 is below both -2 log 0.1 = 4.61 and -2 log 0.01 = 9.21.
  EXPECT_TRUE(wide.contains(p));
  EXPECT_TRUE(narrow.contains(p));
  p << 0.22, 0.0;  // 4.84
  EXPECT_TRUE(wide.contains(p));
  EXPECT_FALSE(narrow.contains(p));
}

TEST(Region, DegenerateDirectionsAreUnbounded) {
  Matrix sigma(2, 2);
  sigma << 1.0, 0.0, 0.0, 0.0;
  const auto r = rwre::confidence_region(Vector::Zero(2), sigma, 50, 0.05);
  EXPECT_TRUE(r.degenerate);
  int unbounded = 0;
  for (const auto& axis : r.axes) unbounded += axis.degenerate && std::isinf(axis.half_length);
  EXPECT_EQ(unbounded, 1);
  Vector far(2);
  far << 0.0, 1e6;
  EXPECT_TRUE(r.contains(far));
}

TEST(Region, RejectsBadInput) {
  const Matrix sigma = Matrix::Identity(2, 2);
  for (double gamma : {0.0, 1.0, -0.1, 1.5}) {
    EXPECT_THROW(rwre::confidence_region(Vector::Zero(2), sigma, 10, gamma), rwre::InputError);
  }
  EXPECT_THROW(rwre::confidence_region(Vector::Zero(3), sigma, 10, 0.05), rwre::InputError);
  EXPECT_THROW(rwre::confidence_region(Vector::Zero(2), sigma, 0, 0.05), rwre::InputError);
  rwre::MleResult empty;
  empty.theta_hat = Vector::Zero(2);
  empty.n = 10;
  EXPECT_THROW(rwre::confidence_region(empty, 0.05), rwre::InputError);
}

}  // namespace
