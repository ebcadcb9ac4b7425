#include "rwre/env.hpp"
#include "rwre/error.hpp"
#include "rwre/filter.hpp"
#include "rwre/walk.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace {

using rwre::Matrix;
using rwre::Vector;

rwre::ParamSpace two_state_space() {
  return rwre::preset_two_state_chain(0.4, 0.8, Vector::Constant(2, 0.01), Vector::Constant(2, 0.99));
}

rwre::ParamSpace free_space(std::size_t states) {
  std::vector<double> s;
  for (std::size_t i = 0; i < states; ++i) s.push_back(0.3 + 0.55 * double(i) / double(states - 1));
  return rwre::preset_row_weights(rwre::Support(s), Matrix::Ones(Eigen::Index(states), Eigen::Index(states)), 0.05, 20.0);
}

// Counts from the ballistic two-state model; any model may evaluate them.
rwre::LeftStepsSequence ballistic_counts(std::size_t n, std::uint64_t seed) {
  Vector theta(2);
  theta << 0.2, 0.9;
  return rwre::simulate_bpire(two_state_space().kernel(theta), n, seed);
}

Vector random_in_box(const rwre::ParamSpace& space, std::mt19937_64& rng, double margin = 0.05) {
  Vector t(space.dim());
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double w = space.upper()(i) - space.lower()(i);
    t(i) = std::uniform_real_distribution<double>(space.lower()(i) + margin * w, space.upper()(i) - margin * w)(rng);
  }
  return t;
}

rwre::LeftStepsSequence random_counts(std::size_t n, std::mt19937_64& rng, std::uint64_t max = 4) {
  rwre::LeftStepsSequence z;
  z.z.push_back(0);
  for (std::size_t k = 0; k < n; ++k) z.z.push_back(std::uniform_int_distribution<std::uint64_t>(0, max)(rng));
  return z;
}

TEST(Emission, KnownValues) {
  EXPECT_NEAR(std::exp(rwre::log_emission(0.5, 1, 1)), 0.25, 1e-15);
  for (double a : {0.1, 0.37, 0.9}) EXPECT_NEAR(rwre::log_emission(a, 0, 0), std::log(a), 1e-15);
  EXPECT_NEAR(rwre::log_emission(0.3, 7, 4), std::log(oracle::emission(0.3, 7, 4)), 1e-12);
}

TEST(Emission, NegativeBinomialNormalization) {
  for (double a : {0.4, 0.6, 0.85}) {
    for (std::uint64_t x : {0u, 3u, 10u}) {
      // The mass beyond Y is below 1e-12 once Y is several means past the mode.
      double total = 0.0;
      const double mean = double(x + 1) * (1 - a) / a;
      const auto cap = std::uint64_t(mean + 60.0 * std::sqrt(mean + 1.0) + 200.0);
      for (std::uint64_t y = 0; y <= cap; ++y) total += std::exp(rwre::log_emission(a, x, y));
      EXPECT_NEAR(total, 1.0, 1e-10) << a << " " << x;
    }
  }
}

TEST(Emission, LogFactorialCacheMatchesLgamma) {
  rwre::LogFactorialCache cache;
  for (std::uint64_t k : {0u, 1u, 2u, 5u, 17u, 100u, 1000u, 70000u, 3u}) {
    EXPECT_NEAR(cache(k), std::lgamma(double(k) + 1.0), 1e-9 * std::max(1.0, std::lgamma(double(k) + 1.0)));
  }
}

TEST(Emission, TableAgreesWithFreeFunction) {
  rwre::EmissionTable table(rwre::Support({0.4, 0.8}));
  for (std::uint64_t x = 0; x < 20; x += 3) {
    for (std::uint64_t y = 0; y < 20; y += 4) {
      EXPECT_NEAR(table.log_g(1, x, y), rwre::log_emission(0.8, x, y), 1e-12);
    }
  }
}

TEST(Filter, InitIsPointMassWithZeroGradient) {
  const auto k = two_state_space().kernel(Vector::Constant(2, 0.5));
  const auto f = rwre::filter_init(k, 0, 2);
  EXPECT_EQ(f.probs, (Eigen::RowVectorXd(2) << 1.0, 0.0).finished());
  EXPECT_EQ(f.grad, Matrix::Zero(2, 2));
  EXPECT_EQ(f.step, 0u);
  EXPECT_EQ(f.anchor, 0u);
}

TEST(Filter, UniformKernelForgetsThePast) {
  const auto k = rwre::make_kernel(rwre::Support({0.3, 0.5, 0.7}), Matrix::Constant(3, 3, 1.0 / 3.0));
  auto f = rwre::filter_init(k, 2);
  f.probs << 0.2, 0.5, 0.3;
  const auto step = rwre::filter_step(f, k, {}, 2, 3);
  Eigen::RowVectorXd g(3);
  for (Eigen::Index b = 0; b < 3; ++b) g(b) = oracle::emission(k.support[std::size_t(b)], 2, 3);
  EXPECT_LT((step.filter.probs - g / g.sum()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Filter, OneStepHandComputation) {
  const auto space = two_state_space();
  Vector theta(2);
  theta << 0.2, 0.9;
  const auto k = space.kernel(theta);
  const auto step = rwre::filter_step(rwre::filter_init(k, 0), k, {}, 0, 1);
  const double expected =
      std::log(k.q_rev(0, 0) * oracle::emission(0.4, 0, 1) + k.q_rev(0, 1) * oracle::emission(0.8, 0, 1));
  EXPECT_NEAR(step.log_increment, expected, 1e-14);
  rwre::LeftStepsSequence z;
  z.z = {0, 1};
  EXPECT_NEAR(rwre::loglik(space, theta, z, 0, false).loglik, expected, 1e-14);
}

TEST(Filter, StepsAgreeWithEvaluator) {
  std::mt19937_64 rng(2);
  const auto space = free_space(3);
  const Vector theta = random_in_box(space, rng, 0.3);
  const auto z = random_counts(50, rng, 6);
  const auto rd = space.reversed_with_derivatives(theta);
  auto f = rwre::filter_init(rd.kernel, 1, space.dim());
  double total = 0.0;
  Vector grad = Vector::Zero(space.dim());
  for (std::size_t k = 1; k <= z.n(); ++k) {
    const auto step = rwre::filter_step(f, rd.kernel, rd.dq_rev, z.z[k - 1], z.z[k]);
    total += step.log_increment;
    grad += step.grad_increment;
    f = step.filter;
  }
  const auto eval = rwre::loglik(space, theta, z, 1, true);
  EXPECT_NEAR(total, eval.loglik, 1e-10 * std::abs(eval.loglik));
  EXPECT_LT((grad - eval.grad).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, eval.grad.cwiseAbs().maxCoeff()));
}

TEST(Filter, StaysNormalizedOverLongRuns) {
  const auto space = free_space(3);
  std::mt19937_64 rng(6);
  const Vector theta = random_in_box(space, rng);
  const auto rd = space.reversed_with_derivatives(theta);
  const auto z = ballistic_counts(100000, 3);
  auto f = rwre::filter_init(rd.kernel, 0, space.dim());
  double worst_sum = 0.0, worst_grad = 0.0;
  for (std::size_t k = 1; k <= z.n(); ++k) {
    f = rwre::filter_step(f, rd.kernel, rd.dq_rev, z.z[k - 1], z.z[k]).filter;
    worst_sum = std::max(worst_sum, std::abs(f.probs.sum() - 1.0));
    worst_grad = std::max(worst_grad, f.grad.rowwise().sum().cwiseAbs().maxCoeff());
    ASSERT_GE(f.probs.minCoeff(), 0.0);
  }
  EXPECT_EQ(f.step, z.n());
  EXPECT_LE(worst_sum, 1e-12);
  EXPECT_LE(worst_grad, 1e-9);
}

TEST(Loglik, MatchesBruteForcePathSums) {
  std::mt19937_64 rng(10);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t states = rep % 2 ? 3 : 2;
    const auto space = free_space(states);
    const Vector theta = random_in_box(space, rng, 0.0);
    const auto z = random_counts(1 + std::size_t(rep) % 8, rng);
    const std::size_t a0 = std::size_t(rep) % states;
    const auto k = space.kernel(theta);
    const double expected = oracle::brute_force_loglik(k.q_rev, k.support.values(), z.z, a0);
    EXPECT_NEAR(rwre::loglik(space, theta, z, a0, false).loglik, expected, 1e-10);
  }
}

TEST(Loglik, TwoStepTwoStatePathSum) {
  const auto space = two_state_space();
  Vector theta(2);
  theta << 0.3, 0.6;
  const auto k = space.kernel(theta);
  rwre::LeftStepsSequence z;
  z.z = {0, 2, 1};
  double total = 0.0;
  for (int b1 = 0; b1 < 2; ++b1) {
    for (int b2 = 0; b2 < 2; ++b2) {
      total += k.q_rev(0, b1) * oracle::emission(k.support[std::size_t(b1)], 0, 2) * k.q_rev(b1, b2) *
               oracle::emission(k.support[std::size_t(b2)], 2, 1);
    }
  }
  EXPECT_NEAR(rwre::loglik(space, theta, z, 0, false).loglik, std::log(total), 1e-12);
}

TEST(Loglik, RelabelingStatesLeavesValueUnchanged) {
  // Supports are stored in increasing order, so the relabeled model is only
  // expressible through the path-sum oracle.
  std::mt19937_64 rng(12);
  const auto space = free_space(3);
  for (int rep = 0; rep < 5; ++rep) {
    const Vector theta = random_in_box(space, rng);
    const auto z = random_counts(6, rng);
    const auto k = space.kernel(theta);
    std::vector<int> perm{2, 0, 1};
    Matrix p_rev(3, 3);
    std::vector<double> p_support(3);
    for (int i = 0; i < 3; ++i) {
      p_support[std::size_t(perm[std::size_t(i)])] = k.support[std::size_t(i)];
      for (int j = 0; j < 3; ++j) p_rev(perm[std::size_t(i)], perm[std::size_t(j)]) = k.q_rev(i, j);
    }
    const double relabeled = oracle::brute_force_loglik(p_rev, p_support, z.z, std::size_t(perm[1]));
    EXPECT_NEAR(rwre::loglik(space, theta, z, 1, false).loglik, relabeled, 1e-10);
  }
}

TEST(Loglik, IidPresetMatchesClosedForm) {
  const auto space = rwre::preset_iid_two_values(0.7, 0.8, 0.01, 0.99);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const double p = 0.1 + 0.08 * double(seed);
    const auto k = space.kernel(Vector::Constant(1, p));
    const auto z = rwre::simulate_bpire(k, 1000, seed);
    const double expected = oracle::iid_closed_form(p, 0.7, 0.8, z.z);
    for (std::size_t a0 : {0u, 1u}) {
      EXPECT_NEAR(rwre::loglik(space, Vector::Constant(1, p), z, a0, false).loglik, expected, 1e-10 * std::abs(expected));
    }
  }
}

TEST(Loglik, PrefixConsistency) {
  const auto space = two_state_space();
  Vector theta(2);
  theta << 0.25, 0.85;
  const auto z = rwre::simulate_bpire(space.kernel(theta), 400, 4);
  const rwre::LikelihoodEvaluator full(space, z, 0);
  const auto inc = full.increments(theta);
  ASSERT_EQ(inc.size(), 400u);
  for (std::size_t m : {1u, 17u, 200u, 400u}) {
    rwre::LeftStepsSequence prefix;
    prefix.z.assign(z.z.begin(), z.z.begin() + std::ptrdiff_t(m) + 1);
    const double partial = std::accumulate(inc.begin(), inc.begin() + std::ptrdiff_t(m), 0.0);
    EXPECT_NEAR(rwre::loglik(space, theta, prefix, 0, false).loglik, partial, 1e-9);
  }
}

TEST(Loglik, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(14);
  const std::vector<rwre::ParamSpace> spaces{two_state_space(), free_space(3), rwre::preset_iid_two_values(0.7, 0.8, 0.01, 0.99)};
  for (const auto& space : spaces) {
    for (int rep = 0; rep < 4; ++rep) {
      const Vector theta = random_in_box(space, rng, 0.1);
      const auto z = ballistic_counts(500, std::uint64_t(rep) + 1);
      const rwre::LikelihoodEvaluator ev(space, z, 0);
      const auto eval = ev.evaluate(theta, true, false);
      const auto f = [&](const Vector& t) { return ev.evaluate_unchecked(t, false).loglik; };
      const double h = 1e-4;
      const Vector fd = (4.0 * oracle::central_gradient(f, theta, h / 2) - oracle::central_gradient(f, theta, h)) / 3.0;
      const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
      EXPECT_LE((eval.grad - fd).cwiseAbs().maxCoeff() / scale, 1e-6) << space.name();
    }
  }
}

TEST(Loglik, HessianSymmetricAndMatchesBruteForce) {
  const auto space = free_space(2);
  std::mt19937_64 rng(15);
  for (int rep = 0; rep < 5; ++rep) {
    const Vector theta = random_in_box(space, rng, 0.2);
    const auto z = random_counts(7, rng);
    const auto eval = rwre::loglik(space, theta, z, 0, true, true);
    ASSERT_TRUE(eval.hessian.has_value());
    const Matrix& h = *eval.hessian;
    EXPECT_LE((h - h.transpose()).cwiseAbs().maxCoeff(), 1e-8);
    const auto f = [&](const Vector& t) {
      const auto k = space.kernel(t);
      return oracle::brute_force_loglik(k.q_rev, k.support.values(), z.z, 0);
    };
    Matrix expected(theta.size(), theta.size());
    const double step = 1e-4;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Vector tp = theta, tm = theta;
      tp(i) += step;
      tm(i) -= step;
      expected.col(i) = (oracle::central_gradient(f, tp, step) - oracle::central_gradient(f, tm, step)) / (2 * step);
    }
    EXPECT_LE((h - expected).cwiseAbs().maxCoeff(), 1e-4 * std::max(1.0, expected.cwiseAbs().maxCoeff()));
  }
}

TEST(Loglik, RejectsPointsOutsideTheBoxAndBadAnchors) {
  const auto space = two_state_space();
  rwre::LeftStepsSequence z;
  z.z = {0, 1, 0};
  EXPECT_THROW(rwre::loglik(space, Vector::Constant(2, 1.5), z, 0), rwre::InputError);
  EXPECT_THROW(rwre::loglik(space, Vector::Constant(2, 0.5), z, 2), rwre::InputError);
  rwre::LeftStepsSequence empty;
  empty.z = {0};
  EXPECT_THROW(rwre::loglik(space, Vector::Constant(2, 0.5), empty, 0), rwre::InputError);
}

TEST(Loglik, NonPositiveForDiscreteObservations) {
  std::mt19937_64 rng(16);
  const auto space = free_space(3);
  for (int rep = 0; rep < 10; ++rep) {
    const auto z = random_counts(30, rng, 10);
    EXPECT_LE(rwre::loglik(space, random_in_box(space, rng), z, 0, false).loglik, 0.0);
  }
}

TEST(Loglik, HandlesLargeCountsWithoutUnderflow) {
  const auto space = two_state_space();
  rwre::LeftStepsSequence z;
  z.z = {0, 400, 900, 1500, 800, 0};
  const auto eval = rwre::loglik(space, Vector::Constant(2, 0.5), z, 0, true);
  EXPECT_TRUE(std::isfinite(eval.loglik));
  EXPECT_TRUE(eval.grad.allFinite());
}

}  // namespace
