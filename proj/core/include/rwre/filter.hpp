#pragma once

// Exact conditional log-likelihood of a left-step sequence, by the forward
// filter over the hidden reversed environment, with its analytic gradient and
// a finite-difference Hessian.

#include "rwre/env.hpp"
#include "rwre/walk.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace rwre {

// log k! by the additive recurrence, grown by doubling on demand. Not
// thread-safe; give every thread its own instance.
class LogFactorialCache {
 public:
  double operator()(std::uint64_t k);

 private:
  std::vector<double> values_{0.0};
};

// log g_a(x, y) = log C(x + y, x) + (x + 1) log a + y log(1 - a): the law of
// the next count y given the current count x in environment state a.
double log_emission(double a, std::uint64_t x, std::uint64_t y);

class EmissionTable {
 public:
  explicit EmissionTable(const Support& support);

  double log_g(std::size_t state, std::uint64_t x, std::uint64_t y);
  std::size_t size() const noexcept { return log_a_.size(); }

 private:
  std::vector<double> log_a_;
  std::vector<double> log_1ma_;
  LogFactorialCache log_factorial_;
};

// Law of the hidden state at step k given Z_0..Z_k, and its derivative in
// theta (one row per coordinate).
struct PredictionFilter {
  Eigen::RowVectorXd probs;
  Matrix grad;
  std::size_t step = 0;
  std::size_t anchor = 0;
};

PredictionFilter filter_init(const EnvKernel& kernel, std::size_t a0_index, std::size_t dim = 0);

struct FilterStep {
  PredictionFilter filter;
  double log_increment = 0.0;  // log P(Z_{k+1} | Z_0..Z_k)
  Vector grad_increment;       // its theta-gradient
};

// One recursion step. dq_rev holds d q_rev / d theta_k for every coordinate
// (may be empty when no gradient is wanted).
FilterStep filter_step(const PredictionFilter& filter, const EnvKernel& kernel,
                       std::span<const Matrix> dq_rev, std::uint64_t z_prev, std::uint64_t z_next);

struct LikelihoodEvaluation {
  double loglik = 0.0;
  Vector grad;                    // empty unless requested
  std::optional<Matrix> hessian;  // present when requested
  std::size_t n = 0;
};

// Precomputes the emission terms of one data set so that repeated evaluations
// at different theta only run the filter.
class LikelihoodEvaluator {
 public:
  LikelihoodEvaluator(ParamSpace space, const LeftStepsSequence& z, std::size_t a0_index);

  const ParamSpace& space() const noexcept { return space_; }
  std::size_t n() const noexcept { return n_; }
  std::size_t anchor() const noexcept { return a0_; }

  // Enforces the parameter box.
  LikelihoodEvaluation evaluate(const Vector& theta, bool want_grad, bool want_hessian) const;
  // No box check: used by finite differences and line searches.
  LikelihoodEvaluation evaluate_unchecked(const Vector& theta, bool want_grad) const;
  // Central differences of the analytic gradient, step max(1e-5, 1e-4 |theta_i|),
  // symmetrized.
  Matrix hessian(const Vector& theta) const;
  // log P(Z_k | Z_0..Z_{k-1}) for k = 1..n.
  std::vector<double> increments(const Vector& theta) const;

 private:
  double run(const Vector& theta, Vector* grad, std::vector<double>* increments) const;

  ParamSpace space_;
  std::size_t a0_;
  std::size_t n_;
  Matrix emission_;  // n x |S|: g_b(Z_{k-1}, Z_k) / exp(offset_k)
  Vector offset_;    // max_b log g_b(Z_{k-1}, Z_k)
};

LikelihoodEvaluation loglik(const ParamSpace& space, const Vector& theta, const LeftStepsSequence& z,
                            std::size_t a0_index, bool want_grad = true, bool want_hessian = false);

}  // namespace rwre
