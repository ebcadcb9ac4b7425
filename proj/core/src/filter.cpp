#include "rwre/filter.hpp"

#include "rwre/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rwre {

namespace {

constexpr double kLoglikSlack = 1e-9;

// Workspace for one filter pass; sized once, reused every step.
struct FilterState {
  Eigen::RowVectorXd probs;
  Matrix grad;
  Eigen::RowVectorXd predicted;
  Matrix dpredicted;

  FilterState(std::size_t states, std::size_t dim, std::size_t anchor)
      : probs(Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(states))),
        grad(Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(states))),
        predicted(static_cast<Eigen::Index>(states)),
        dpredicted(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(states)) {
    probs(static_cast<Eigen::Index>(anchor)) = 1.0;
  }

  // Advances by one observation whose emission column is g (scaled by
  // exp(-offset)); returns log c and writes d log c / d theta to grad_inc.
  double advance(const Matrix& q_rev, std::span<const Matrix> dq_rev,
                 const Eigen::Ref<const Eigen::RowVectorXd>& g, double offset, Vector* grad_inc) {
    predicted.noalias() = probs * q_rev;
    if (grad_inc) {
      dpredicted.noalias() = grad * q_rev;
      for (std::size_t k = 0; k < dq_rev.size(); ++k) {
        dpredicted.row(static_cast<Eigen::Index>(k)).noalias() += probs * dq_rev[k];
      }
    }
    probs = predicted.cwiseProduct(g);
    const double c = probs.sum();
    if (!(c > 0.0) || !std::isfinite(c)) return std::numeric_limits<double>::quiet_NaN();
    if (grad_inc) {
      for (Eigen::Index k = 0; k < grad.rows(); ++k) {
        auto du = dpredicted.row(k).cwiseProduct(g);
        const double dc = du.sum() / c;
        (*grad_inc)(k) = dc;
        grad.row(k) = (du - dc * probs) / c;
      }
    }
    probs /= c;
    return std::log(c) + offset;
  }
};

}  // namespace

double LogFactorialCache::operator()(std::uint64_t k) {
  if (k >= values_.size()) {
    std::size_t target = std::max<std::size_t>(values_.size() * 2, 16);
    while (target <= k) target *= 2;
    const std::size_t old = values_.size();
    values_.resize(target);
    for (std::size_t i = old; i < target; ++i) values_[i] = values_[i - 1] + std::log(static_cast<double>(i));
  }
  return values_[k];
}

double log_emission(double a, std::uint64_t x, std::uint64_t y) {
  thread_local LogFactorialCache log_factorial;
  return log_factorial(x + y) - log_factorial(x) - log_factorial(y) +
         static_cast<double>(x + 1) * std::log(a) + static_cast<double>(y) * std::log1p(-a);
}

EmissionTable::EmissionTable(const Support& support) {
  for (double a : support.values()) {
    log_a_.push_back(std::log(a));
    log_1ma_.push_back(std::log1p(-a));
  }
}

double EmissionTable::log_g(std::size_t state, std::uint64_t x, std::uint64_t y) {
  return log_factorial_(x + y) - log_factorial_(x) - log_factorial_(y) +
         static_cast<double>(x + 1) * log_a_[state] + static_cast<double>(y) * log_1ma_[state];
}

PredictionFilter filter_init(const EnvKernel& kernel, std::size_t a0_index, std::size_t dim) {
  if (a0_index >= kernel.size()) throw InputError("anchor state index out of range");
  PredictionFilter f;
  f.probs = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(kernel.size()));
  f.probs(static_cast<Eigen::Index>(a0_index)) = 1.0;
  f.grad = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(kernel.size()));
  f.anchor = a0_index;
  return f;
}

FilterStep filter_step(const PredictionFilter& filter, const EnvKernel& kernel,
                       std::span<const Matrix> dq_rev, std::uint64_t z_prev, std::uint64_t z_next) {
  const auto states = kernel.size();
  const bool want_grad = !dq_rev.empty();
  if (want_grad && static_cast<std::size_t>(filter.grad.rows()) != dq_rev.size()) {
    throw InputError("filter gradient and kernel derivatives disagree on the dimension");
  }
  Eigen::RowVectorXd log_g(static_cast<Eigen::Index>(states));
  for (std::size_t b = 0; b < states; ++b) {
    log_g(static_cast<Eigen::Index>(b)) = log_emission(kernel.support[b], z_prev, z_next);
  }
  const double offset = log_g.maxCoeff();
  const Eigen::RowVectorXd g = (log_g.array() - offset).exp().matrix();

  FilterState state(states, want_grad ? dq_rev.size() : 0, filter.anchor);
  state.probs = filter.probs;
  if (want_grad) state.grad = filter.grad;
  FilterStep out;
  out.grad_increment = Vector::Zero(static_cast<Eigen::Index>(dq_rev.size()));
  out.log_increment = state.advance(kernel.q_rev, dq_rev, g, offset, want_grad ? &out.grad_increment : nullptr);
  if (!std::isfinite(out.log_increment)) {
    throw NumericalError("degenerate filter normalization", filter.step + 1);
  }
  out.filter.probs = std::move(state.probs);
  out.filter.grad = std::move(state.grad);
  out.filter.step = filter.step + 1;
  out.filter.anchor = filter.anchor;
  return out;
}

// --- LikelihoodEvaluator -------------------------------------------------------

LikelihoodEvaluator::LikelihoodEvaluator(ParamSpace space, const LeftStepsSequence& z,
                                         std::size_t a0_index)
    : space_(std::move(space)), a0_(a0_index), n_(z.n()) {
  if (z.z.size() < 2) throw InputError("left-step sequence needs at least one increment");
  if (a0_ >= space_.support().size()) throw InputError("anchor state index out of range");
  const auto states = static_cast<Eigen::Index>(space_.support().size());
  EmissionTable table(space_.support());
  emission_.resize(static_cast<Eigen::Index>(n_), states);
  offset_.resize(static_cast<Eigen::Index>(n_));
  for (std::size_t k = 1; k <= n_; ++k) {
    const auto row = static_cast<Eigen::Index>(k - 1);
    for (Eigen::Index b = 0; b < states; ++b) {
      emission_(row, b) = table.log_g(static_cast<std::size_t>(b), z.z[k - 1], z.z[k]);
    }
    offset_(row) = emission_.row(row).maxCoeff();
    emission_.row(row) = (emission_.row(row).array() - offset_(row)).exp();
  }
}

double LikelihoodEvaluator::run(const Vector& theta, Vector* grad, std::vector<double>* increments) const {
  std::vector<Matrix> dq_rev;
  EnvKernel kernel = [&] {
    if (!grad) return space_.kernel(theta);
    auto derived = space_.reversed_with_derivatives(theta);
    dq_rev = std::move(derived.dq_rev);
    return std::move(derived.kernel);
  }();
  const std::size_t dim = grad ? space_.dim() : 0;
  FilterState state(kernel.size(), dim, a0_);
  Vector step_grad = Vector::Zero(static_cast<Eigen::Index>(dim));
  if (grad) *grad = Vector::Zero(static_cast<Eigen::Index>(dim));
  double total = 0.0;
  for (std::size_t k = 0; k < n_; ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    const double inc = state.advance(kernel.q_rev, dq_rev, emission_.row(row), offset_(row),
                                     grad ? &step_grad : nullptr);
    if (!std::isfinite(inc)) throw NumericalError("non-finite log-likelihood increment", k + 1);
    total += inc;
    if (grad) *grad += step_grad;
    if (increments) increments->push_back(inc);
  }
  if (grad && !grad->allFinite()) throw NumericalError("non-finite log-likelihood gradient", n_);
  if (total > kLoglikSlack) throw NumericalError("log-likelihood of discrete data is positive", n_);
  return total;
}

LikelihoodEvaluation LikelihoodEvaluator::evaluate_unchecked(const Vector& theta, bool want_grad) const {
  LikelihoodEvaluation out;
  out.n = n_;
  out.loglik = run(theta, want_grad ? &out.grad : nullptr, nullptr);
  return out;
}

LikelihoodEvaluation LikelihoodEvaluator::evaluate(const Vector& theta, bool want_grad,
                                                   bool want_hessian) const {
  space_.check(theta);
  LikelihoodEvaluation out = evaluate_unchecked(theta, want_grad);
  if (want_hessian) out.hessian = hessian(theta);
  return out;
}

Matrix LikelihoodEvaluator::hessian(const Vector& theta) const {
  const auto dim = static_cast<Eigen::Index>(space_.dim());
  Matrix h(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const double step = std::max(1e-5, 1e-4 * std::abs(theta(i)));
    Vector up = theta;
    Vector down = theta;
    up(i) += step;
    down(i) -= step;
    Vector g_up, g_down;
    run(up, &g_up, nullptr);
    run(down, &g_down, nullptr);
    h.col(i) = (g_up - g_down) / (2.0 * step);
  }
  Matrix sym = 0.5 * (h + h.transpose());
  if (!sym.allFinite()) throw NumericalError("non-finite Hessian", n_);
  return sym;
}

std::vector<double> LikelihoodEvaluator::increments(const Vector& theta) const {
  std::vector<double> out;
  out.reserve(n_);
  run(theta, nullptr, &out);
  return out;
}

LikelihoodEvaluation loglik(const ParamSpace& space, const Vector& theta, const LeftStepsSequence& z,
                            std::size_t a0_index, bool want_grad, bool want_hessian) {
  space.check(theta);
  return LikelihoodEvaluator(space, z, a0_index).evaluate(theta, want_grad, want_hessian);
}

}  // namespace rwre
