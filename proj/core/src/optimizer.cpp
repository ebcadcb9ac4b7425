#include "rwre/optimizer.hpp"

#include "rwre/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace rwre {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Trial {
  double t = 0.0;
  double value = kInf;
  double slope = 0.0;  // directional derivative
  Vector x;
  Vector grad;
  bool feasible = false;
};

class LineFunction {
 public:
  LineFunction(const Objective& f, const Vector& x, const Vector& d, const Vector& lower,
               const Vector& upper, int& evaluations)
      : f_(f), x_(x), d_(d), lower_(lower), upper_(upper), evaluations_(evaluations) {}

  Trial operator()(double t) const {
    Trial trial;
    trial.t = t;
    trial.x = (x_ + t * d_).cwiseMax(lower_).cwiseMin(upper_);
    ++evaluations_;
    try {
      trial.value = f_(trial.x, trial.grad);
      trial.feasible = std::isfinite(trial.value) && trial.grad.allFinite();
    } catch (const Error&) {
      trial.feasible = false;
    }
    if (!trial.feasible) {
      trial.value = kInf;
      return trial;
    }
    trial.slope = trial.grad.dot(d_);
    return trial;
  }

 private:
  const Objective& f_;
  const Vector& x_;
  const Vector& d_;
  const Vector& lower_;
  const Vector& upper_;
  int& evaluations_;
};

// Minimizer of the cubic through (a, fa, da), (b, fb, db), safeguarded into the
// middle 80% of the interval; bisection when the data do not support a cubic.
double interpolate(const Trial& a, const Trial& b) {
  const double lo = std::min(a.t, b.t);
  const double hi = std::max(a.t, b.t);
  const double margin = 0.1 * (hi - lo);
  double t = 0.5 * (a.t + b.t);
  if (a.feasible && b.feasible) {
    const double d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.t - b.t);
    const double disc = d1 * d1 - a.slope * b.slope;
    if (disc >= 0.0) {
      const double d2 = std::copysign(std::sqrt(disc), b.t - a.t);
      const double denom = b.slope - a.slope + 2.0 * d2;
      if (denom != 0.0) t = b.t - (b.t - a.t) * (b.slope + d2 - d1) / denom;
    }
  }
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) t = 0.5 * (lo + hi);
  return t;
}

// Strong-Wolfe search for phi(t) on (0, t_max]. Returns an infeasible trial on
// failure.
Trial wolfe_search(const LineFunction& phi, const Trial& start, double t0, double t_max,
                   const BoxMinimizerOptions& opt) {
  const double f0 = start.value;
  const double g0 = start.slope;
  auto armijo = [&](const Trial& tr) { return tr.feasible && tr.value <= f0 + opt.c1 * tr.t * g0; };
  auto curvature = [&](const Trial& tr) { return std::abs(tr.slope) <= -opt.c2 * g0; };

  auto zoom = [&](Trial lo, Trial hi, int budget) -> Trial {
    for (int i = 0; i < budget; ++i) {
      const Trial tr = phi(interpolate(lo, hi));
      if (!armijo(tr) || tr.value >= lo.value) {
        hi = tr;
      } else {
        if (curvature(tr)) return tr;
        if (tr.slope * (hi.t - lo.t) >= 0.0) hi = lo;
        lo = tr;
      }
      if (std::abs(hi.t - lo.t) <= 1e-14 * std::max(1.0, lo.t)) break;
    }
    return lo;  // satisfies Armijo when lo.t > 0
  };

  Trial prev = start;
  double t = std::min(t0, t_max);
  for (int i = 0; i < opt.max_line_search; ++i) {
    const Trial tr = phi(t);
    if (!armijo(tr) || (i > 0 && tr.value >= prev.value)) {
      return zoom(prev, tr, opt.max_line_search - i);
    }
    if (curvature(tr)) return tr;
    if (tr.slope >= 0.0) return zoom(tr, prev, opt.max_line_search - i);
    if (t >= t_max) return tr;  // blocked by a bound while still descending
    prev = tr;
    t = std::min(2.0 * t, t_max);
  }
  return prev;
}

}  // namespace

double projected_gradient_norm(const Vector& x, const Vector& grad, const Vector& lower,
                               const Vector& upper) {
  return ((x - grad).cwiseMax(lower).cwiseMin(upper) - x).cwiseAbs().maxCoeff();
}

BoxMinimizerResult minimize_box(const Objective& f, Vector x0, const Vector& lower,
                                const Vector& upper, const BoxMinimizerOptions& opt) {
  if (x0.size() != lower.size() || lower.size() != upper.size()) {
    throw InputError("starting point and bounds have different sizes");
  }
  if (opt.max_iters < 1 || !(opt.grad_tol > 0.0) || opt.memory < 1) {
    throw InputError("invalid optimizer options");
  }
  const auto dim = x0.size();
  BoxMinimizerResult res;
  res.x = x0.cwiseMax(lower).cwiseMin(upper);
  {
    const Vector zero = Vector::Zero(dim);
    const LineFunction at_start(f, res.x, zero, lower, upper, res.evaluations);
    const Trial t = at_start(0.0);
    if (!t.feasible) {
      res.value = kInf;
      res.message = "objective is not finite at the starting point";
      return res;
    }
    res.value = t.value;
    res.grad = t.grad;
  }

  std::deque<Vector> s_hist, y_hist;
  for (res.iterations = 0; res.iterations < opt.max_iters; ++res.iterations) {
    res.projected_grad_norm = projected_gradient_norm(res.x, res.grad, lower, upper);
    if (res.projected_grad_norm <= opt.grad_tol) {
      res.converged = true;
      res.message = "projected gradient below tolerance";
      return res;
    }

    // Variables held at a bound by the gradient stay fixed this iteration.
    Vector free = Vector::Ones(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      if ((res.x(i) <= lower(i) && res.grad(i) > 0.0) || (res.x(i) >= upper(i) && res.grad(i) < 0.0)) {
        free(i) = 0.0;
      }
    }

    // Two-loop recursion restricted to the free variables.
    Vector r = res.grad.cwiseProduct(free);
    std::vector<double> alpha(s_hist.size(), 0.0);
    std::vector<double> rho(s_hist.size(), 0.0);
    double gamma = 1.0;
    bool scaled = false;
    for (std::size_t j = s_hist.size(); j-- > 0;) {
      const Vector sf = s_hist[j].cwiseProduct(free);
      const Vector yf = y_hist[j].cwiseProduct(free);
      const double sy = sf.dot(yf);
      if (!(sy > 1e-12 * sf.norm() * yf.norm())) continue;
      rho[j] = 1.0 / sy;
      alpha[j] = rho[j] * sf.dot(r);
      r -= alpha[j] * yf;
      if (!scaled) {
        gamma = sy / yf.squaredNorm();
        scaled = true;
      }
    }
    r *= gamma;
    for (std::size_t j = 0; j < s_hist.size(); ++j) {
      if (rho[j] == 0.0) continue;
      const Vector sf = s_hist[j].cwiseProduct(free);
      const Vector yf = y_hist[j].cwiseProduct(free);
      const double beta = rho[j] * yf.dot(r);
      r += (alpha[j] - beta) * sf;
    }
    Vector d = -r.cwiseProduct(free);
    for (Eigen::Index i = 0; i < dim; ++i) {
      if ((res.x(i) <= lower(i) && d(i) < 0.0) || (res.x(i) >= upper(i) && d(i) > 0.0)) d(i) = 0.0;
    }
    bool steepest = s_hist.empty();
    if (!(d.dot(res.grad) < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      steepest = true;
      d = -res.grad.cwiseProduct(free);
    }

    double t_max = kInf;
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (d(i) > 0.0) t_max = std::min(t_max, (upper(i) - res.x(i)) / d(i));
      if (d(i) < 0.0) t_max = std::min(t_max, (lower(i) - res.x(i)) / d(i));
    }
    const double t0 = steepest ? std::min(1.0, 1.0 / d.cwiseAbs().maxCoeff()) : 1.0;

    const LineFunction phi(f, res.x, d, lower, upper, res.evaluations);
    Trial start;
    start.value = res.value;
    start.slope = res.grad.dot(d);
    start.x = res.x;
    start.grad = res.grad;
    start.feasible = true;
    const Trial next = wolfe_search(phi, start, t0, t_max, opt);

    if (!next.feasible || next.t <= 0.0 || !(next.value <= res.value)) {
      if (!steepest) {
        s_hist.clear();
        y_hist.clear();
        continue;
      }
      res.message = "line search failed along the steepest-descent direction";
      return res;
    }

    Vector s = next.x - res.x;
    Vector y = next.grad - res.grad;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    const bool stalled = res.value - next.value <= 1e-15 * std::max(1.0, std::abs(res.value));
    res.x = next.x;
    res.value = next.value;
    res.grad = next.grad;
    if (stalled && steepest) break;
  }
  res.projected_grad_norm = projected_gradient_norm(res.x, res.grad, lower, upper);
  res.converged = res.projected_grad_norm <= opt.grad_tol;
  res.message = res.converged ? "projected gradient below tolerance"
                              : "stopped before reaching the gradient tolerance";
  return res;
}

}  // namespace rwre
