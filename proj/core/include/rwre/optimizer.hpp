#pragma once

// Limited-memory quasi-Newton minimization over a box, with gradient
// projection for the active bounds and a strong-Wolfe line search.

#include "rwre/env.hpp"

#include <functional>
#include <string>

namespace rwre {

struct BoxMinimizerOptions {
  int max_iters = 200;
  double grad_tol = 1e-6;  // sup-norm of the projected gradient
  int memory = 10;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 40;
};

struct BoxMinimizerResult {
  Vector x;
  double value = 0.0;
  Vector grad;
  double projected_grad_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

// Returns f(x) and writes its gradient. Throwing or returning a non-finite
// value marks x as infeasible; the line search then backs off.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

// sup-norm of P(x - g) - x, with P the projection on [lower, upper].
double projected_gradient_norm(const Vector& x, const Vector& grad, const Vector& lower,
                               const Vector& upper);

BoxMinimizerResult minimize_box(const Objective& f, Vector x0, const Vector& lower,
                                const Vector& upper, const BoxMinimizerOptions& options = {});

}  // namespace rwre
