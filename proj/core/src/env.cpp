#include "rwre/env.hpp"

#include "rwre/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>

namespace rwre {

namespace {

constexpr double kRowSumTol = 1e-12;
constexpr double kStationaryResidualTol = 1e-12;
constexpr double kIidTol = 1e-12;
constexpr double kJacobianStep = 1e-7;

// Augmented system [(q^T - I); 1^T]. Its (unique) solution with right-hand
// side e_n is the stationary law.
Matrix stationary_system(const Matrix& q) {
  const auto n = q.rows();
  Matrix a(n + 1, n);
  a.topRows(n) = q.transpose() - Matrix::Identity(n, n);
  a.row(n).setOnes();
  return a;
}

std::vector<int> bfs_levels(const Matrix& q, bool transpose) {
  const auto n = static_cast<int>(q.rows());
  std::vector<int> level(n, -1);
  std::queue<int> frontier;
  level[0] = 0;
  frontier.push(0);
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v = 0; v < n; ++v) {
      const double w = transpose ? q(v, u) : q(u, v);
      if (w > 0.0 && level[v] < 0) {
        level[v] = level[u] + 1;
        frontier.push(v);
      }
    }
  }
  return level;
}

}  // namespace

Support::Support(std::vector<double> values, double epsilon)
    : values_(std::move(values)), epsilon_(epsilon) {
  if (!(epsilon_ > 0.0 && epsilon_ < 0.5)) {
    throw InputError("ellipticity epsilon must lie in (0, 1/2)");
  }
  if (values_.empty()) throw InputError("support must not be empty");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double a = values_[i];
    if (!(a >= epsilon_ && a <= 1.0 - epsilon_)) {
      std::ostringstream msg;
      msg << "support value " << a << " violates ellipticity: not in [" << epsilon_ << ", "
          << 1.0 - epsilon_ << "]";
      throw ModelInvalidError(msg.str());
    }
    if (i > 0 && !(values_[i - 1] < a)) {
      throw InputError("support values must be strictly increasing");
    }
  }
}

void check_row_stochastic(const Matrix& q) {
  if (q.rows() == 0 || q.rows() != q.cols()) throw InputError("transition matrix must be square");
  if (!q.allFinite()) throw InputError("transition matrix has non-finite entries");
  if ((q.array() < 0.0).any()) throw InputError("transition matrix has negative entries");
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    if (std::abs(q.row(i).sum() - 1.0) > kRowSumTol) {
      throw InputError("row " + std::to_string(i) + " of the transition matrix does not sum to 1");
    }
  }
}

bool is_irreducible_aperiodic(const Matrix& q) {
  const auto forward = bfs_levels(q, false);
  const auto backward = bfs_levels(q, true);
  if (std::ranges::any_of(forward, [](int l) { return l < 0; }) ||
      std::ranges::any_of(backward, [](int l) { return l < 0; })) {
    return false;
  }
  // Period of a strongly connected graph: gcd over edges of level(u) + 1 - level(v).
  int period = 0;
  for (Eigen::Index u = 0; u < q.rows(); ++u) {
    for (Eigen::Index v = 0; v < q.cols(); ++v) {
      if (q(u, v) > 0.0) period = std::gcd(period, std::abs(forward[u] + 1 - forward[v]));
    }
  }
  return period == 1;
}

Vector stationary_distribution(const Matrix& q) {
  check_row_stochastic(q);
  if (!is_irreducible_aperiodic(q)) {
    throw ModelInvalidError("transition matrix is reducible or periodic");
  }
  const auto n = q.rows();
  const Matrix a = stationary_system(q);
  const auto qr = a.colPivHouseholderQr();
  Vector rhs = Vector::Zero(n + 1);
  rhs(n) = 1.0;
  Vector mu = qr.solve(rhs);
  for (int refine = 0; refine < 2; ++refine) {
    const Vector residual = rhs - a * mu;
    mu += qr.solve(residual);
  }
  mu = mu.cwiseMax(0.0);
  mu /= mu.sum();
  const double residual = (mu.transpose() * q - mu.transpose()).cwiseAbs().maxCoeff();
  if (!(residual <= kStationaryResidualTol)) {
    throw ModelInvalidError("stationary distribution is ill-conditioned (residual " +
                            std::to_string(residual) + ")");
  }
  return mu;
}

Matrix reversed_kernel(const EnvKernel& kernel) {
  const auto n = kernel.q.rows();
  if (kernel.mu.size() != n || !(kernel.mu.array() > 0.0).all()) {
    throw ModelInvalidError("time reversal requires a strictly positive stationary law");
  }
  Matrix rev(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) rev(i, j) = kernel.mu(j) * kernel.q(j, i) / kernel.mu(i);
    rev.row(i) /= rev.row(i).sum();
  }
  return rev;
}

EnvKernel make_kernel(Support support, Matrix q) {
  if (static_cast<std::size_t>(q.rows()) != support.size()) {
    throw InputError("transition matrix size does not match the support");
  }
  EnvKernel kernel{std::move(support), std::move(q), {}, {}};
  kernel.mu = stationary_distribution(kernel.q);
  kernel.q_rev = reversed_kernel(kernel);
  return kernel;
}

ModelDiagnostics diagnose(const EnvKernel& kernel) {
  bool iid = true;
  for (Eigen::Index i = 1; i < kernel.q.rows() && iid; ++i) {
    iid = (kernel.q.row(i) - kernel.q.row(0)).cwiseAbs().maxCoeff() <= kIidTol;
  }
  return diagnose(kernel, iid);
}

ModelDiagnostics diagnose(const EnvKernel& kernel, bool iid) {
  ModelDiagnostics d;
  for (std::size_t i = 0; i < kernel.size(); ++i) {
    const double tilde = kernel.support.tilde(i);
    d.e_log_tilde += kernel.mu(static_cast<Eigen::Index>(i)) * std::log(tilde);
    d.e_tilde += kernel.mu(static_cast<Eigen::Index>(i)) * tilde;
  }
  d.iid = iid;
  d.transient_right = d.e_log_tilde < 0.0;
  d.ballistic = iid ? d.e_tilde < 1.0 : d.transient_right;
  d.sigma_minus = kernel.q.minCoeff();
  d.sigma_plus = kernel.q.maxCoeff();
  return d;
}

// --- ParamSpace --------------------------------------------------------------

ParamSpace::ParamSpace(std::string name, Support support, Vector lower, Vector upper,
                       KernelBuilder builder, std::optional<KernelJacobian> jacobian,
                       std::vector<std::string> param_names)
    : name_(std::move(name)),
      support_(std::move(support)),
      lower_(std::move(lower)),
      upper_(std::move(upper)),
      builder_(std::move(builder)),
      jacobian_(std::move(jacobian)),
      param_names_(std::move(param_names)) {
  if (lower_.size() != upper_.size()) throw InputError("box bounds have different sizes");
  if (!(lower_.array() < upper_.array()).all()) {
    throw InputError("box bounds must satisfy lower < upper in every coordinate");
  }
  if (param_names_.empty()) {
    for (Eigen::Index k = 0; k < lower_.size(); ++k) param_names_.push_back("theta" + std::to_string(k));
  }
  if (param_names_.size() != dim()) throw InputError("parameter names do not match the dimension");
  if (!jacobian_) {
    warnings_.push_back("parameterization '" + name_ +
                        "' has no analytic derivative; using forward differences with step 1e-7");
  }
  (void)kernel(center());
}

bool ParamSpace::contains(const Vector& theta) const {
  return theta.size() == lower_.size() && (theta.array() >= lower_.array()).all() &&
         (theta.array() <= upper_.array()).all();
}

void ParamSpace::check(const Vector& theta) const {
  if (theta.size() != lower_.size()) {
    throw InputError("theta has " + std::to_string(theta.size()) + " coordinates, expected " +
                     std::to_string(dim()));
  }
  if (!theta.allFinite()) throw InputError("theta has non-finite coordinates");
  if (!contains(theta)) throw InputError("theta lies outside the parameter box");
}

Matrix ParamSpace::transition(const Vector& theta) const { return builder_(theta); }

EnvKernel ParamSpace::kernel(const Vector& theta) const {
  return make_kernel(support_, builder_(theta));
}

std::vector<Matrix> ParamSpace::transition_jacobian(const Vector& theta) const {
  if (jacobian_) return (*jacobian_)(theta);
  const Matrix base = builder_(theta);
  std::vector<Matrix> out;
  out.reserve(dim());
  for (std::size_t k = 0; k < dim(); ++k) {
    Vector shifted = theta;
    shifted(static_cast<Eigen::Index>(k)) += kJacobianStep;
    out.push_back((builder_(shifted) - base) / kJacobianStep);
  }
  return out;
}

ReversedKernelDerivatives ParamSpace::reversed_with_derivatives(const Vector& theta) const {
  ReversedKernelDerivatives out{kernel(theta), {}};
  const EnvKernel& k = out.kernel;
  const auto n = k.q.rows();
  const auto dq = transition_jacobian(theta);
  const auto qr = stationary_system(k.q).colPivHouseholderQr();
  out.dq_rev.reserve(dq.size());
  for (const Matrix& dqk : dq) {
    // d mu (q - I) = -mu dq, sum(d mu) = 0
    Vector rhs = Vector::Zero(n + 1);
    rhs.head(n) = -(k.mu.transpose() * dqk).transpose();
    const Vector dmu = qr.solve(rhs);
    Matrix drev(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double num = k.mu(j) * k.q(j, i);
        const double dnum = dmu(j) * k.q(j, i) + k.mu(j) * dqk(j, i);
        drev(i, j) = dnum / k.mu(i) - num * dmu(i) / (k.mu(i) * k.mu(i));
      }
    }
    out.dq_rev.push_back(std::move(drev));
  }
  return out;
}

// --- presets -----------------------------------------------------------------

ParamSpace preset_iid_two_values(double a1, double a2, double p_lower, double p_upper,
                                 double epsilon) {
  if (a1 == a2) {
    throw IdentifiabilityError("i.i.d. preset needs two distinct support values");
  }
  if (!(p_lower > 0.0 && p_upper < 1.0)) throw InputError("bounds on p must lie inside (0, 1)");
  // The support is ordered; p always weighs a1, wherever it lands.
  const bool swapped = a2 < a1;
  Support support(swapped ? std::vector<double>{a2, a1} : std::vector<double>{a1, a2}, epsilon);
  const Eigen::Index i1 = swapped ? 1 : 0;
  const Eigen::Index i2 = 1 - i1;
  auto builder = [i1, i2](const Vector& theta) {
    const double p = theta(0);
    Matrix q(2, 2);
    q(0, i1) = q(1, i1) = p;
    q(0, i2) = q(1, i2) = 1.0 - p;
    return q;
  };
  auto jacobian = [i1, i2](const Vector&) {
    Matrix d(2, 2);
    d(0, i1) = d(1, i1) = 1.0;
    d(0, i2) = d(1, i2) = -1.0;
    return std::vector<Matrix>{d};
  };
  return ParamSpace("iid_two_values", std::move(support), Vector::Constant(1, p_lower),
                    Vector::Constant(1, p_upper), builder, jacobian, {"p"});
}

ParamSpace preset_two_state_chain(double a1, double a2, const Vector& lower, const Vector& upper,
                                  double epsilon) {
  if (a1 == a2) {
    throw IdentifiabilityError("two-state chain needs two distinct support values");
  }
  if (!(a1 < a2)) throw InputError("two-state chain support must be given as a1 < a2");
  if (lower.size() != 2 || upper.size() != 2) throw InputError("two-state chain has two parameters");
  if (!((lower.array() > 0.0).all() && (upper.array() < 1.0).all())) {
    throw InputError("bounds on (alpha, beta) must lie inside (0, 1)");
  }
  auto builder = [](const Vector& theta) {
    Matrix q(2, 2);
    q << theta(0), 1.0 - theta(0), 1.0 - theta(1), theta(1);
    return q;
  };
  auto jacobian = [](const Vector&) {
    Matrix da(2, 2), db(2, 2);
    da << 1.0, -1.0, 0.0, 0.0;
    db << 0.0, 0.0, -1.0, 1.0;
    return std::vector<Matrix>{da, db};
  };
  return ParamSpace("two_state_chain", Support({a1, a2}, epsilon), lower, upper, builder, jacobian,
                    {"alpha", "beta"});
}

ParamSpace preset_row_weights(Support support, const Matrix& pattern, double weight_lower,
                              double weight_upper, std::string name) {
  const auto n = static_cast<Eigen::Index>(support.size());
  if (pattern.rows() != n || pattern.cols() != n) {
    throw InputError("transition pattern size does not match the support");
  }
  if (!(weight_lower > 0.0 && weight_lower < weight_upper)) {
    throw InputError("row weights need bounds 0 < lower < upper");
  }
  struct Entry {
    Eigen::Index row, col;
  };
  std::vector<Entry> free;
  std::vector<Eigen::Index> reference(n, -1);
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (pattern(i, j) != 0.0) reference[i] = j;
    }
    if (reference[i] < 0) throw InputError("row " + std::to_string(i) + " of the pattern is empty");
    for (Eigen::Index j = 0; j < reference[i]; ++j) {
      if (pattern(i, j) != 0.0) {
        free.push_back({i, j});
        names.push_back("w" + std::to_string(i) + "_" + std::to_string(j));
      }
    }
  }
  if (free.empty()) throw InputError("transition pattern leaves no free parameter");

  auto builder = [free, reference, n](const Vector& w) {
    Matrix q = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) q(i, reference[i]) = 1.0;
    for (std::size_t k = 0; k < free.size(); ++k) q(free[k].row, free[k].col) = w(static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < n; ++i) q.row(i) /= q.row(i).sum();
    return q;
  };
  auto jacobian = [free, reference, n, builder](const Vector& w) {
    const Matrix q = builder(w);
    Vector denom = Vector::Ones(n);
    for (std::size_t k = 0; k < free.size(); ++k) denom(free[k].row) += w(static_cast<Eigen::Index>(k));
    std::vector<Matrix> out;
    out.reserve(free.size());
    for (const auto& [row, col] : free) {
      Matrix d = Matrix::Zero(n, n);
      d.row(row) = -q.row(row) / denom(row);
      d(row, col) += 1.0 / denom(row);
      out.push_back(std::move(d));
    }
    return out;
  };
  const auto dim = static_cast<Eigen::Index>(free.size());
  return ParamSpace(std::move(name), std::move(support), Vector::Constant(dim, weight_lower),
                    Vector::Constant(dim, weight_upper), builder, jacobian, std::move(names));
}

DnaEnergyLevels dna_energy_levels(double beta, double g1) {
  if (!(beta > 0.0)) throw InputError("inverse temperature beta must be positive");
  std::vector<double> energies;
  for (const auto& row : kDnaBindingEnergy) energies.insert(energies.end(), std::begin(row), std::end(row));
  std::ranges::sort(energies);
  energies.erase(std::unique(energies.begin(), energies.end()), energies.end());
  // omega decreases with g0, so an increasing support lists energies high to low.
  std::ranges::reverse(energies);

  DnaEnergyLevels levels;
  levels.energies = energies;
  for (double g0 : energies) levels.omegas.push_back(1.0 / (1.0 + std::exp(beta * (g0 - g1))));

  const auto n = static_cast<Eigen::Index>(energies.size());
  auto level_of = [&](double g0) {
    return static_cast<Eigen::Index>(std::ranges::find(energies, g0) - energies.begin());
  };
  levels.pattern = Matrix::Zero(n, n);
  // (b0, b1) -> (b1, b2): consecutive dinucleotides share their middle base.
  for (int b0 = 0; b0 < 4; ++b0) {
    for (int b1 = 0; b1 < 4; ++b1) {
      for (int b2 = 0; b2 < 4; ++b2) {
        levels.pattern(level_of(kDnaBindingEnergy[b0][b1]), level_of(kDnaBindingEnergy[b1][b2])) = 1.0;
      }
    }
  }
  return levels;
}

ParamSpace preset_dna_unzipping(double beta, double g1, double weight_lower, double weight_upper,
                                double epsilon) {
  const auto levels = dna_energy_levels(beta, g1);
  for (std::size_t i = 1; i < levels.omegas.size(); ++i) {
    if (!(levels.omegas[i - 1] < levels.omegas[i])) {
      throw ModelInvalidError("binding energies map to coinciding environment states");
    }
  }
  return preset_row_weights(Support(levels.omegas, epsilon), levels.pattern, weight_lower,
                            weight_upper, "dna_unzipping");
}

}  // namespace rwre
