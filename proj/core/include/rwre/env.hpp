#pragma once

// Finite-state Markov environments: supports, kernels, parameter spaces,
// model presets and the transience / ballisticity diagnostics.

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rwre {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kDefaultEpsilon = 0.05;

// Ordered environment states a_i in [epsilon, 1 - epsilon]; a_i is the
// probability of stepping right from a site in state i.
class Support {
 public:
  Support(std::vector<double> values, double epsilon = kDefaultEpsilon);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const noexcept { return values_; }
  double epsilon() const noexcept { return epsilon_; }

  // (1 - a) / a
  double tilde(std::size_t i) const { return (1.0 - values_[i]) / values_[i]; }

 private:
  std::vector<double> values_;
  double epsilon_;
};

// A validated environment kernel with its stationary law and time reversal.
struct EnvKernel {
  Support support;
  Matrix q;      // q(i, j) = P(omega_{x+1} = a_j | omega_x = a_i)
  Vector mu;     // stationary law of q
  Matrix q_rev;  // q_rev(i, j) = mu_j q(j, i) / mu_i

  std::size_t size() const noexcept { return support.size(); }
};

// Builds an EnvKernel from a transition matrix; throws InputError on shape or
// stochasticity problems and ModelInvalidError on reducible/periodic chains.
EnvKernel make_kernel(Support support, Matrix q);

// Unique mu with mu q = mu, sum(mu) = 1, from the linear system (q^T - I) mu = 0
// with the normalization row appended.
Vector stationary_distribution(const Matrix& q);

Matrix reversed_kernel(const EnvKernel& kernel);

// Row sums within 1e-12 and nonnegative entries; throws InputError otherwise.
void check_row_stochastic(const Matrix& q);

// True when the transition graph is strongly connected and has period 1.
bool is_irreducible_aperiodic(const Matrix& q);

struct ModelDiagnostics {
  double e_log_tilde = 0.0;  // E_mu log((1 - a) / a)
  double e_tilde = 0.0;      // E_mu (1 - a) / a
  bool iid = false;
  bool transient_right = false;
  bool ballistic = false;
  double sigma_minus = 0.0;  // smallest entry of q
  double sigma_plus = 0.0;   // largest entry of q
};

// iid is decided from the kernel: all rows equal within 1e-12.
ModelDiagnostics diagnose(const EnvKernel& kernel);
// Same, with the caller asserting whether the environment is i.i.d.
ModelDiagnostics diagnose(const EnvKernel& kernel, bool iid);

// Theta -> transition matrix, and Theta -> d q / d theta_k (one matrix per
// coordinate).
using KernelBuilder = std::function<Matrix(const Vector&)>;
using KernelJacobian = std::function<std::vector<Matrix>(const Vector&)>;

struct ReversedKernelDerivatives {
  EnvKernel kernel;
  std::vector<Matrix> dq_rev;  // d q_rev / d theta_k
};

// Compact box of parameters with a map to environment kernels.
class ParamSpace {
 public:
  // Without a jacobian, derivatives of q are taken by forward differences with
  // step 1e-7 and a warning is recorded.
  ParamSpace(std::string name, Support support, Vector lower, Vector upper,
             KernelBuilder builder, std::optional<KernelJacobian> jacobian = std::nullopt,
             std::vector<std::string> param_names = {});

  const std::string& name() const noexcept { return name_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(lower_.size()); }
  const Support& support() const noexcept { return support_; }
  const Vector& lower() const noexcept { return lower_; }
  const Vector& upper() const noexcept { return upper_; }
  Vector center() const { return 0.5 * (lower_ + upper_); }
  const std::vector<std::string>& param_names() const noexcept { return param_names_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  bool has_analytic_jacobian() const noexcept { return jacobian_.has_value(); }

  bool contains(const Vector& theta) const;
  // Throws InputError if theta has the wrong size or leaves the box.
  void check(const Vector& theta) const;

  // Kernel at theta. Does not enforce the box, so that finite differences may
  // step slightly outside it.
  EnvKernel kernel(const Vector& theta) const;
  Matrix transition(const Vector& theta) const;
  std::vector<Matrix> transition_jacobian(const Vector& theta) const;

  // Kernel at theta together with d q_rev / d theta, obtained by propagating
  // d q through the stationary law and the time-reversal identity.
  ReversedKernelDerivatives reversed_with_derivatives(const Vector& theta) const;

 private:
  std::string name_;
  Support support_;
  Vector lower_;
  Vector upper_;
  KernelBuilder builder_;
  std::optional<KernelJacobian> jacobian_;
  std::vector<std::string> param_names_;
  std::vector<std::string> warnings_;
};

// --- presets ---------------------------------------------------------------

// theta = p: i.i.d. environment taking a1 with probability p, a2 otherwise.
ParamSpace preset_iid_two_values(double a1, double a2, double p_lower, double p_upper,
                                 double epsilon = kDefaultEpsilon);

// theta = (alpha, beta): q = [[alpha, 1 - alpha], [1 - beta, beta]].
ParamSpace preset_two_state_chain(double a1, double a2, const Vector& lower, const Vector& upper,
                                  double epsilon = kDefaultEpsilon);

// Generic finite kernel parameterized by positive row weights. In every row the
// last allowed entry is the reference with weight 1; the other allowed entries
// carry one free weight each, and the row is divided by its total. pattern(i, j)
// != 0 marks an allowed transition. Bounds are shared by all weights.
ParamSpace preset_row_weights(Support support, const Matrix& pattern, double weight_lower,
                              double weight_upper, std::string name = "row_weights");

// DNA unzipping: the ten distinct dinucleotide binding energies, mapped to
// omega = 1 / (1 + exp(beta (g0 - g1))), with transitions allowed only between
// energies of dinucleotides that overlap on their shared base.
struct DnaEnergyLevels {
  std::vector<double> energies;  // g0 per support state, ordered like the support
  std::vector<double> omegas;    // increasing
  Matrix pattern;                // structural transition pattern (0/1)
};
DnaEnergyLevels dna_energy_levels(double beta, double g1);
ParamSpace preset_dna_unzipping(double beta, double g1, double weight_lower = 0.05,
                                double weight_upper = 20.0, double epsilon = kDefaultEpsilon);

// Binding free energies g0(first base, second base) in k_B T, bases ordered
// A, T, C, G.
inline constexpr double kDnaBindingEnergy[4][4] = {
    {1.78, 1.55, 2.52, 2.22},
    {1.06, 1.78, 2.28, 2.54},
    {2.54, 2.22, 3.14, 3.85},
    {2.28, 2.52, 3.90, 3.14},
};

}  // namespace rwre
