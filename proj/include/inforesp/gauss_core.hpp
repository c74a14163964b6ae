#pragma once

// Exact linear-Gaussian machinery for Ornstein-Uhlenbeck processes
//   dxi/dt = -A xi + eta,   <eta_t eta_t'^T> = Q delta(t - t').

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace inforesp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using IndexList = std::vector<Index>;

inline constexpr Index kNoIndex = -1;

/// Parameters of the two-variable hierarchical models (linear and quadratic coupling).
struct OuParams {
  double t_relax = 10.0;  ///< relaxation time of the driving variable x
  double q = 0.1;         ///< noise intensity on x (aliased as D in some figure captions)
  double alpha = 0.5;     ///< coupling strength x -> y
  double beta = 0.2;      ///< relaxation rate of y
};

/// Linear model: interaction matrix A, noise covariance Q and the (x, y, z) index roles.
struct LinearModel {
  Matrix A;
  Matrix Q;
  Index x_index = 0;
  Index y_index = 1;      ///< kNoIndex for univariate models
  IndexList z_indices;

  Index dim() const { return A.rows(); }
  bool has_y() const { return y_index != kNoIndex; }

  /// Builds a model, deriving z as the complement of {x, y}; throws on invalid input.
  static LinearModel make(Matrix A, Matrix Q, Index x_index = 0, Index y_index = 1);
  /// One-dimensional OU process dx/dt = -a x + eta with noise intensity q.
  static LinearModel univariate(double a, double q);

  /// Checks shape, Q symmetry/PSD, Hurwitz stability and the index partition.
  void validate() const;
  /// Conditioning set for the y target: {y} followed by z.
  IndexList y_and_confounders() const;
  /// Smallest real part among the eigenvalues of A.
  double slowest_rate() const;
  double fastest_rate() const;
};

/// dx/dt = -x/t_R + eta, dy/dt = alpha x - beta y.
LinearModel hierarchical_ou(const OuParams& p = {});

struct GaussianDist {
  Vector mean;
  Matrix cov;

  Index dim() const { return mean.size(); }
  void validate() const;
  /// Marginal over the given indices (in order).
  GaussianDist marginal(const IndexList& indices) const;
  double log_density(const Vector& point) const;
};

/// Joint law of the stacked vector (xi_0, xi_tau).
struct LaggedJoint {
  double lag = 0.0;
  GaussianDist joint;

  Index n() const { return joint.dim() / 2; }
  /// Joint index of component i at time 0 / time tau.
  Index at0(Index i) const { return i; }
  Index at_tau(Index i) const { return n() + i; }
  Matrix stationary() const { return joint.cov.topLeftCorner(n(), n()); }
  /// Cov(xi_tau, xi_0).
  Matrix cross() const { return joint.cov.bottomLeftCorner(n(), n()); }
};

/// target = B * given + residual, residual ~ N(0, R), for jointly Gaussian inputs.
struct ConditionalGaussianSpec {
  IndexList target;
  IndexList given;
  Matrix coeff;      ///< B, |target| x |given|
  Matrix residual;   ///< R, |target| x |target|
  Vector target_mean;
  Vector given_mean;

  Vector conditional_mean(const Vector& given_value) const;
};

/// Solves A S + S A^T = Q by Kronecker vectorization (n <= 20).
Matrix solve_lyapunov(const Matrix& A, const Matrix& Q);
Matrix solve_lyapunov(const LinearModel& model);

/// Matrix exponential by scaling and squaring with Pade approximants.
Matrix matexp(const Matrix& M);

/// Stationary joint law of (xi_0, xi_tau); tau must be >= 0.
LaggedJoint lagged_joint(const LinearModel& model, double tau);

/// Conditional law of joint[target] given joint[given].
ConditionalGaussianSpec condition(const GaussianDist& joint, const IndexList& target,
                                  const IndexList& given);

/// KL[p || q] in nats.
double gaussian_kl(const GaussianDist& p, const GaussianDist& q);

struct FisherTerms {
  double numerator = 0.0;    ///< <d^2/dx0^2 ln p(y_tau | x0, y0, z0)>
  double denominator = 0.0;  ///< <d^2/dx0^2 ln p(x0 | y0, z0)>
  double ratio() const { return numerator / denominator; }
};

FisherTerms fisher_terms(const LinearModel& model, double tau);

/// Symmetrizes in place and rejects matrices whose smallest eigenvalue is below -tol * trace.
void enforce_psd(Matrix& S, double rel_tol, const char* what);

}  // namespace inforesp
