#include "inforesp/gauss_core.hpp"

#include "inforesp/errors.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace inforesp {

namespace {

std::string index_list_string(const IndexList& idx) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < idx.size(); ++i) os << (i ? "," : "") << idx[i];
  os << '}';
  return os.str();
}

Matrix select(const Matrix& M, const IndexList& rows, const IndexList& cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(Index(i), Index(j)) = M(rows[i], cols[j]);
  return out;
}

Vector select(const Vector& v, const IndexList& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(Index(i)) = v(idx[i]);
  return out;
}

void check_indices(const IndexList& idx, Index n, const char* role) {
  for (Index i : idx)
    if (i < 0 || i >= n)
      throw DomainError(std::string(role) + " index " + std::to_string(i) + " out of range for dimension " +
                        std::to_string(n));
}

}  // namespace

void enforce_psd(Matrix& S, double rel_tol, const char* what) {
  S = 0.5 * (S + S.transpose()).eval();
  const double scale = std::max(std::abs(S.trace()), 1e-300);
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  if (lo < -rel_tol * scale) {
    std::ostringstream os;
    os << what << " is not positive semidefinite (min eigenvalue " << lo << ", trace " << S.trace() << ")";
    throw NumericalError(os.str());
  }
}

// ---------------------------------------------------------------------------
// LinearModel

LinearModel LinearModel::make(Matrix A, Matrix Q, Index x_index, Index y_index) {
  LinearModel m;
  m.A = std::move(A);
  m.Q = std::move(Q);
  m.x_index = x_index;
  m.y_index = y_index;
  for (Index i = 0; i < m.A.rows(); ++i)
    if (i != x_index && i != y_index) m.z_indices.push_back(i);
  m.validate();
  return m;
}

LinearModel LinearModel::univariate(double a, double q) {
  Matrix A(1, 1), Q(1, 1);
  A(0, 0) = a;
  Q(0, 0) = q;
  return make(std::move(A), std::move(Q), 0, kNoIndex);
}

void LinearModel::validate() const {
  const Index n = A.rows();
  if (n == 0 || A.cols() != n) throw DomainError("interaction matrix A must be square and non-empty");
  if (Q.rows() != n || Q.cols() != n) throw DomainError("noise covariance Q must match the dimension of A");
  if (!A.allFinite() || !Q.allFinite()) throw DomainError("A and Q must have finite entries");
  const double qscale = std::max(Q.cwiseAbs().maxCoeff(), 1e-300);
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * qscale) throw DomainError("Q must be symmetric");
  {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (Q + Q.transpose()), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12 * std::max(std::abs(Q.trace()), 1e-300))
      throw DomainError("Q must be positive semidefinite");
  }
  if (x_index < 0 || x_index >= n) throw DomainError("x_index out of range");
  if (y_index != kNoIndex) {
    if (y_index < 0 || y_index >= n) throw DomainError("y_index out of range");
    if (y_index == x_index) throw DomainError("x_index and y_index must differ");
  }
  std::vector<int> seen(static_cast<std::size_t>(n), 0);
  seen[std::size_t(x_index)]++;
  if (y_index != kNoIndex) seen[std::size_t(y_index)]++;
  for (Index z : z_indices) {
    if (z < 0 || z >= n) throw DomainError("z index out of range");
    seen[std::size_t(z)]++;
  }
  for (int s : seen)
    if (s != 1) throw DomainError("x, y and z indices must partition {0,...,n-1}");

  Eigen::EigenSolver<Matrix> es(A, false);
  const double min_re = es.eigenvalues().real().minCoeff();
  if (!(min_re > 0.0)) {
    std::ostringstream os;
    os << "interaction matrix is not stable: eigenvalue with real part " << min_re
       << " (all eigenvalues of A need positive real part)";
    throw StabilityError(os.str());
  }
}

IndexList LinearModel::y_and_confounders() const {
  IndexList out;
  if (has_y()) out.push_back(y_index);
  out.insert(out.end(), z_indices.begin(), z_indices.end());
  return out;
}

double LinearModel::slowest_rate() const {
  Eigen::EigenSolver<Matrix> es(A, false);
  return es.eigenvalues().real().minCoeff();
}

double LinearModel::fastest_rate() const {
  Eigen::EigenSolver<Matrix> es(A, false);
  return es.eigenvalues().real().maxCoeff();
}

LinearModel hierarchical_ou(const OuParams& p) {
  if (!(p.t_relax > 0) || !(p.q > 0) || !(p.beta > 0))
    throw DomainError("hierarchical OU needs t_relax > 0, q > 0, beta > 0");
  Matrix A(2, 2), Q = Matrix::Zero(2, 2);
  A << 1.0 / p.t_relax, 0.0, -p.alpha, p.beta;
  Q(0, 0) = p.q;
  return LinearModel::make(std::move(A), std::move(Q), 0, 1);
}

// ---------------------------------------------------------------------------
// GaussianDist

void GaussianDist::validate() const {
  if (cov.rows() != mean.size() || cov.cols() != mean.size())
    throw DomainError("Gaussian covariance shape does not match mean");
  const double scale = std::max(cov.cwiseAbs().maxCoeff(), 1e-300);
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw DomainError("Gaussian covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-12 * std::max(std::abs(cov.trace()), 1e-300))
    throw DomainError("Gaussian covariance is not positive semidefinite");
}

GaussianDist GaussianDist::marginal(const IndexList& indices) const {
  check_indices(indices, dim(), "marginal");
  return {select(mean, indices), select(cov, indices, indices)};
}

double GaussianDist::log_density(const Vector& point) const {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw DegeneracyError("log_density: covariance is singular");
  const Vector r = point - mean;
  const Vector w = llt.matrixL().solve(r);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (w.squaredNorm() + logdet + double(dim()) * std::log(2.0 * std::numbers::pi));
}

Vector ConditionalGaussianSpec::conditional_mean(const Vector& given_value) const {
  return target_mean + coeff * (given_value - given_mean);
}

// ---------------------------------------------------------------------------
// Core operations

Matrix solve_lyapunov(const Matrix& A, const Matrix& Q) {
  const Index n = A.rows();
  if (A.cols() != n || Q.rows() != n || Q.cols() != n) throw DomainError("solve_lyapunov: shape mismatch");
  if (n > 20) throw DomainError("solve_lyapunov: vectorized solver limited to n <= 20");
  {
    Eigen::EigenSolver<Matrix> es(A, false);
    const double min_re = es.eigenvalues().real().minCoeff();
    if (!(min_re > 0.0)) {
      std::ostringstream os;
      os << "solve_lyapunov: A is not stable (eigenvalue real part " << min_re << ")";
      throw StabilityError(os.str());
    }
  }
  const Matrix I = Matrix::Identity(n, n);
  // vec(A S) = (I kron A) vec(S), vec(S A^T) = (A kron I) vec(S) for column-major vec.
  Matrix K(n * n, n * n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) K.block(i * n, j * n, n, n) = I(i, j) * A + A(i, j) * I;
  Eigen::PartialPivLU<Matrix> lu(K);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14)) {
    std::ostringstream os;
    os << "solve_lyapunov: Kronecker system is singular (reciprocal condition " << rcond << ")";
    throw NumericalError(os.str());
  }
  const Vector q = Eigen::Map<const Vector>(Q.data(), n * n);
  Vector s = lu.solve(q);
  Matrix S = Eigen::Map<Matrix>(s.data(), n, n);
  enforce_psd(S, 1e-10, "stationary covariance");
  return S;
}

Matrix solve_lyapunov(const LinearModel& model) {
  model.validate();
  return solve_lyapunov(model.A, model.Q);
}

Matrix matexp(const Matrix& M) {
  if (M.rows() != M.cols()) throw DomainError("matexp: matrix must be square");
  if (!M.allFinite()) throw DomainError("matexp: entries must be finite");
  return M.exp();
}

LaggedJoint lagged_joint(const LinearModel& model, double tau) {
  if (!(tau >= 0.0)) throw DomainError("lagged_joint: lag must be >= 0 (past lags are handled by the measures)");
  const Matrix S = solve_lyapunov(model);
  const Index n = model.dim();
  const Matrix C = matexp(-model.A * tau) * S;  // Cov(xi_tau, xi_0)
  LaggedJoint lj;
  lj.lag = tau;
  lj.joint.mean = Vector::Zero(2 * n);
  lj.joint.cov.resize(2 * n, 2 * n);
  lj.joint.cov.topLeftCorner(n, n) = S;
  lj.joint.cov.bottomRightCorner(n, n) = S;
  lj.joint.cov.bottomLeftCorner(n, n) = C;
  lj.joint.cov.topRightCorner(n, n) = C.transpose();
  return lj;
}

ConditionalGaussianSpec condition(const GaussianDist& joint, const IndexList& target, const IndexList& given) {
  const Index n = joint.dim();
  check_indices(target, n, "target");
  check_indices(given, n, "given");
  if (target.empty()) throw DomainError("condition: empty target set");
  for (Index t : target)
    if (std::find(given.begin(), given.end(), t) != given.end())
      throw DomainError("condition: target and given index sets must be disjoint");

  ConditionalGaussianSpec out;
  out.target = target;
  out.given = given;
  out.target_mean = select(joint.mean, target);
  out.given_mean = select(joint.mean, given);
  const Matrix Stt = select(joint.cov, target, target);
  if (given.empty()) {
    out.coeff = Matrix::Zero(Index(target.size()), 0);
    out.residual = Stt;
    return out;
  }
  const Matrix Sgg = select(joint.cov, given, given);
  const Matrix Stg = select(joint.cov, target, given);

  Eigen::SelfAdjointEigenSolver<Matrix> es(Sgg);
  const double scale = std::max(std::abs(Sgg.trace()), 1e-300);
  if (es.eigenvalues()(0) <= 1e-12 * scale) {
    const Vector null = es.eigenvectors().col(0);
    IndexList offending;
    for (Index i = 0; i < null.size(); ++i)
      if (std::abs(null(i)) > 0.1) offending.push_back(given[std::size_t(i)]);
    throw DegeneracyError("condition: conditioning block is singular; offending indices " +
                          index_list_string(offending));
  }
  Eigen::LDLT<Matrix> ldlt(Sgg);
  out.coeff = ldlt.solve(Stg.transpose()).transpose();
  Matrix R = Stt - out.coeff * Stg.transpose();
  R = 0.5 * (R + R.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> er(R, Eigen::EigenvaluesOnly);
  if (er.eigenvalues().minCoeff() < -1e-10 * std::max(std::abs(Stt.trace()), 1e-300))
    throw NumericalError("condition: residual covariance is not positive semidefinite");
  out.residual = std::move(R);
  return out;
}

double gaussian_kl(const GaussianDist& p, const GaussianDist& q) {
  if (p.dim() != q.dim()) throw DomainError("gaussian_kl: dimension mismatch");
  p.validate();
  q.validate();
  Eigen::LLT<Matrix> lp(p.cov), lq(q.cov);
  if (lp.info() != Eigen::Success || lq.info() != Eigen::Success)
    throw DegeneracyError("gaussian_kl: covariance is not strictly positive definite");
  const Matrix Lp = lp.matrixL();
  const Matrix Lq = lq.matrixL();
  if (Lp.diagonal().minCoeff() <= 0.0 || Lq.diagonal().minCoeff() <= 0.0)
    throw DegeneracyError("gaussian_kl: covariance is not strictly positive definite");
  const Index k = p.dim();
  // tr(Sq^-1 Sp) = ||Lq^-1 Lp||_F^2
  const Matrix W = lq.matrixL().solve(Lp);
  const Vector dm = lq.matrixL().solve(q.mean - p.mean);
  const double logdet_p = 2.0 * Lp.diagonal().array().log().sum();
  const double logdet_q = 2.0 * Lq.diagonal().array().log().sum();
  const double kl = 0.5 * (W.squaredNorm() + dm.squaredNorm() - double(k) + logdet_q - logdet_p);
  return std::max(kl, 0.0);
}

FisherTerms fisher_terms(const LinearModel& model, double tau) {
  if (!(tau > 0.0)) throw DomainError("fisher_terms: tau must be > 0");
  if (!model.has_y()) throw DomainError("fisher_terms: model needs a y variable");
  const LaggedJoint lj = lagged_joint(model, tau);
  const Index n = model.dim();
  IndexList given_full{lj.at0(model.x_index)};
  IndexList given_yz;
  for (Index i : model.y_and_confounders()) {
    given_full.push_back(lj.at0(i));
    given_yz.push_back(lj.at0(i));
  }
  const auto full = condition(lj.joint, {lj.at_tau(model.y_index)}, given_full);
  const auto xcond = condition(lj.joint, {lj.at0(model.x_index)}, given_yz);
  const double resid_y = full.residual(0, 0);
  const double resid_x = xcond.residual(0, 0);
  const double scale_y = lj.joint.cov(n + model.y_index, n + model.y_index);
  if (!(resid_y > 1e-14 * scale_y))
    throw DegeneracyError("fisher_terms: p(y_tau | x0, y0, z0) has zero variance");
  if (!(resid_x > 1e-14 * lj.joint.cov(model.x_index, model.x_index)))
    throw DegeneracyError("fisher_terms: p(x0 | y0, z0) has zero variance");
  const double b = full.coeff(0, 0);
  return {-(b * b) / resid_y, -1.0 / resid_x};
}

}  // namespace inforesp
