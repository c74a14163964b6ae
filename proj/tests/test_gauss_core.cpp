#include "inforesp/errors.hpp"
#include "inforesp/gauss_core.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace inforesp;

namespace {

LinearModel model15() { return hierarchical_ou({}); }

}  // namespace

TEST(Lyapunov, UnivariateClosedForm) {
  for (double a : {0.05, 0.3, 1.0, 7.5})
    for (double q : {0.01, 0.1, 2.0}) {
      const Matrix S = solve_lyapunov(LinearModel::univariate(a, q));
      EXPECT_NEAR(S(0, 0), q / (2.0 * a), 1e-14 * q / a);
    }
}

TEST(Lyapunov, HierarchicalModelEntries) {
  oracle::HierarchicalOu o;
  const Matrix S = solve_lyapunov(model15());
  EXPECT_NEAR(S(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(S(0, 1), 0.5 / 0.6, 1e-12);
  EXPECT_NEAR(S(1, 1), 2.5 * 0.5 / 0.6, 1e-12);
  EXPECT_NEAR(S(1, 0), o.sxy(), 1e-12);
  EXPECT_NEAR(S(1, 1), o.syy(), 1e-12);
}

TEST(Lyapunov, ResidualOnRandomModels) {
  for (const auto& m : oracle::random_models(40, 7)) {
    const Matrix S = solve_lyapunov(m.A, m.Q);
    const Matrix r = m.A * S + S * m.A.transpose() - m.Q;
    EXPECT_LT(r.norm(), 1e-11 * (1.0 + m.Q.norm()));
    EXPECT_LT((S - S.transpose()).norm(), 1e-12 * S.norm());
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Matrix>(S).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(Lyapunov, MatchesRelaxationEquilibrium) {
  // Integrating the covariance ODE is an independent route to the same fixed point.
  const LinearModel m = model15();
  const Matrix ref = oracle::lyapunov_by_relaxation(m.A, m.Q, 400.0, 0.01);
  EXPECT_LT((solve_lyapunov(m) - ref).norm(), 1e-8);
}

TEST(Matexp, AgreesWithTaylorSeries) {
  for (const auto& m : oracle::random_models(20, 11))
    for (double t : {0.01, 0.7, 4.0}) {
      const Matrix M = -m.A * t;
      const Matrix e = matexp(M), ref = oracle::taylor_exp(M);
      EXPECT_LT((e - ref).norm(), 1e-11 * (1.0 + ref.norm()));
    }
}

TEST(Matexp, DiagonalAndNilpotent) {
  Matrix D = Matrix::Zero(3, 3);
  D.diagonal() << -1.0, 0.5, 2.0;
  const Matrix e = matexp(D);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(e(i, i), std::exp(D(i, i)), 1e-13 * std::exp(D(i, i)));
  Matrix N = Matrix::Zero(2, 2);
  N(0, 1) = 3.0;
  const Matrix en = matexp(N);
  EXPECT_NEAR(en(0, 1), 3.0, 1e-14);
  EXPECT_NEAR(en(0, 0), 1.0, 1e-14);
}

TEST(LaggedJoint, CrossCovarianceIsPropagatorTimesStationary) {
  oracle::HierarchicalOu o;
  const LinearModel m = model15();
  for (double tau : {0.0, 0.5, 3.0, 25.0}) {
    const LaggedJoint lj = lagged_joint(m, tau);
    const Matrix P = oracle::taylor_exp(-m.A * tau);
    const Matrix S = solve_lyapunov(m);
    EXPECT_LT((lj.cross() - P * S).norm(), 1e-12);
    EXPECT_LT((lj.stationary() - S).norm(), 1e-12);
    EXPECT_NEAR(lj.cross()(1, 1), o.cov_yy(tau), 1e-12);
    EXPECT_NEAR(lj.joint.cov(lj.at_tau(1), lj.at_tau(1)), o.syy(), 1e-12);
  }
}

TEST(LaggedJoint, ZeroLagIsDegenerateCopy) {
  const LaggedJoint lj = lagged_joint(model15(), 0.0);
  EXPECT_LT((lj.cross() - lj.stationary()).norm(), 1e-14);
}

TEST(LaggedJoint, NegativeLagRejected) { EXPECT_THROW(lagged_joint(model15(), -1.0), DomainError); }

TEST(Condition, BivariateFormulas) {
  GaussianDist g{Vector(2), Matrix(2, 2)};
  g.mean << 1.0, -2.0;
  g.cov << 2.0, 0.6, 0.6, 0.5;
  const auto c = condition(g, {0}, {1});
  EXPECT_NEAR(c.coeff(0, 0), 0.6 / 0.5, 1e-15);
  EXPECT_NEAR(c.residual(0, 0), 2.0 - 0.36 / 0.5, 1e-14);
  Vector y(1);
  y << 0.0;
  EXPECT_NEAR(c.conditional_mean(y)(0), 1.0 + 1.2 * 2.0, 1e-14);
}

TEST(Condition, SingularBlockIsDegenerate) {
  GaussianDist g{Vector::Zero(3), Matrix::Identity(3, 3)};
  g.cov(1, 1) = 1.0;
  g.cov(2, 2) = 1.0;
  g.cov(1, 2) = g.cov(2, 1) = 1.0;
  EXPECT_THROW(condition(g, {0}, {1, 2}), DegeneracyError);
}

TEST(GaussianKl, AgreesWithQuadrature) {
  const double m1 = 0.3, v1 = 0.7, m2 = -0.4, v2 = 1.9;
  GaussianDist p{Vector::Constant(1, m1), Matrix::Constant(1, 1, v1)};
  GaussianDist q{Vector::Constant(1, m2), Matrix::Constant(1, 1, v2)};
  const double ref = oracle::kl_quadrature([&](double x) { return oracle::normal_pdf(x, m1, v1); },
                                           [&](double x) { return oracle::normal_pdf(x, m2, v2); }, -15, 15);
  EXPECT_NEAR(gaussian_kl(p, q), ref, 1e-8);
  EXPECT_NEAR(gaussian_kl(p, p), 0.0, 1e-15);
}

TEST(GaussianKl, NonNegativeOnRandomPairs) {
  const auto ms = oracle::random_models(30, 3);
  for (std::size_t i = 0; i + 1 < ms.size(); ++i) {
    if (ms[i].A.rows() != ms[i + 1].A.rows()) continue;
    const Index n = ms[i].A.rows();
    GaussianDist p{Vector::Zero(n), ms[i].Q}, q{Vector::Ones(n), ms[i + 1].Q};
    EXPECT_GE(gaussian_kl(p, q), 0.0);
  }
}

TEST(GaussianKl, NonPositiveDefiniteRejected) {
  GaussianDist p{Vector::Zero(2), Matrix::Identity(2, 2)};
  GaussianDist q{Vector::Zero(2), Matrix::Zero(2, 2)};
  q.cov(0, 0) = 1.0;
  EXPECT_THROW(gaussian_kl(p, q), DegeneracyError);
}

TEST(GaussianDist, LogDensityMatchesFormula) {
  GaussianDist g{Vector::Constant(1, 0.5), Matrix::Constant(1, 1, 2.0)};
  Vector x = Vector::Constant(1, 1.7);
  EXPECT_NEAR(g.log_density(x), std::log(oracle::normal_pdf(1.7, 0.5, 2.0)), 1e-13);
}

TEST(ModelValidation, RejectsBadInput) {
  Matrix A = Matrix::Identity(2, 2), Q = Matrix::Identity(2, 2);
  EXPECT_THROW(LinearModel::make(Matrix::Identity(2, 3), Q), DomainError);
  Matrix Qa = Q;
  Qa(0, 1) = 0.5;
  EXPECT_THROW(LinearModel::make(A, Qa), DomainError);
  Matrix Qn = Q;
  Qn(1, 1) = -1.0;
  EXPECT_THROW(LinearModel::make(A, Qn), DomainError);
  Matrix Au = A;
  Au(1, 1) = -0.1;
  EXPECT_THROW(LinearModel::make(Au, Q), StabilityError);
  Matrix Az = A;
  Az(0, 0) = 0.0;
  EXPECT_THROW(LinearModel::make(Az, Q), StabilityError);
  EXPECT_THROW(LinearModel::make(A, Q, 0, 0), DomainError);
  EXPECT_THROW(LinearModel::make(A, Q, 0, 5), DomainError);
}

TEST(ModelValidation, ConfoundersAreComplement) {
  Matrix A = Matrix::Identity(4, 4), Q = Matrix::Identity(4, 4);
  const LinearModel m = LinearModel::make(A, Q, 2, 0);
  ASSERT_EQ(m.z_indices.size(), 2u);
  EXPECT_EQ(m.z_indices[0], 1);
  EXPECT_EQ(m.z_indices[1], 3);
  const IndexList yz = m.y_and_confounders();
  EXPECT_EQ(yz.front(), 0);
}

TEST(Fisher, RatioEqualsRegressionGamma) {
  oracle::HierarchicalOu o;
  for (double tau : {0.5, 3.0, 20.0}) {
    const FisherTerms f = fisher_terms(model15(), tau);
    EXPECT_LT(f.numerator, 0.0);
    EXPECT_LT(f.denominator, 0.0);
    EXPECT_NEAR(f.ratio(), o.gamma(tau), 1e-10 * (1.0 + o.gamma(tau)));
  }
  EXPECT_THROW(fisher_terms(model15(), 0.0), DomainError);
}

TEST(EnforcePsd, SymmetrizesAndRejects) {
  Matrix S(2, 2);
  S << 1.0, 0.2, 0.2 + 1e-15, 1.0;
  enforce_psd(S, 1e-10, "test");
  EXPECT_EQ(S(0, 1), S(1, 0));
  Matrix B(2, 2);
  B << 1.0, 0.0, 0.0, -0.5;
  EXPECT_THROW(enforce_psd(B, 1e-10, "test"), NumericalError);
}
