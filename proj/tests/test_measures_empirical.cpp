#include "inforesp/errors.hpp"
#include "inforesp/measures_empirical.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace inforesp;

namespace {

EmpiricalConfig small_config(std::uint64_t seed = 11) {
  EmpiricalConfig cfg;
  cfg.sim.seed = seed;
  cfg.pool_size = 100000;
  cfg.n_conditions = 32;
  cfg.conditional_trajectories = 5000;
  return cfg;
}

// Exact stationary draws stand in for the Euler pool on linear models.
Ensemble exact_pool(const LinearModel& m, std::size_t n, std::vector<double> lags, std::uint64_t seed) {
  SimConfig cfg;
  cfg.n_trajectories = n;
  cfg.record_lags = std::move(lags);
  cfg.seed = seed;
  return simulate_stationary_exact(m, cfg);
}

LinearModel uncoupled_with_noise() {
  Matrix A(2, 2), Q = Matrix::Identity(2, 2) * 0.1;
  A << 0.1, 0.0, 0.0, 0.2;
  return LinearModel::make(A, Q);
}

double z_score(double a, double b, double se) { return std::abs(a - b) / se; }

}  // namespace

TEST(FitLadder, ExactQuadratic) {
  const std::vector<double> eps{0.1, 0.2, 0.3, 0.4}, se{0.01, 0.01, 0.02, 0.02};
  std::vector<double> y;
  for (double e : eps) y.push_back(3.0 * e * e);
  const LadderFit f = fit_ladder(eps, y, se);
  EXPECT_NEAR(f.coeff, 3.0, 1e-12);
  EXPECT_NEAR(f.lower_coeff, 0.0, 1e-10);
  EXPECT_NEAR(f.reduced_chi2, 0.0, 1e-20);
}

TEST(FitLadder, MatchesWeightedLeastSquares) {
  const std::vector<double> eps{0.1, 0.15, 0.25, 0.4}, y{0.031, 0.072, 0.18, 0.51}, se{0.004, 0.006, 0.01, 0.03};
  oracle::Matrix X(4, 2);
  oracle::Vector Y(4), W(4);
  for (int i = 0; i < 4; ++i) {
    X(i, 0) = eps[i];
    X(i, 1) = eps[i] * eps[i];
    Y(i) = y[i];
    W(i) = 1.0 / (se[i] * se[i]);
  }
  const oracle::Matrix XtW = X.transpose() * W.asDiagonal();
  const oracle::Vector beta = (XtW * X).ldlt().solve(XtW * Y);
  const oracle::Matrix cov = (XtW * X).inverse();
  const LadderFit f = fit_ladder(eps, y, se);
  EXPECT_NEAR(f.lower_coeff, beta(0), 1e-10);
  EXPECT_NEAR(f.lower_coeff_se, std::sqrt(cov(0, 0)), 1e-10);
  const oracle::Vector x2 = X.col(1);
  const double c = x2.dot(W.asDiagonal() * Y) / x2.dot(W.asDiagonal() * x2);
  EXPECT_NEAR(f.coeff, c, 1e-12);
  EXPECT_NEAR(f.coeff_se, 1.0 / std::sqrt(x2.dot(W.asDiagonal() * x2)), 1e-12);
}

TEST(Protocol, ValidationAndResolution) {
  EpsilonProtocol p;
  EXPECT_NO_THROW(p.validate());
  const auto eps = p.resolve(2.0);
  ASSERT_EQ(eps.size(), 4u);
  EXPECT_DOUBLE_EQ(eps[2], 0.5);
  p.relative = false;
  EXPECT_DOUBLE_EQ(p.resolve(2.0)[2], 0.25);
  EpsilonProtocol short_ladder;
  short_ladder.factors = {0.1, 0.2};
  EXPECT_THROW(short_ladder.validate(), ConfigError);
  EpsilonProtocol negative;
  negative.factors = {0.1, -0.2, 0.3};
  EXPECT_THROW(negative.validate(), ConfigError);
  EpsilonProtocol zero;
  zero.factors = {0.0, 0.2, 0.3};
  EXPECT_THROW(zero.validate(), ConfigError);
  EmpiricalConfig cfg;
  cfg.pool_size = 10;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.n_conditions = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(PerturbationDivergence, OneDimensionalShift) {
  const LinearModel m = LinearModel::univariate(0.1, 0.1);
  const Ensemble pool = exact_pool(m, 200000, {}, 3);
  const SampleSet s(1, pool.initial_states());
  const KlEstimate c = perturbation_divergence(s, 0.25, 0);
  EXPECT_LT(z_score(c.value, 0.0625, c.std_error), 3.0);
  const KlEstimate zero = perturbation_divergence(s, 0.0, 0);
  EXPECT_EQ(zero.value, 0.0);
}

TEST(PerturbationDivergence, ConditionalVarianceOfLinearModel) {
  oracle::HierarchicalOu o;
  const LinearModel lm = hierarchical_ou({});
  const Ensemble pool = exact_pool(lm, 200000, {}, 4);
  const double eps = 0.25 * std::sqrt(o.var_x_given_y());
  const KlEstimate c = perturbation_divergence(make_linear_sde(lm), eps, small_config(), &pool);
  EXPECT_LT(z_score(c.value, eps * eps / (2.0 * o.var_x_given_y()), c.std_error), 3.0);
}

TEST(LocalResponse, ShiftedGaussianClosedForm) {
  oracle::HierarchicalOu o;
  EmpiricalConfig cfg = small_config();
  cfg.conditional_trajectories = 40000;
  const SdeModel sde = make_hierarchical_ou({});
  const double eps = 0.25, tau = 3.0;
  const double expected = eps * eps * o.pyx(tau) * o.pyx(tau) / (2.0 * o.var_y_given_xy(tau));
  const KlEstimate a = local_response_divergence(sde, std::vector<double>{0.0, 0.0}, eps, tau, cfg);
  EXPECT_LT(z_score(a.value, expected, a.std_error), 3.0);
  cfg.sim.seed = 12;
  const KlEstimate b = local_response_divergence(sde, std::vector<double>{1.0, -1.0}, eps, tau, cfg);
  EXPECT_LT(z_score(a.value, b.value, std::hypot(a.std_error, b.std_error)), 3.0);
}

TEST(LocalResponse, ZeroShiftAndPastLags) {
  EmpiricalConfig cfg = small_config();
  cfg.conditional_trajectories = 20000;
  const SdeModel sde = make_hierarchical_ou({});
  const KlEstimate z = local_response_divergence(sde, std::vector<double>{0.2, 0.1}, 0.0, 3.0, cfg);
  EXPECT_LT(std::abs(z.value), 3.0 * z.std_error);
  const KlEstimate past = local_response_divergence(sde, std::vector<double>{0.2, 0.1}, 0.25, -3.0, cfg);
  EXPECT_EQ(past.value, 0.0);
  EXPECT_THROW(local_response_divergence(sde, std::vector<double>{0.2, 0.1}, 0.25, 0.0, cfg), DomainError);
}

TEST(TimeArrow, EmpiricalMeasuresVanishForPastLags) {
  const SdeModel sde = make_quadratic_coupling({});
  const EmpiricalConfig cfg = small_config();
  EXPECT_EQ(information_response_empirical(sde, -1.0, {}, cfg).value, 0.0);
  EXPECT_EQ(ensemble_information_response_empirical(sde, -1.0, {}, cfg).value, 0.0);
  EXPECT_EQ(generalized_response(sde, [](std::span<const double> s) { return s[0]; }, -1.0, cfg).value, 0.0);
  EXPECT_EQ(classical_frt_check(sde, -1.0, {}, cfg).slope, 0.0);
}

TEST(InformationResponse, LinearModelMatchesAnalytic) {
  const LinearModel lm = hierarchical_ou({});
  const Ensemble pool = exact_pool(lm, 100000, {}, 5);
  const MeasureResult r = information_response_empirical(make_linear_sde(lm), 3.0, {}, small_config(), &pool);
  const double G = information_response(lm, 3.0).value;
  EXPECT_GT(r.std_error, 0.0);
  EXPECT_LT(z_score(r.value, G, r.std_error), 3.0) << r.value << " +- " << r.std_error;
  // Leading order is quadratic: the linear coefficient of both ladders vanishes.
  for (const char* key : {"fit_numerator", "fit_denominator"}) {
    const auto& f = r.metadata.at(key);
    EXPECT_LT(std::abs(f.at("lower_coeff").get<double>()), 3.0 * f.at("lower_coeff_stderr").get<double>()) << key;
  }
  std::ostringstream os;
  write_ladder_csv(os, r);
  EXPECT_EQ(os.str().rfind("epsilon,d_mean,d_stderr,c,c_stderr\n", 0), 0u);
}

TEST(InformationResponse, InvariantUnderYRescaling) {
  // Scaling y by s maps the linear model to A' = D A D^-1, Q' = D Q D with D = diag(1, s).
  const LinearModel lm = hierarchical_ou({});
  Matrix D = Matrix::Identity(2, 2);
  D(1, 1) = 7.0;
  const LinearModel scaled = LinearModel::make(D * lm.A * D.inverse(), D * lm.Q * D);
  const EmpiricalConfig cfg = small_config();
  const Ensemble p1 = exact_pool(lm, 100000, {}, 6), p2 = exact_pool(scaled, 100000, {}, 6);
  const MeasureResult a = information_response_empirical(make_linear_sde(lm), 3.0, {}, cfg, &p1);
  const MeasureResult b = information_response_empirical(make_linear_sde(scaled), 3.0, {}, cfg, &p2);
  EXPECT_LT(z_score(a.value, b.value, std::hypot(a.std_error, b.std_error)), 3.0);
}

TEST(InformationResponse, UncoupledModelGivesZero) {
  const LinearModel lm = uncoupled_with_noise();
  const Ensemble pool = exact_pool(lm, 100000, {}, 7);
  const MeasureResult r = information_response_empirical(make_linear_sde(lm), 3.0, {}, small_config(), &pool);
  EXPECT_LT(std::abs(r.value), 3.0 * r.std_error);
}

TEST(InformationResponse, NonQuadraticLadderIsRejected) {
  const LinearModel lm = hierarchical_ou({});
  const Ensemble pool = exact_pool(lm, 100000, {}, 8);
  EpsilonProtocol p;
  p.factors = {0.5, 1.5, 3.0, 6.0};
  p.max_reduced_chi2 = 1e-6;
  EXPECT_THROW(information_response_empirical(make_linear_sde(lm), 3.0, p, small_config(), &pool), ProtocolError);
}

TEST(EnsembleResponse, LinearModelMatchesAnalytic) {
  // The ensemble divergence is small, so the ladder is wider; for linear drift both KLs are
  // exactly quadratic in epsilon.
  const LinearModel lm = hierarchical_ou({});
  const Ensemble pool = exact_pool(lm, 400000, {3.0}, 9);
  EpsilonProtocol p;
  p.factors = {0.5, 0.8, 1.2, 1.6};
  const MeasureResult r = ensemble_information_response_empirical(make_linear_sde(lm), 3.0, p, small_config(), &pool);
  const double ref = ensemble_information_response(lm, 3.0).value;
  EXPECT_LT(z_score(r.value, ref, r.std_error), 3.0) << r.value << " +- " << r.std_error;
  EXPECT_LT(r.value, information_response(lm, 3.0).value);
}

TEST(EnsembleResponse, LongLagRatioNearOne) {
  const LinearModel lm = hierarchical_ou({});
  const Ensemble pool = exact_pool(lm, 400000, {50.0}, 10);
  EpsilonProtocol p;
  p.factors = {0.5, 0.8, 1.2, 1.6};
  const MeasureResult r = ensemble_information_response_empirical(make_linear_sde(lm), 50.0, p, small_config(), &pool);
  const double G = information_response(lm, 50.0).value;
  EXPECT_LT(z_score(r.value / G, 1.0, r.std_error / G), 3.0);
}

TEST(GeneralizedResponse, ShiftProfileReproducesEnsembleResponse) {
  oracle::HierarchicalOu o;
  const LinearModel lm = hierarchical_ou({});
  const Ensemble pool = exact_pool(lm, 200000, {3.0}, 13);
  const double b = o.sxy() / o.syy(), v = o.var_x_given_y();
  const Profile h = [&](std::span<const double> s) { return (s[0] - b * s[1]) / v; };
  const MeasureResult r = generalized_response(make_linear_sde(lm), h, 3.0, small_config(), &pool);
  const double ref = o.gamma_ensemble(3.0);
  EXPECT_NEAR(r.value, ref, 0.1 * ref);
}

TEST(GeneralizedResponse, OrthogonalProfileGivesZero) {
  const LinearModel lm = uncoupled_with_noise();
  const Ensemble pool = exact_pool(lm, 200000, {3.0}, 14);
  const Profile h = [](std::span<const double> s) { return s[0]; };
  const MeasureResult r = generalized_response(make_linear_sde(lm), h, 3.0, small_config(), &pool);
  EXPECT_LT(std::abs(r.value), 3.0 * r.std_error);
}

TEST(GeneralizedResponse, ConstantProfileRejected) {
  const LinearModel lm = hierarchical_ou({});
  const Ensemble pool = exact_pool(lm, 5000, {3.0}, 15);
  const Profile h = [](std::span<const double>) { return 1.0; };
  EXPECT_THROW(generalized_response(make_linear_sde(lm), h, 3.0, small_config(), &pool), DomainError);
}

TEST(Frt, LinearSlopeEqualsCorrelation) {
  oracle::HierarchicalOu o;
  const LinearModel lm = hierarchical_ou({});
  const Ensemble pool = exact_pool(lm, 200000, {3.0}, 16);
  const FrtReport r = classical_frt_check(make_linear_sde(lm), 3.0, {}, small_config(), &pool);
  EXPECT_EQ(r.score_method, "analytic");
  EXPECT_LT(r.relative_discrepancy, 0.05);
  // Euler drift bias at dt = 0.01 is far below the correlation's sampling error.
  EXPECT_LT(z_score(r.correlation, o.pyx(3.0), r.correlation_se), 3.0);
  EXPECT_NEAR(r.slope, o.pyx(3.0), 0.01 * o.pyx(3.0));
  EXPECT_TRUE(r.bound_holds());
}

TEST(Frt, UncoupledModelHasNoResponse) {
  const LinearModel lm = uncoupled_with_noise();
  const Ensemble pool = exact_pool(lm, 100000, {3.0}, 17);
  const FrtReport r = classical_frt_check(make_linear_sde(lm), 3.0, {}, small_config(), &pool);
  EXPECT_LT(std::abs(r.slope), 1e-12);
  EXPECT_LT(std::abs(r.correlation), 3.0 * r.correlation_se);
}

TEST(Slice, LinearLocalMeasures) {
  // For linear models d is constant in x0 and t follows the closed-form local transfer entropy.
  oracle::HierarchicalOu o;
  const LinearModel lm = hierarchical_ou({});
  const Ensemble pool = exact_pool(lm, 200000, {}, 18);
  const double sx = std::sqrt(o.sxx()), eps = 0.25, tau = 3.0;
  std::vector<double> grid;
  for (int i = 0; i < 33; ++i) grid.push_back(-4.0 * sx + i * (8.0 * sx / 32));
  const LocalSlice s = local_measures_slice(make_linear_sde(lm), tau, 0.0, grid, eps, 20000, small_config(), &pool);
  const double d_ref = eps * eps * o.pyx(tau) * o.pyx(tau) / (2.0 * o.var_y_given_xy(tau));
  double worst_te = 0.0, mean_d = 0.0;
  int inner = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (std::abs(grid[i]) > 2.0 * sx) continue;
    worst_te = std::max(worst_te, std::abs(s.local_te[i] - local_transfer_entropy(lm, tau, grid[i], 0.0)));
    mean_d += s.local_d[i];
    ++inner;
  }
  mean_d /= inner;
  const double te_scale = local_transfer_entropy(lm, tau, 2.0 * sx, 0.0);
  EXPECT_LT(worst_te / te_scale, 0.1);
  EXPECT_NEAR(mean_d, d_ref, 0.1 * d_ref);
  for (double p : s.density) EXPECT_GE(p, 0.0);
  EXPECT_EQ(s.weighted_te().size(), grid.size());
}

TEST(Slice, PreconditionsEnforced) {
  const SdeModel sde = make_quadratic_coupling({});
  const std::vector<double> grid{-1.0, 0.0, 1.0};
  EXPECT_THROW(local_measures_slice(sde, -1.0, 0.0, grid, 0.2, 500, small_config()), DomainError);
  EXPECT_THROW(local_measures_slice(sde, 3.0, 0.0, std::vector<double>{0.0, 1.0}, 0.2, 500, small_config()),
               DomainError);
}

TEST(Residuals, ConditionalSpreadOfX) {
  oracle::HierarchicalOu o;
  const LinearModel lm = hierarchical_ou({});
  const Ensemble pool = exact_pool(lm, 200000, {}, 19);
  EXPECT_NEAR(residual_sd_x(pool, make_linear_sde(lm)), std::sqrt(o.var_x_given_y()), 0.01 * std::sqrt(o.var_x_given_y()));
}
