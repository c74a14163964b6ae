#include "inforesp/errors.hpp"
#include "inforesp/sde_engine.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace inforesp;

namespace {

struct Moments {
  double mean = 0.0, var = 0.0, se = 0.0;
};

Moments moments(const std::vector<double>& v) {
  const double n = double(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double s2 = 0.0;
  for (double x : v) s2 += (x - m) * (x - m);
  s2 /= (n - 1.0);
  return {m, s2, std::sqrt(s2 / n)};
}

}  // namespace

TEST(Stationary, VarianceOfXMatchesLyapunov) {
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.burn_in = 100.0;
  cfg.n_trajectories = 100000;
  cfg.seed = 5;
  const Ensemble e = simulate_stationary(make_hierarchical_ou({}), cfg);
  const auto x = e.column(0, 0);
  const Moments m = moments(x);
  // Standard error of a Gaussian sample variance: var * sqrt(2 / (n - 1)).
  const double se = m.var * std::sqrt(2.0 / double(x.size() - 1));
  EXPECT_LT(std::abs(m.var - 0.5), 3.0 * se);
}

TEST(Stationary, LagCovarianceMatchesPropagator) {
  oracle::HierarchicalOu o;
  SimConfig cfg;
  cfg.n_trajectories = 50000;
  cfg.record_lags = {3.0};
  cfg.seed = 6;
  const Ensemble e = simulate_stationary(make_hierarchical_ou({}), cfg);
  const auto x0 = e.column(0, 0), yt = e.column(1, 1);
  const double mx = moments(x0).mean, my = moments(yt).mean;
  std::vector<double> prod(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) prod[i] = (x0[i] - mx) * (yt[i] - my);
  const Moments m = moments(prod);
  const double expected = o.pyx(3.0) * o.sxx() + o.pyy(3.0) * o.sxy();  // (P S)_yx
  EXPECT_LT(std::abs(m.mean - expected), 3.0 * m.se);
}

TEST(Stationary, MomentsAtZeroAndLagAgree) {
  SimConfig cfg;
  cfg.n_trajectories = 40000;
  cfg.record_lags = {5.0};
  cfg.seed = 7;
  const Ensemble e = simulate_stationary(make_hierarchical_ou({}), cfg);
  const Moments a = moments(e.column(0, 1)), b = moments(e.column(1, 1));
  EXPECT_LT(std::abs(a.mean - b.mean), 3.0 * std::hypot(a.se, b.se));  // positive correlation makes this conservative
  EXPECT_LT(std::abs(a.var - b.var) / a.var, 0.05);
}

TEST(Conditional, NoiselessDecayMatchesExponential) {
  Matrix A(2, 2);
  A << 0.1, 0.0, -0.5, 0.2;
  const LinearModel lm = LinearModel::make(A, Matrix::Zero(2, 2));
  SimConfig cfg;
  cfg.dt = 1e-4;
  cfg.n_trajectories = 2;
  cfg.record_lags = {1.0};
  const std::vector<double> start{1.0, -0.3};
  const Ensemble e = simulate_conditional(make_linear_sde(lm), cfg, start);
  const oracle::Vector x0 = oracle::Vector::Map(start.data(), 2);
  const oracle::Vector ref = oracle::taylor_exp(-A) * x0;
  // Euler drift error at t = 1 is about (dt / 2) |A^2 x0|, second order terms aside.
  const oracle::Vector bound = 0.5 * cfg.dt * (A * A * x0).cwiseAbs() * 1.05 + oracle::Vector::Constant(2, 1e-9);
  EXPECT_NEAR(e.value(0, 1, 0), ref(0), bound(0));
  EXPECT_NEAR(e.value(0, 1, 1), ref(1), bound(1));
  // The recursion itself is reproduced exactly by repeated steps of I - A dt.
  oracle::Vector euler = x0;
  const oracle::Matrix step = oracle::Matrix::Identity(2, 2) - cfg.dt * A;
  for (int i = 0; i < 10000; ++i) euler = step * euler;
  EXPECT_NEAR(e.value(0, 1, 1), euler(1), 1e-10);
}

TEST(Conditional, ShortLagFollowsDrift) {
  // y has no noise, so its short-time mean follows the second-order Taylor expansion.
  const OuParams p;
  SimConfig cfg;
  cfg.dt = 1e-4;
  cfg.n_trajectories = 10000;
  cfg.record_lags = {1e-3};
  const double x0 = 1.0, y0 = -0.5, tau = 1e-3;
  const Ensemble e = simulate_conditional(make_hierarchical_ou(p), cfg, std::vector<double>{x0, y0});
  const Moments m = moments(e.column(1, 1));
  const double v1 = p.alpha * x0 - p.beta * y0;
  const double v2 = p.alpha * (-x0 / p.t_relax) - p.beta * v1;
  EXPECT_LT(std::abs(m.mean - (y0 + v1 * tau + 0.5 * v2 * tau * tau)), 3.0 * m.se + 1e-12);
}

TEST(Conditional, MeanAtLagMatchesRegression) {
  oracle::HierarchicalOu o;
  SimConfig cfg;
  cfg.n_trajectories = 40000;
  cfg.record_lags = {3.0};
  cfg.seed = 8;
  const Ensemble e = simulate_conditional(make_hierarchical_ou({}), cfg, std::vector<double>{0.8, 1.2});
  const Moments m = moments(e.column(1, 1));
  EXPECT_LT(std::abs(m.mean - (o.pyx(3.0) * 0.8 + o.pyy(3.0) * 1.2)), 3.0 * m.se);
}

TEST(Conditional, QuadraticDriveFromOriginIsPositive) {
  SimConfig cfg;
  cfg.n_trajectories = 5000;
  cfg.record_lags = {0.5, 3.0};
  const Ensemble e = simulate_conditional(make_quadratic_coupling({}), cfg, std::vector<double>{0.0, 0.0});
  for (std::size_t slot : {1u, 2u}) EXPECT_GT(moments(e.column(slot, 1)).mean, 0.0);
  for (double y : e.column(2, 1)) EXPECT_GE(y, 0.0);
}

TEST(Twin, ZeroShiftIsBitwiseIdentical) {
  SimConfig cfg;
  cfg.n_trajectories = 200;
  cfg.record_lags = {1.0, 3.0};
  auto [a, b] = simulate_twin(make_quadratic_coupling({}), cfg, std::vector<double>{0.3, 0.1}, 0.0, 0);
  EXPECT_EQ(a.data, b.data);
}

TEST(Twin, LinearPairedDifferenceIsDeterministic) {
  oracle::HierarchicalOu o;
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.n_trajectories = 500;
  cfg.record_lags = {3.0};
  const double eps = 0.25;
  auto [nat, pert] = simulate_twin(make_hierarchical_ou({}), cfg, std::vector<double>{0.5, 0.5}, eps, 0);
  double lo = 1e300, hi = -1e300;
  for (std::size_t i = 0; i < nat.count; ++i) {
    const double d = pert.value(i, 1, 1) - nat.value(i, 1, 1);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  EXPECT_LT(hi - lo, 1e-8);
  EXPECT_NEAR(lo, eps * o.pyx(3.0), 1e-3 * eps * o.pyx(3.0));
}

TEST(Twin, QuadraticPairedDifferenceVaries) {
  SimConfig cfg;
  cfg.n_trajectories = 500;
  cfg.record_lags = {3.0};
  auto [nat, pert] = simulate_twin(make_quadratic_coupling({}), cfg, std::vector<double>{0.5, 0.5}, 0.25, 0);
  std::vector<double> d(nat.count);
  for (std::size_t i = 0; i < nat.count; ++i) d[i] = pert.value(i, 1, 1) - nat.value(i, 1, 1);
  EXPECT_GT(moments(d).var, 1e-6);
}

TEST(Determinism, SameSeedSameEnsembleAcrossThreadCounts) {
  SimConfig cfg;
  cfg.n_trajectories = 3000;
  cfg.record_lags = {1.0, 2.5};
  cfg.seed = 42;
  cfg.threads = 1;
  const SdeModel m = make_quadratic_coupling({});
  const Ensemble a = simulate_stationary(m, cfg);
  cfg.threads = 4;
  const Ensemble b = simulate_stationary(m, cfg);
  EXPECT_EQ(a.data, b.data);
  cfg.seed = 43;
  EXPECT_NE(simulate_stationary(m, cfg).data, a.data);
}

TEST(Determinism, BatchDriftAgreesWithScalarDrift) {
  SimConfig cfg;
  cfg.n_trajectories = 1000;
  cfg.record_lags = {2.0};
  SdeModel m = make_quadratic_coupling({});
  const Ensemble a = simulate_stationary(m, cfg);
  m.batch_drift = nullptr;
  const Ensemble b = simulate_stationary(m, cfg);
  EXPECT_EQ(a.data, b.data);
}

TEST(Exact, StationaryDrawsHaveLyapunovCovariance) {
  oracle::HierarchicalOu o;
  SimConfig cfg;
  cfg.n_trajectories = 200000;
  cfg.record_lags = {3.0};
  const Ensemble e = simulate_stationary_exact(hierarchical_ou({}), cfg);
  const Moments x = moments(e.column(0, 0)), y = moments(e.column(0, 1));
  EXPECT_LT(std::abs(x.var - o.sxx()), 3.0 * o.sxx() * std::sqrt(2.0 / cfg.n_trajectories));
  EXPECT_LT(std::abs(y.var - o.syy()), 3.0 * o.syy() * std::sqrt(2.0 / cfg.n_trajectories));
  const Moments yl = moments(e.column(1, 1));
  EXPECT_LT(std::abs(yl.var - o.syy()), 3.0 * o.syy() * std::sqrt(2.0 / cfg.n_trajectories));
}

TEST(Errors, DivergingDriftIsReported) {
  SdeModel m;
  m.name = "explosive";
  m.n = 1;
  m.drift = [](std::span<const double> s, std::span<double> d) { d[0] = s[0] * s[0] * s[0]; };
  m.noise_cov = Matrix::Identity(1, 1);
  m.y_index = kNoIndex;
  SimConfig cfg;
  cfg.n_trajectories = 4;
  cfg.record_lags = {50.0};
  EXPECT_THROW(simulate_conditional(m, cfg, std::vector<double>{3.0}), DivergenceError);
}

TEST(Errors, InvalidConfigurationRejected) {
  const SdeModel m = make_hierarchical_ou({});
  SimConfig cfg;
  cfg.dt = 0.0;
  EXPECT_THROW(cfg.validate(m), DomainError);
  cfg = {};
  cfg.record_lags = {2.0, 1.0};
  EXPECT_THROW(cfg.validate(m), DomainError);
  cfg = {};
  cfg.burn_in = -1.0;
  EXPECT_THROW(cfg.validate(m), DomainError);
  cfg = {};
  cfg.dt = 2.0;
  EXPECT_FALSE(cfg.validate(m).empty());
  EXPECT_THROW(simulate_conditional(m, SimConfig{}, std::vector<double>{1.0}), DomainError);
  EXPECT_THROW(make_quadratic_coupling({.t_relax = 10.0, .q = 0.1, .alpha = 0.5, .beta = 0.0}), DomainError);
}

TEST(Errors, LagMustBeRecorded) {
  SimConfig cfg;
  cfg.n_trajectories = 10;
  cfg.record_lags = {1.0};
  const Ensemble e = simulate_stationary(make_hierarchical_ou({}), cfg);
  EXPECT_EQ(e.slot_of_lag(1.0), 1u);
  EXPECT_THROW(e.slot_of_lag(2.0), DomainError);
}

TEST(Config, BurnInDefaultsToTenSlowestTimes) {
  const SdeModel m = make_hierarchical_ou({});
  EXPECT_NEAR(SimConfig{}.resolved_burn_in(m), 100.0, 1e-12);
}

TEST(Perturbation, ShiftMovesInitialState) {
  SimConfig cfg;
  cfg.n_trajectories = 3;
  cfg.record_lags = {};
  const std::vector<double> init{0.0, 0.0, 1.0, 1.0, -1.0, 2.0};
  const Ensemble e = propagate(make_hierarchical_ou({}), cfg, init, PerturbationSpec::shift(0.5, 0));
  EXPECT_DOUBLE_EQ(e.value(1, 0, 0), 1.5);
  EXPECT_DOUBLE_EQ(e.value(1, 0, 1), 1.0);
}

TEST(Perturbation, GeneralProfileReweights) {
  SimConfig cfg;
  cfg.n_trajectories = 2;
  const std::vector<double> init{1.0, 0.0, -1.0, 0.0};
  const auto spec = PerturbationSpec::general(0.2, 0, [](std::span<const double> s) { return s[0]; });
  const Ensemble e = propagate(make_hierarchical_ou({}), cfg, init, spec);
  ASSERT_EQ(e.weights.size(), 2u);
  EXPECT_NEAR(e.weights[0], 1.2, 1e-15);
  EXPECT_NEAR(e.weights[1], 0.8, 1e-15);
  const auto bad = PerturbationSpec::general(2.0, 0, [](std::span<const double> s) { return s[0]; });
  EXPECT_THROW(propagate(make_hierarchical_ou({}), cfg, init, bad), DomainError);
}

TEST(EnsembleCsv, HeaderAndRowCount) {
  SimConfig cfg;
  cfg.n_trajectories = 5;
  cfg.record_lags = {1.0, 2.0};
  const Ensemble e = simulate_stationary(make_hierarchical_ou({}), cfg);
  std::ostringstream os;
  e.write_csv(os, 0, 1);
  std::istringstream is(os.str());
  std::string line;
  int data_rows = 0;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      EXPECT_EQ(line.rfind("x0,y0", 0), 0u);
      continue;
    }
    ++data_rows;
  }
  EXPECT_EQ(data_rows, 5);
}

TEST(Brownian, WorkMomentsMatchImpulseFormulas) {
  BrownianParams p;
  p.mass = 1.0;
  p.damping = 1.0;
  p.temperature = 1.0;
  p.impulse = 0.5;
  p.pulse_duration = 1e-3;
  SimConfig cfg;
  cfg.n_trajectories = 100000;
  cfg.seed = 3;
  const BrownianRun run = simulate_brownian_particle(p, cfg);
  const Moments w = moments(run.work);
  const double mean_ref = p.impulse * p.impulse / (2.0 * p.mass);
  EXPECT_LT(std::abs(w.mean / mean_ref - 1.0), 0.02);
  EXPECT_LT(std::abs(w.var / (2.0 * mean_ref * p.temperature) - 1.0), 0.05);
  const Moments v0 = moments(run.v0);
  EXPECT_NEAR(v0.mean, 0.0, 1e-12);  // antithetic pairs cancel exactly
  EXPECT_LT(std::abs(v0.var - p.temperature / p.mass), 0.02);
}

TEST(Brownian, NoForceMeansNoWork) {
  BrownianParams p;
  p.impulse = 0.0;
  SimConfig cfg;
  cfg.n_trajectories = 1000;
  const BrownianRun run = simulate_brownian_particle(p, cfg);
  for (double w : run.work) EXPECT_EQ(w, 0.0);
}

TEST(Brownian, ParameterValidation) {
  BrownianParams p;
  p.mass = 0.0;
  EXPECT_THROW(simulate_brownian_particle(p, SimConfig{}), DomainError);
  p = {};
  SimConfig cfg;
  cfg.n_trajectories = 3;
  EXPECT_THROW(simulate_brownian_particle(p, cfg), DomainError);
}

TEST(Brownian, VelocityModelIsOrnsteinUhlenbeck) {
  BrownianParams p;
  p.mass = 2.0;
  p.damping = 0.5;
  p.temperature = 1.5;
  const LinearModel m = brownian_velocity_model(p);
  EXPECT_NEAR(m.A(0, 0), p.damping / p.mass, 1e-15);
  EXPECT_NEAR(solve_lyapunov(m)(0, 0), p.temperature / p.mass, 1e-12);
}
