#include "inforesp/errors.hpp"
#include "inforesp/experiments.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace inforesp;
namespace fs = std::filesystem;

namespace {

std::vector<double> bumps(const std::vector<std::pair<double, double>>& centres_heights, int n, double width) {
  std::vector<double> v(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (auto [c, h] : centres_heights) v[i] += h * std::exp(-0.5 * (i - c) * (i - c) / (width * width));
  return v;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("inforesp_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string first_data_line(const fs::path& file) {
  std::ifstream in(file);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') return line;
  return {};
}

}  // namespace

TEST(LocalMaxima, OneDimensionalShapes) {
  EXPECT_EQ(count_local_maxima(bumps({{50, 1.0}}, 101, 8)), 1);
  EXPECT_EQ(count_local_maxima(bumps({{30, 1.0}, {70, 0.6}}, 101, 6)), 2);
  EXPECT_EQ(count_local_maxima(bumps({{20, 1.0}, {50, 0.8}, {80, 0.5}}, 101, 5)), 3);
  // A bump below 1% of the tallest one is ignored.
  EXPECT_EQ(count_local_maxima(bumps({{30, 1.0}, {80, 0.005}}, 101, 5)), 1);
  // Cell-level noise is removed by the smoothing.
  std::mt19937 gen(1);
  std::uniform_real_distribution<double> u(-0.002, 0.002);
  auto noisy = bumps({{30, 1.0}, {70, 0.6}}, 101, 6);
  for (auto& x : noisy) x += u(gen);
  EXPECT_EQ(count_local_maxima(noisy), 2);
  EXPECT_EQ(count_local_maxima(std::vector<double>(10, 0.0)), 0);
}

TEST(LocalMaxima, TwoDimensionalShapes) {
  Matrix one(40, 40), two(40, 40);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j) {
      one(i, j) = std::exp(-((i - 20.0) * (i - 20.0) + (j - 15.0) * (j - 15.0)) / 50.0);
      two(i, j) = one(i, j) + 0.7 * std::exp(-((i - 5.0) * (i - 5.0) + (j - 32.0) * (j - 32.0)) / 20.0);
    }
  EXPECT_EQ(count_local_maxima(one), 1);
  EXPECT_EQ(count_local_maxima(two), 2);
}

TEST(RandomModels, StableAndDeterministic) {
  const auto a = random_stable_models(24, 5), b = random_stable_models(24, 5);
  ASSERT_EQ(a.size(), 24u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NO_THROW(a[i].validate());
    EXPECT_GT(a[i].slowest_rate(), 0.0);
    EXPECT_GE(a[i].dim(), 2);
    EXPECT_LE(a[i].dim(), 5);
    EXPECT_EQ(a[i].A, b[i].A);
    EXPECT_EQ(a[i].Q, b[i].Q);
  }
  EXPECT_NE(random_stable_models(1, 6)[0].A, a[0].A);
}

TEST(Specs, NamedExperimentsAndErrors) {
  for (const char* n : {"fig1", "fig2", "fig_a1", "nonlinear", "brownian"}) {
    const ExperimentSpec s = ExperimentSpec::named(n);
    EXPECT_EQ(s.name, n);
    EXPECT_NO_THROW(s.validate());
  }
  EXPECT_THROW(ExperimentSpec::named("fig9"), ConfigError);
  Tolerances t;
  t.cv_rel = -0.1;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.frt_rel = std::nan("");
  EXPECT_THROW(t.validate(), ConfigError);
  EXPECT_NO_THROW(Tolerances{}.validate());
}

TEST(Fig2, ShapesAndAverages) {
  ExperimentSpec s = ExperimentSpec::named("fig2");
  s.grid_points = 121;
  s.output_dir = scratch("fig2");
  const Fig2Result r = run_fig2(s);
  EXPECT_TRUE(r.report.passed()) << r.report.to_json().dump(2);
  for (const char* id : {"gamma_constant", "te_average", "gamma_weighted_unimodal", "te_weighted_bimodal"})
    EXPECT_NE(r.report.find(id), nullptr) << id;
  EXPECT_EQ(r.local_gamma.values.rows(), 121);
  for (const char* f : {"local_gamma.csv", "local_te.csv", "weighted_local_te.csv", "density.csv", "report.json"})
    EXPECT_TRUE(fs::exists(s.output_dir / "fig2" / f)) << f;
  EXPECT_EQ(first_data_line(s.output_dir / "fig2" / "local_te.csv"), "x0,y0,local_te");
}

TEST(Fig2, UncoupledGridsVanish) {
  ExperimentSpec s = ExperimentSpec::named("fig2");
  s.params.alpha = 0.0;
  s.grid_points = 41;
  const Fig2Result r = run_fig2(s);
  EXPECT_TRUE(r.report.passed());
  EXPECT_NE(r.report.find("uncoupled_zero"), nullptr);
  EXPECT_EQ(r.local_te.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Fig2, Deterministic) {
  ExperimentSpec s = ExperimentSpec::named("fig2");
  s.grid_points = 41;
  EXPECT_EQ(run_fig2(s).report.to_json().dump(), run_fig2(s).report.to_json().dump());
}

TEST(FigA1, CurvesSatisfyIdentitiesAndShape) {
  ExperimentSpec s = ExperimentSpec::named("fig_a1");
  s.output_dir = scratch("fig_a1");
  const FigA1Result r = run_fig_a1(s);
  EXPECT_TRUE(r.report.passed()) << r.report.to_json().dump(2);
  EXPECT_EQ(r.rows.size(), default_tau_grid().size());
  EXPECT_EQ(first_data_line(s.output_dir / "fig_a1" / "curves.csv"),
            "tau,gamma,gamma_ensemble,transfer_entropy,mi_yy,mi_xy_y");
  const auto grid = default_tau_grid();
  EXPECT_NEAR(grid.front(), 0.05, 1e-12);
  EXPECT_NEAR(grid.back(), 200.0, 1e-9);
}

TEST(Brownian, WorkEquivalence) {
  ExperimentSpec s = ExperimentSpec::named("brownian");
  s.velocity_samples = 200000;
  const ValidationReport r = run_brownian(s);
  EXPECT_TRUE(r.passed()) << r.to_json().dump(2);
  ASSERT_EQ(r.checks.size(), 3u);
  EXPECT_NE(r.find("work_mean"), nullptr);
  EXPECT_NE(r.find("perturbation_cost"), nullptr);
}

TEST(Fig1, TwinPairingAndOutputs) {
  ExperimentSpec s = ExperimentSpec::named("fig1");
  s.empirical.pool_size = 20000;
  s.empirical.conditional_trajectories = 4000;
  s.grid_points = 101;
  s.output_dir = scratch("fig1");
  const ValidationReport r = run_fig1(s);
  ASSERT_NE(r.find("twin_pairing"), nullptr);
  EXPECT_TRUE(r.find("twin_pairing")->pass);
  EXPECT_GT(r.info.at("local_response_divergence").at("value").get<double>(), 0.0);
  for (const char* f : {"trajectories.csv", "prediction.csv", "perturbation.csv", "report.json"})
    EXPECT_TRUE(fs::exists(s.output_dir / "fig1" / f)) << f;
}

TEST(Nonlinear, ReducedRunProducesRowsAndChecks) {
  ExperimentSpec s = ExperimentSpec::named("nonlinear");
  s.tau_grid = {1.0, 3.0};
  s.empirical.pool_size = 20000;
  s.empirical.n_conditions = 8;
  s.empirical.conditional_trajectories = 2000;
  s.slice.x0_points = 11;
  s.slice.trajectories = 2000;
  s.slice.y0_quantiles = {0.5};
  const NonlinearResult r = run_nonlinear(s);
  ASSERT_EQ(r.rows.size(), 2u);
  for (const auto& row : r.rows) {
    EXPECT_TRUE(row.error.empty()) << row.error;
    EXPECT_GT(row.te.value, 0.0);
  }
  EXPECT_EQ(r.slices.size(), 1u);
  for (const char* id : {"violation", "ladder_quadratic"}) EXPECT_NE(r.report.find(id), nullptr) << id;
}

TEST(Suite, InvalidConfigurationRejected) {
  SuiteConfig cfg;
  cfg.tolerances.kl_sigmas = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(run_validation_suite(cfg), ConfigError);
}

TEST(Reports, JsonStatusSummary) {
  ValidationReport r;
  r.title = "t";
  Check ok;
  ok.id = "a";
  ok.pass = true;
  Check bad;
  bad.id = "b";
  r.checks = {ok, bad};
  const auto j = r.to_json();
  EXPECT_EQ(j.at("checks_total").get<int>(), 2);
  EXPECT_EQ(j.at("checks_failed").get<int>(), 1);
  EXPECT_FALSE(r.passed());
  EXPECT_EQ(r.find("b"), &r.checks[1]);
  EXPECT_EQ(r.find("c"), nullptr);
}
