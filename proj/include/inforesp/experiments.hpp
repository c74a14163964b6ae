#pragma once

// Canned reproductions and the validation suite. Every run is a pure function of its spec
// (seed included); files are written only when an output directory is set.

#include "inforesp/measures_analytic.hpp"
#include "inforesp/measures_empirical.hpp"
#include "inforesp/sde_engine.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace inforesp {

struct Check {
  std::string id;
  std::string name;
  double expected = 0.0;
  double observed = 0.0;
  double tolerance = 0.0;
  std::string comparison;  ///< how observed is judged, e.g. "|observed - expected| <= tolerance"
  bool pass = false;
  nlohmann::json details = nlohmann::json::object();
};

nlohmann::json to_json(const Check& c);

struct ValidationReport {
  std::string title;
  std::vector<Check> checks;
  nlohmann::json info = nlohmann::json::object();  ///< parameters and values that are reported, not asserted

  bool passed() const;
  const Check* find(std::string_view id) const;
  nlohmann::json to_json() const;
};

struct SliceSettings {
  std::vector<double> y0_quantiles{0.5, 0.9};  ///< of the stationary y distribution
  Index x0_points = 41;
  double x0_half_width = 4.0;  ///< in marginal standard deviations of x
  std::size_t trajectories = 40000;
};

struct ExperimentSpec {
  std::string name = "custom";
  OuParams params;
  double tau = 3.0;
  double epsilon = 0.25;
  std::vector<double> tau_grid;  ///< empty: the experiment's default grid
  double grid_half_width = 4.0;
  Index grid_points = 201;
  EpsilonProtocol protocol;
  EmpiricalConfig empirical;
  BrownianParams brownian;
  std::size_t brownian_trajectories = 100000;
  std::size_t velocity_samples = 400000;
  SliceSettings slice;
  std::filesystem::path output_dir;  ///< empty: nothing is written

  void validate() const;
  nlohmann::json to_json() const;
  /// fig1, fig2, fig_a1, nonlinear, brownian; ConfigError otherwise.
  static ExperimentSpec named(const std::string& name);
};

/// Log-spaced 0.05 ... 200 (80 points).
std::vector<double> default_tau_grid();
std::vector<double> nonlinear_tau_grid();

/// Gaussian smoothing with sigma = 1 cell, then strict local maxima above 1% of the largest value.
int count_local_maxima(std::span<const double> values);
/// Two-dimensional version over the 8-neighbourhood.
int count_local_maxima(const Matrix& values);

/// Random Hurwitz interaction matrices with full-rank noise, dimension 2..5.
std::vector<LinearModel> random_stable_models(std::size_t count, std::uint64_t seed);

/// Twin trajectories, a pair of predicted y_tau distributions and the shifted conditional ensemble
/// for the quadratic-coupling model.
ValidationReport run_fig1(const ExperimentSpec& spec);

struct Fig2Result {
  LocalGrid local_gamma;
  LocalGrid local_te;
  LocalGrid weighted_gamma;
  LocalGrid weighted_te;
  LocalGrid density;
  ValidationReport report;
};
Fig2Result run_fig2(const ExperimentSpec& spec);

struct FigA1Result {
  std::vector<LinearSummary> rows;
  ValidationReport report;
};
FigA1Result run_fig_a1(const ExperimentSpec& spec);

struct NonlinearRow {
  double tau = 0.0;
  MeasureResult gamma;
  MeasureResult gamma_ensemble;
  KlEstimate te;
  KlEstimate mi_yy;
  double linear_gamma = 0.0;  ///< exp(2T) - 1 from the estimated T
  double linear_gamma_se = 0.0;
  double linear_gamma_ensemble = 0.0;  ///< exp(-2I)(1 - exp(-2T))
  double linear_gamma_ensemble_se = 0.0;
  std::string error;  ///< non-empty when the empirical pipeline failed at this tau
};

struct NonlinearResult {
  std::vector<NonlinearRow> rows;
  std::vector<LocalSlice> slices;
  ValidationReport report;
};
NonlinearResult run_nonlinear(const ExperimentSpec& spec);

ValidationReport run_brownian(const ExperimentSpec& spec);

/// Tolerances of the validation suite; all must be non-negative.
struct Tolerances {
  double lyapunov_analytic = 1e-12;
  double lyapunov_mc_rel = 0.02;
  double variance_identity_rel = 1e-10;
  double gamma_identity_abs = 1e-9;
  double gamma_empirical_rel = 0.10;
  double local_te_min_abs = 1e-10;
  double grid_average_rel = 0.01;
  double ensemble_identity_abs = 1e-10;
  double long_tau_ratio_abs = 1e-3;
  double violation_sigmas = 3.0;
  double work_mean_rel = 0.02;
  double work_var_rel = 0.05;
  double cv_rel = 0.05;
  double frt_rel = 0.05;
  double bound_sigmas = 3.0;
  double kl_sigmas = 3.0;
  double kl_stderr_rel = 0.10;

  void validate() const;
  nlohmann::json to_json() const;
};

struct SuiteConfig {
  std::uint64_t seed = 20240601;
  unsigned threads = 0;
  Tolerances tolerances;
  std::size_t random_models = 100;
  std::filesystem::path output_dir;  ///< report.json goes to <dir>/validate when set

  void validate() const;
};

/// Runs the acceptance checks C1 ... C13 in order. Check failures are recorded, not thrown.
ValidationReport run_validation_suite(const SuiteConfig& cfg = {});

}  // namespace inforesp
