#pragma once

// Monte Carlo estimates of the response measures. Stationary states come from a shared pool
// (an Ensemble recorded at t = 0 and optionally at lags); split into even / odd rows whenever
// two independent stationary samples are needed.

#include "inforesp/estimators.hpp"
#include "inforesp/measures_analytic.hpp"
#include "inforesp/sde_engine.hpp"

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace inforesp {

struct EpsilonProtocol {
  std::vector<double> factors{0.1, 0.15, 0.25, 0.4};
  bool relative = true;  ///< factors multiply sigma_{x0 | y0, z0}; otherwise absolute epsilons
  int fit_order = 2;     ///< leading order of the divergence in epsilon
  std::string extrapolation = "quadratic-through-origin";
  double max_reduced_chi2 = 10.0;  ///< larger values mean the ladder left the quadratic regime

  void validate() const;
  std::vector<double> resolve(double sigma_x_given_y) const;
};

struct EmpiricalConfig {
  SimConfig sim;                           ///< dt, burn-in, seed, threads
  std::size_t pool_size = 400000;          ///< stationary states
  std::size_t n_conditions = 64;           ///< stratified conditions for <d>
  std::size_t conditional_trajectories = 10000;
  KnnOptions knn;

  void validate() const;
};

/// Stationary states with y recorded at `lags`.
Ensemble stationary_pool(const SdeModel& model, const EmpiricalConfig& cfg, std::vector<double> lags = {});

/// Residual standard deviation of x0 regressed (with intercept) on (y0, z0).
double residual_sd_x(const Ensemble& pool, const SdeModel& model);

/// d = KL[p(y_tau | x0 + eps, y0) || p(y_tau | x0, y0)] from two independent conditional ensembles.
/// Exactly 0 for tau < 0.
KlEstimate local_response_divergence(const SdeModel& model, std::span<const double> condition, double epsilon,
                                     double tau, const EmpiricalConfig& cfg);

/// c_x(eps) = KL[p(x0 - eps, y0) || p(x0, y0)]: even pool rows shifted by eps against odd rows.
KlEstimate perturbation_divergence(const SdeModel& model, double epsilon, const EmpiricalConfig& cfg,
                                   const Ensemble* pool = nullptr);
/// Same for arbitrary samples; column `var` is shifted.
KlEstimate perturbation_divergence(const SampleSet& samples, double epsilon, std::size_t var,
                                   const KnnOptions& knn = {});

/// One rung of an epsilon ladder.
struct LadderRow {
  double epsilon = 0.0;
  double numerator = 0.0;
  double numerator_se = 0.0;
  double c = 0.0;
  double c_se = 0.0;
};

/// Weighted least squares through the origin in epsilon^order, plus an (order-1, order) fit whose
/// lower coefficient should vanish.
struct LadderFit {
  double coeff = 0.0;
  double coeff_se = 0.0;
  double lower_coeff = 0.0;
  double lower_coeff_se = 0.0;
  double reduced_chi2 = 0.0;
};
LadderFit fit_ladder(std::span<const double> eps, std::span<const double> y, std::span<const double> se, int order = 2);

/// Gamma = (coefficient of <d>) / (coefficient of c_x); Exactly 0 for tau < 0.
MeasureResult information_response_empirical(const SdeModel& model, double tau, const EpsilonProtocol& protocol,
                                             const EmpiricalConfig& cfg, const Ensemble* pool = nullptr);

/// Gamma~ from KL[p(y_tau | x0 => x0 + eps) || p(y_tau)] over the ladder. Exactly 0 for tau < 0.
MeasureResult ensemble_information_response_empirical(const SdeModel& model, double tau,
                                                      const EpsilonProtocol& protocol, const EmpiricalConfig& cfg,
                                                      const Ensemble* pool = nullptr);

using Profile = std::function<double(std::span<const double>)>;

/// Gamma~[h] = << h | y_tau >^2 > / < h^2 > with the inner conditional mean by kernel regression.
MeasureResult generalized_response(const SdeModel& model, const Profile& h, double tau, const EmpiricalConfig& cfg,
                                   const Ensemble* pool = nullptr);

struct FrtRow {
  double epsilon = 0.0;
  double response = 0.0;  ///< <y_tau | x0 => x0 + eps> - <y_tau>, paired noise
  double response_se = 0.0;
  double divergence = 0.0;  ///< KL[p(y_tau | x0 => x0 + eps) || p(y_tau)]
  double divergence_se = 0.0;
  double bound = 0.0;       ///< sigma_{y_tau} sqrt(2 divergence)
  bool within_bound = false;  ///< response^2 / (2 sigma^2) <= divergence + 3 se
};

struct FrtReport {
  double tau = 0.0;
  double slope = 0.0;  ///< d<y_tau>/d eps from the paired ensembles
  double slope_se = 0.0;
  double correlation = 0.0;  ///< -<y_tau d/dx0 ln p(x0, y0, z0)>
  double correlation_se = 0.0;
  std::string score_method;  ///< "analytic" or "kde"
  std::size_t score_failures = 0;  ///< evaluation points without kernel mass, left out
  double relative_discrepancy = 0.0;
  double sigma_y_tau = 0.0;
  std::vector<FrtRow> rows;
  bool bound_holds() const;
};
nlohmann::json to_json(const FrtReport& r);

FrtReport classical_frt_check(const SdeModel& model, double tau, const EpsilonProtocol& protocol,
                              const EmpiricalConfig& cfg, const Ensemble* pool = nullptr);

/// Local measures along x0 at fixed y0 (two-variable models), from conditional ensembles.
struct LocalSlice {
  double tau = 0.0;
  double y0 = 0.0;
  double epsilon = 0.0;
  std::vector<double> x0;
  std::vector<double> density;  ///< joint stationary density p(x0, y0), kernel estimate
  std::vector<double> local_te;
  std::vector<double> local_d;  ///< KL[p(y_tau | x0 + eps, y0) || p(y_tau | x0, y0)]
  std::vector<double> weighted_te() const;
  std::vector<double> weighted_d() const;
};

LocalSlice local_measures_slice(const SdeModel& model, double tau, double y0, std::span<const double> x0_grid,
                                double epsilon, std::size_t trajectories, const EmpiricalConfig& cfg,
                                const Ensemble* pool = nullptr);

/// CSV with columns epsilon, d_mean, d_stderr, c, c_stderr from a result's "ladder" metadata.
void write_ladder_csv(std::ostream& os, const MeasureResult& result);

}  // namespace inforesp
