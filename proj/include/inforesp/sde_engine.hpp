#pragma once

// Euler-Maruyama simulation of additive-noise Langevin systems dxi = f(xi) dt + dW, <dW dW^T> = Q dt.
// Trajectory i of a run always consumes random stream (seed, i), so serial and parallel runs agree
// and two runs with the same seed share noise realizations (common random numbers).

#include "inforesp/gauss_core.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace inforesp {

using DriftFn = std::function<void(std::span<const double> state, std::span<double> drift)>;
/// Drift of `count` row-major states at once; optional, used by the integrator when present.
using BatchDriftFn = std::function<void(const double* states, double* drift, std::size_t count)>;

struct SdeModel {
  std::string name;
  Index n = 0;
  DriftFn drift;
  BatchDriftFn batch_drift;  ///< must agree exactly with `drift`
  Matrix noise_cov;  ///< may be rank deficient (noiseless y)
  Index x_index = 0;
  Index y_index = 1;  ///< kNoIndex for univariate models
  IndexList z_indices;
  std::optional<LinearModel> linear;  ///< set for linear drift, enables the exact path
  double slowest_timescale = 1.0;
  double fastest_timescale = 1.0;
  nlohmann::json parameters = nlohmann::json::object();

  void validate() const;
  bool is_linear() const { return linear.has_value(); }
  IndexList y_and_confounders() const;
};

/// Linear drift -A xi with the model's noise covariance.
SdeModel make_linear_sde(const LinearModel& model, std::string name = "linear");
/// dx/dt = -x/t_R + eta, dy/dt = alpha x - beta y.
SdeModel make_hierarchical_ou(const OuParams& p = {});
/// dx/dt = -x/t_R + eta, dy/dt = alpha x^2 - beta y.
SdeModel make_quadratic_coupling(const OuParams& p = {});
/// dx/dt = -a x + eta.
SdeModel make_univariate_ou(double a, double q);

struct SimConfig {
  double dt = 0.01;
  std::optional<double> burn_in;  ///< default: 10 x slowest relaxation time
  std::uint64_t seed = 1;
  std::size_t n_trajectories = 10000;
  std::vector<double> record_lags;  ///< each a non-negative multiple of dt
  unsigned threads = 0;             ///< 0: hardware concurrency

  double resolved_burn_in(const SdeModel& model) const;
  /// Throws on invalid settings; returns warnings (dt above 0.05 x fastest timescale).
  std::vector<std::string> validate(const SdeModel& model) const;
};

nlohmann::json to_json(const SimConfig& cfg);

struct PerturbationSpec {
  enum class Kind { none, shift, general };
  Kind kind = Kind::none;
  double epsilon = 0.0;
  Index target = 0;
  /// Profile h(state) for general perturbations, applied as density reweighting 1 + eps h.
  std::function<double(std::span<const double>)> profile;

  static PerturbationSpec none() { return {}; }
  static PerturbationSpec shift(double epsilon, Index target);
  static PerturbationSpec general(double epsilon, Index target, std::function<double(std::span<const double>)> h);
  std::string describe() const;
};

struct EnsembleProvenance {
  std::string model;
  SimConfig config;
  std::string perturbation = "none";
  std::vector<std::string> warnings;
};

/// State records per trajectory: slot 0 is t = 0, slot k is lags[k - 1].
struct Ensemble {
  Index dim = 0;
  std::vector<double> lags;
  std::size_t count = 0;
  std::vector<double> data;
  std::vector<double> weights;  ///< empty unless a general perturbation reweighted the ensemble
  EnsembleProvenance provenance;

  std::size_t slots() const { return lags.size() + 1; }
  double value(std::size_t traj, std::size_t slot, Index var) const {
    return data[(traj * slots() + slot) * std::size_t(dim) + std::size_t(var)];
  }
  std::span<const double> state(std::size_t traj, std::size_t slot) const {
    return {data.data() + (traj * slots() + slot) * std::size_t(dim), std::size_t(dim)};
  }
  std::vector<double> column(std::size_t slot, Index var) const;
  /// Flattened t = 0 states, usable as initial conditions for propagate().
  std::vector<double> initial_states() const;
  std::size_t slot_of_lag(double lag) const;
  /// Rows x0, y0, z0..., then y at each recorded lag; header row first.
  void write_csv(std::ostream& os, Index x_index, Index y_index) const;
};

/// Independent trajectories from the origin; burn-in discarded before t = 0.
Ensemble simulate_stationary(const SdeModel& model, const SimConfig& cfg);

/// Trajectory i starts at initial_states[i] (after the perturbation) and is recorded at cfg.record_lags.
Ensemble propagate(const SdeModel& model, const SimConfig& cfg, std::span<const double> initial_states,
                   const PerturbationSpec& perturbation = PerturbationSpec::none());

/// All cfg.n_trajectories trajectories start at `condition`.
Ensemble simulate_conditional(const SdeModel& model, const SimConfig& cfg, std::span<const double> condition);

/// Natural and shifted ensembles from the same condition, paired by trajectory index and noise.
std::pair<Ensemble, Ensemble> simulate_twin(const SdeModel& model, const SimConfig& cfg,
                                            std::span<const double> condition, double epsilon, Index target);

/// Exact stationary draws and exact Gaussian transitions for a linear model (cross-check path).
Ensemble simulate_stationary_exact(const LinearModel& model, const SimConfig& cfg);

struct BrownianParams {
  double mass = 1.0;
  double damping = 1.0;
  double temperature = 1.0;
  double impulse = 0.5;           ///< f: force f / pulse_duration acts on [0, pulse_duration]
  double pulse_duration = 1e-3;
  int substeps = 100;             ///< integration steps inside the pulse
  bool antithetic = true;         ///< trajectory 2j+1 mirrors (v0, noise) of trajectory 2j

  void validate() const;
};

struct BrownianRun {
  std::vector<double> work;  ///< W = int F_t v_t dt
  std::vector<double> v0;
  std::vector<double> v_end;  ///< velocity at t = pulse_duration
};

/// Underdamped particle m dv = (-lambda v + F_t) dt + dW, <dW^2> = 2 lambda T dt, equilibrium start.
BrownianRun simulate_brownian_particle(const BrownianParams& params, const SimConfig& cfg);

/// Velocity process of the particle as a one-dimensional linear model.
LinearModel brownian_velocity_model(const BrownianParams& params);

}  // namespace inforesp
