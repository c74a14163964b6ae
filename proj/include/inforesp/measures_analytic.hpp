#pragma once

// Closed-form causation measures x -> y for linear (OU) models. All conditionals on y0
// are taken jointly on (y0, z0).

#include "inforesp/gauss_core.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace inforesp {

enum class MeasureKind {
  gamma,
  gamma_ensemble,
  transfer_entropy,
  mutual_info_yy,
  mutual_info_xy_y,
  perturbation_divergence,
  response_divergence,
};

enum class Method { analytic, empirical };

std::string_view to_string(MeasureKind k);
std::string_view to_string(Method m);

struct MeasureResult {
  MeasureKind kind = MeasureKind::gamma;
  double value = 0.0;
  double tau = 0.0;
  Method method = Method::analytic;
  double std_error = 0.0;  ///< 0 for analytic results
  nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json to_json(const MeasureResult& r);

enum class GridQuantity { local_gamma, local_te, density, weighted_local_te, weighted_local_gamma };

std::string_view to_string(GridQuantity q);

/// Values of a local quantity on an (x0, y0) grid; values(i, j) belongs to (x0[i], y0[j]).
struct LocalGrid {
  Vector x0;
  Vector y0;
  Matrix values;
  GridQuantity quantity = GridQuantity::local_gamma;

  void validate() const;
};

struct GridAxes {
  Vector x0;
  Vector y0;

  /// +-half_width marginal standard deviations around zero, `points` per axis.
  static GridAxes around_stationary(const LinearModel& model, double half_width = 4.0, Index points = 201);
};

/// Every Gaussian ingredient of the x -> y measures at one lag tau > 0.
struct LinearSummary {
  double tau = 0.0;
  double coeff_x = 0.0;          ///< d<y_tau | x0, y0, z0>/dx0
  double var_y_tau = 0.0;        ///< sigma^2_{y_tau}
  double var_y_given_yz = 0.0;   ///< sigma^2_{y_tau | y0, z0}
  double var_y_given_xyz = 0.0;  ///< sigma^2_{y_tau | x0, y0, z0}
  double var_x_given_yz = 0.0;   ///< sigma^2_{x0 | y0, z0}
  double gamma = 0.0;
  double transfer_entropy = 0.0;
  double mi_yy = 0.0;    ///< I(y_tau; y0, z0)
  double mi_xy_y = 0.0;  ///< I(y_tau; x0, y0, z0)
  double gamma_ensemble = 0.0;  ///< from the ensemble-shift KL ratio, not the information identity
};

LinearSummary linear_summary(const LinearModel& model, double tau);

/// ln(sigma_{y_tau|y0,z0} / sigma_{y_tau|x0,y0,z0}); exactly 0 for tau < 0.
MeasureResult transfer_entropy(const LinearModel& model, double tau);
/// Regression form of the information response; exactly 0 for tau < 0.
MeasureResult information_response(const LinearModel& model, double tau);
/// sigma^2_{y|y} - sigma^2_{y|x,y} - sigma^2_{x|y} b^2, which vanishes identically.
double variance_identity_residual(const LinearModel& model, double tau);
MeasureResult ensemble_information_response(const LinearModel& model, double tau);
MeasureResult mutual_info_yy(const LinearModel& model, double tau);
MeasureResult mutual_info_xy_y(const LinearModel& model, double tau);

/// t(x0, y0) = KL[p(y_tau | x0, y0) || p(y_tau | y0)] for a two-variable model.
double local_transfer_entropy(const LinearModel& model, double tau, double x0, double y0);
/// Minimum of the local transfer entropy over x0: (exp(-2T) + 2T - 1) / 2.
double local_te_minimum(double transfer_entropy);

LocalGrid local_te_grid(const LinearModel& model, double tau, const GridAxes& axes, bool weighted = false);
LocalGrid local_gamma_grid(const LinearModel& model, double tau, const GridAxes& axes, bool weighted = false);
LocalGrid stationary_density_grid(const LinearModel& model, const GridAxes& axes);

/// Trapezoid integral of grid values over the (x0, y0) rectangle.
double integrate_trapezoid(const LocalGrid& grid);

}  // namespace inforesp
