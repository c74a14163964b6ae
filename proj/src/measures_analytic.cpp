#include "inforesp/measures_analytic.hpp"

#include "inforesp/errors.hpp"

#include <cmath>
#include <numbers>

namespace inforesp {

std::string_view to_string(MeasureKind k) {
  switch (k) {
    case MeasureKind::gamma: return "Gamma";
    case MeasureKind::gamma_ensemble: return "GammaEnsemble";
    case MeasureKind::transfer_entropy: return "TransferEntropy";
    case MeasureKind::mutual_info_yy: return "MutualInfo_yy";
    case MeasureKind::mutual_info_xy_y: return "MutualInfo_xy_y";
    case MeasureKind::perturbation_divergence: return "PerturbationDivergence";
    case MeasureKind::response_divergence: return "ResponseDivergence";
  }
  return "unknown";
}

std::string_view to_string(Method m) { return m == Method::analytic ? "analytic" : "empirical"; }

std::string_view to_string(GridQuantity q) {
  switch (q) {
    case GridQuantity::local_gamma: return "local_gamma";
    case GridQuantity::local_te: return "local_te";
    case GridQuantity::density: return "density";
    case GridQuantity::weighted_local_te: return "weighted_local_te";
    case GridQuantity::weighted_local_gamma: return "weighted_local_gamma";
  }
  return "unknown";
}

nlohmann::json to_json(const MeasureResult& r) {
  return {{"kind", to_string(r.kind)}, {"value", r.value},   {"tau", r.tau},
          {"method", to_string(r.method)}, {"stderr", r.std_error}, {"metadata", r.metadata}};
}

void LocalGrid::validate() const {
  auto increasing = [](const Vector& v) {
    for (Index i = 1; i < v.size(); ++i)
      if (!(v(i) > v(i - 1))) return false;
    return v.size() > 0;
  };
  if (!increasing(x0) || !increasing(y0)) throw DomainError("grid axes must be strictly increasing");
  if (values.rows() != x0.size() || values.cols() != y0.size()) throw DomainError("grid values shape mismatch");
  if (!values.allFinite()) throw NumericalError("grid values must be finite");
  if (quantity == GridQuantity::density && values.minCoeff() < 0.0)
    throw NumericalError("density grid has negative values");
}

GridAxes GridAxes::around_stationary(const LinearModel& model, double half_width, Index points) {
  if (!model.has_y()) throw DomainError("grid needs a two-variable model");
  if (points < 2 || !(half_width > 0)) throw DomainError("grid needs >= 2 points and positive extent");
  const Matrix S = solve_lyapunov(model);
  const double sx = std::sqrt(S(model.x_index, model.x_index));
  const double sy = std::sqrt(S(model.y_index, model.y_index));
  return {Vector::LinSpaced(points, -half_width * sx, half_width * sx),
          Vector::LinSpaced(points, -half_width * sy, half_width * sy)};
}

namespace {

void require_two_variable(const LinearModel& model, const char* what) {
  if (!model.has_y() || !model.z_indices.empty())
    throw DomainError(std::string(what) + ": local grids are defined for two-variable (x, y) models");
}

void check_axes(const GridAxes& axes) {
  LocalGrid probe{axes.x0, axes.y0, Matrix::Zero(axes.x0.size(), axes.y0.size()), GridQuantity::density};
  probe.validate();
}

}  // namespace

LinearSummary linear_summary(const LinearModel& model, double tau) {
  if (!model.has_y()) throw DomainError("causation measures need distinct x and y variables");
  if (tau == 0.0)
    throw DegeneracyError("tau = 0 is a singular point: p(y_tau | x0, y0) is degenerate and I_yy diverges");
  if (!(tau > 0.0)) throw DomainError("linear_summary: tau must be > 0");
  const LaggedJoint lj = lagged_joint(model, tau);
  IndexList given_yz;
  for (Index i : model.y_and_confounders()) given_yz.push_back(lj.at0(i));
  IndexList given_xyz{lj.at0(model.x_index)};
  given_xyz.insert(given_xyz.end(), given_yz.begin(), given_yz.end());
  const Index ytau = lj.at_tau(model.y_index);

  const auto full = condition(lj.joint, {ytau}, given_xyz);
  const auto reduced = condition(lj.joint, {ytau}, given_yz);
  const auto xc = condition(lj.joint, {lj.at0(model.x_index)}, given_yz);

  LinearSummary s;
  s.tau = tau;
  s.coeff_x = full.coeff(0, 0);
  s.var_y_tau = lj.joint.cov(ytau, ytau);
  s.var_y_given_xyz = full.residual(0, 0);
  s.var_y_given_yz = reduced.residual(0, 0);
  s.var_x_given_yz = xc.residual(0, 0);
  if (!(s.var_y_given_xyz > 1e-14 * s.var_y_tau))
    throw DegeneracyError("p(y_tau | x0, y0, z0) has zero variance at tau = " + std::to_string(tau));
  if (!(s.var_x_given_yz > 0.0)) throw DegeneracyError("p(x0 | y0, z0) has zero variance");
  s.gamma = s.coeff_x * s.coeff_x * s.var_x_given_yz / s.var_y_given_xyz;
  s.transfer_entropy = 0.5 * std::log(s.var_y_given_yz / s.var_y_given_xyz);
  s.mi_yy = 0.5 * std::log(s.var_y_tau / s.var_y_given_yz);
  s.mi_xy_y = s.mi_yy + s.transfer_entropy;
  // Shifting x0 moves <y_tau> by g eps with g the propagator entry; both KLs are Gaussian shifts.
  const double g = matexp(-model.A * tau)(model.y_index, model.x_index);
  s.gamma_ensemble = g * g * s.var_x_given_yz / s.var_y_tau;
  return s;
}

namespace {

MeasureResult analytic_result(MeasureKind kind, double value, double tau) {
  MeasureResult r;
  r.kind = kind;
  r.value = value;
  r.tau = tau;
  r.method = Method::analytic;
  return r;
}

}  // namespace

MeasureResult transfer_entropy(const LinearModel& model, double tau) {
  if (!model.has_y()) throw DomainError("transfer_entropy: model needs a y variable");
  if (tau < 0.0) return analytic_result(MeasureKind::transfer_entropy, 0.0, tau);
  const auto s = linear_summary(model, tau);
  auto r = analytic_result(MeasureKind::transfer_entropy, s.transfer_entropy, tau);
  r.metadata = {{"var_y_given_yz", s.var_y_given_yz}, {"var_y_given_xyz", s.var_y_given_xyz}};
  return r;
}

MeasureResult information_response(const LinearModel& model, double tau) {
  if (!model.has_y()) throw DomainError("information_response: model needs a y variable");
  if (tau < 0.0) return analytic_result(MeasureKind::gamma, 0.0, tau);
  const auto s = linear_summary(model, tau);
  auto r = analytic_result(MeasureKind::gamma, s.gamma, tau);
  r.metadata = {{"coeff_x", s.coeff_x}, {"var_x_given_yz", s.var_x_given_yz}, {"var_y_given_xyz", s.var_y_given_xyz}};
  return r;
}

double variance_identity_residual(const LinearModel& model, double tau) {
  const auto s = linear_summary(model, tau);
  return s.var_y_given_yz - s.var_y_given_xyz - s.var_x_given_yz * s.coeff_x * s.coeff_x;
}

MeasureResult ensemble_information_response(const LinearModel& model, double tau) {
  if (tau < 0.0) return analytic_result(MeasureKind::gamma_ensemble, 0.0, tau);
  const auto s = linear_summary(model, tau);
  auto r = analytic_result(MeasureKind::gamma_ensemble, s.gamma_ensemble, tau);
  r.metadata = {{"mi_yy", s.mi_yy}, {"mi_xy_y", s.mi_xy_y}, {"transfer_entropy", s.transfer_entropy}};
  return r;
}

MeasureResult mutual_info_yy(const LinearModel& model, double tau) {
  const auto s = linear_summary(model, tau);
  return analytic_result(MeasureKind::mutual_info_yy, s.mi_yy, tau);
}

MeasureResult mutual_info_xy_y(const LinearModel& model, double tau) {
  const auto s = linear_summary(model, tau);
  return analytic_result(MeasureKind::mutual_info_xy_y, s.mi_xy_y, tau);
}

namespace {

struct LocalTeTerms {
  double T = 0.0;
  double slope = 0.0;   // b^2 / (2 sigma^2_{y|y0})
  double x_on_y = 0.0;  // <x0 | y0> = x_on_y * y0
  double var_x = 0.0;
};

LocalTeTerms local_te_terms(const LinearModel& model, double tau) {
  const auto s = linear_summary(model, tau);
  const Matrix S = solve_lyapunov(model);
  LocalTeTerms t;
  t.T = s.transfer_entropy;
  t.slope = s.coeff_x * s.coeff_x / (2.0 * s.var_y_given_yz);
  t.x_on_y = S(model.x_index, model.y_index) / S(model.y_index, model.y_index);
  t.var_x = s.var_x_given_yz;
  return t;
}

}  // namespace

double local_transfer_entropy(const LinearModel& model, double tau, double x0, double y0) {
  require_two_variable(model, "local_transfer_entropy");
  const auto t = local_te_terms(model, tau);
  const double u = x0 - t.x_on_y * y0;
  return t.T + t.slope * (u * u - t.var_x);
}

double local_te_minimum(double T) { return 0.5 * (std::exp(-2.0 * T) + 2.0 * T - 1.0); }

LocalGrid stationary_density_grid(const LinearModel& model, const GridAxes& axes) {
  require_two_variable(model, "stationary_density_grid");
  check_axes(axes);
  const Matrix S = solve_lyapunov(model);
  Eigen::Matrix2d C;
  C << S(model.x_index, model.x_index), S(model.x_index, model.y_index), S(model.y_index, model.x_index),
      S(model.y_index, model.y_index);
  const Eigen::Matrix2d P = C.inverse();
  const double norm = 1.0 / (2.0 * std::numbers::pi * std::sqrt(C.determinant()));
  LocalGrid g{axes.x0, axes.y0, Matrix(axes.x0.size(), axes.y0.size()), GridQuantity::density};
  for (Index i = 0; i < axes.x0.size(); ++i)
    for (Index j = 0; j < axes.y0.size(); ++j) {
      const Eigen::Vector2d v(axes.x0(i), axes.y0(j));
      g.values(i, j) = norm * std::exp(-0.5 * v.dot(P * v));
    }
  return g;
}

LocalGrid local_te_grid(const LinearModel& model, double tau, const GridAxes& axes, bool weighted) {
  require_two_variable(model, "local_te_grid");
  check_axes(axes);
  const auto t = local_te_terms(model, tau);
  LocalGrid g{axes.x0, axes.y0, Matrix(axes.x0.size(), axes.y0.size()),
              weighted ? GridQuantity::weighted_local_te : GridQuantity::local_te};
  for (Index i = 0; i < axes.x0.size(); ++i)
    for (Index j = 0; j < axes.y0.size(); ++j) {
      const double u = axes.x0(i) - t.x_on_y * axes.y0(j);
      g.values(i, j) = t.T + t.slope * (u * u - t.var_x);
    }
  if (weighted) g.values.array() *= stationary_density_grid(model, axes).values.array();
  g.validate();
  return g;
}

LocalGrid local_gamma_grid(const LinearModel& model, double tau, const GridAxes& axes, bool weighted) {
  require_two_variable(model, "local_gamma_grid");
  check_axes(axes);
  const auto s = linear_summary(model, tau);
  const LaggedJoint lj = lagged_joint(model, tau);
  const auto full = condition(lj.joint, {lj.at_tau(model.y_index)}, {lj.at0(model.x_index), lj.at0(model.y_index)});
  LocalGrid g{axes.x0, axes.y0, Matrix(axes.x0.size(), axes.y0.size()),
              weighted ? GridQuantity::weighted_local_gamma : GridQuantity::local_gamma};
  // gamma(x0, y0) = (d mean / d x0)^2 sigma^2_{x0|y0} / sigma^2_{y_tau|x0,y0}, with the mean slope
  // evaluated as a unit difference of the conditional mean at the grid point.
  for (Index i = 0; i < axes.x0.size(); ++i)
    for (Index j = 0; j < axes.y0.size(); ++j) {
      const Vector here = Eigen::Vector2d(axes.x0(i), axes.y0(j));
      const Vector next = Eigen::Vector2d(axes.x0(i) + 1.0, axes.y0(j));
      const double slope = full.conditional_mean(next)(0) - full.conditional_mean(here)(0);
      g.values(i, j) = slope * slope * s.var_x_given_yz / full.residual(0, 0);
    }
  if (weighted) g.values.array() *= stationary_density_grid(model, axes).values.array();
  g.validate();
  return g;
}

double integrate_trapezoid(const LocalGrid& grid) {
  auto weights = [](const Vector& ax) {
    Vector w = Vector::Zero(ax.size());
    for (Index i = 0; i + 1 < ax.size(); ++i) {
      const double h = ax(i + 1) - ax(i);
      w(i) += 0.5 * h;
      w(i + 1) += 0.5 * h;
    }
    return w;
  };
  const Vector wx = weights(grid.x0), wy = weights(grid.y0);
  return wx.dot(grid.values * wy);
}

}  // namespace inforesp
