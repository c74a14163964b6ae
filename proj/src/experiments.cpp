#include "inforesp/experiments.hpp"

#include "inforesp/errors.hpp"
#include "inforesp/estimators.hpp"
#include "inforesp/rng.hpp"
#include "inforesp/serialization.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

namespace inforesp {

// ---------------------------------------------------------------------------
// Reports

nlohmann::json to_json(const Check& c) {
  return {{"id", c.id},
          {"name", c.name},
          {"expected", c.expected},
          {"observed", c.observed},
          {"tolerance", c.tolerance},
          {"comparison", c.comparison},
          {"pass", c.pass},
          {"details", c.details}};
}

bool ValidationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

const Check* ValidationReport::find(std::string_view id) const {
  for (const auto& c : checks)
    if (c.id == id) return &c;
  return nullptr;
}

nlohmann::json ValidationReport::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  std::size_t failed = 0;
  for (const auto& c : checks) {
    list.push_back(inforesp::to_json(c));
    if (!c.pass) ++failed;
  }
  return {{"title", title},
          {"status", passed() ? "pass" : "fail"},
          {"checks_total", checks.size()},
          {"checks_failed", failed},
          {"checks", list},
          {"info", info}};
}

namespace {

Check make_check(std::string id, std::string name, double expected, double observed, double tolerance,
                 std::string comparison, bool pass, nlohmann::json details = nlohmann::json::object()) {
  Check c;
  c.id = std::move(id);
  c.name = std::move(name);
  c.expected = expected;
  c.observed = observed;
  c.tolerance = tolerance;
  c.comparison = std::move(comparison);
  c.pass = pass;
  c.details = std::move(details);
  return c;
}

/// |observed - expected| <= tol * |expected|; exact agreement passes when expected is 0.
Check relative_check(std::string id, std::string name, double expected, double observed, double tol,
                     nlohmann::json details = nlohmann::json::object()) {
  const bool pass = std::abs(observed - expected) <= tol * std::abs(expected);
  return make_check(std::move(id), std::move(name), expected, observed, tol,
                    "|observed - expected| <= tolerance * |expected|", pass, std::move(details));
}

Check count_check(std::string id, std::string name, int expected, int observed, bool at_least,
                  nlohmann::json details = nlohmann::json::object()) {
  const bool pass = at_least ? observed >= expected : observed == expected;
  return make_check(std::move(id), std::move(name), expected, observed, 0.0,
                    at_least ? "observed >= expected" : "observed == expected", pass, std::move(details));
}

/// Runs `body`; an exception becomes a failed check carrying the message.
Check guarded(const std::string& id, const std::string& name, const std::function<Check()>& body) {
  try {
    Check c = body();
    c.id = id;
    if (c.name.empty()) c.name = name;
    return c;
  } catch (const std::exception& e) {
    return make_check(id, name, 0.0, std::numeric_limits<double>::quiet_NaN(), 0.0, "completed without error",
                      false, {{"error", e.what()}});
  }
}

std::filesystem::path experiment_dir(const ExperimentSpec& spec) {
  return ensure_output_dir(spec.output_dir / spec.name);
}

/// The parts of the spec an experiment actually uses, for CSV headers.
nlohmann::json spec_subset(const ExperimentSpec& spec, std::initializer_list<const char*> keys) {
  const nlohmann::json full = spec.to_json();
  nlohmann::json out = nlohmann::json::object();
  for (const char* k : keys) out[k] = full.at(k);
  return out;
}

void write_csv_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ostringstream os;
  body(os);
  write_text_file(path, os.str());
}

std::vector<double> smooth(std::span<const double> v) {
  const int r = 3;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double acc = 0.0, norm = 0.0;
    for (int k = -r; k <= r; ++k) {
      const long j = long(i) + k;
      if (j < 0 || j >= long(v.size())) continue;
      const double w = std::exp(-0.5 * k * k);
      acc += w * v[std::size_t(j)];
      norm += w;
    }
    out[i] = acc / norm;
  }
  return out;
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double variance_of(std::span<const double> v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / double(v.size() - 1);
}

double quantile_of(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const std::size_t i = std::min(v.size() - 1, std::size_t(q * double(v.size())));
  return v[i];
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag) { return derive_seed(seed, tag); }

std::vector<double> normal_draws(std::uint64_t seed, std::uint64_t stream, std::size_t n, double mean, double var) {
  StreamRng rng(seed, stream);
  boost::random::normal_distribution<double> normal(mean, std::sqrt(var));
  std::vector<double> out(n);
  for (auto& x : out) x = normal(rng);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Specs

std::vector<double> default_tau_grid() {
  std::vector<double> g(80);
  const double lo = std::log(0.05), hi = std::log(200.0);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::exp(lo + (hi - lo) * double(i) / double(g.size() - 1));
  return g;
}

std::vector<double> nonlinear_tau_grid() { return {1.0, 2.0, 3.0, 5.0, 8.0}; }

void ExperimentSpec::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be positive and finite");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be positive");
  for (double t : tau_grid)
    if (!std::isfinite(t)) throw ConfigError("tau grid values must be finite");
  if (grid_points < 3) throw ConfigError("grid needs at least 3 points per axis");
  if (!(grid_half_width > 0.0)) throw ConfigError("grid half width must be positive");
  if (!(params.t_relax > 0.0) || !(params.q > 0.0) || !(params.beta > 0.0) || !std::isfinite(params.alpha))
    throw ConfigError("model parameters need t_R, q, beta > 0 and finite alpha");
  protocol.validate();
  empirical.validate();
  try {
    brownian.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (brownian.impulse < 0.0) throw ConfigError("impulse f must be non-negative");
  if (brownian_trajectories < 2) throw ConfigError("Brownian run needs at least 2 trajectories");
  if (velocity_samples < 1000) throw ConfigError("velocity_samples must be at least 1000");
  for (double q : slice.y0_quantiles)
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("slice quantiles must lie in (0, 1)");
  if (slice.x0_points < 3) throw ConfigError("slice needs at least 3 x0 points");
  if (!(slice.x0_half_width > 0.0)) throw ConfigError("slice half width must be positive");
  if (slice.trajectories < 100) throw ConfigError("slice needs at least 100 trajectories per point");
}

nlohmann::json ExperimentSpec::to_json() const {
  return {{"name", name},
          {"model", {{"t_relax", params.t_relax}, {"q", params.q}, {"alpha", params.alpha}, {"beta", params.beta}}},
          {"tau", tau},
          {"epsilon", epsilon},
          {"tau_grid", tau_grid},
          {"grid", {{"half_width", grid_half_width}, {"points", grid_points}}},
          {"protocol",
           {{"factors", protocol.factors},
            {"relative", protocol.relative},
            {"fit_order", protocol.fit_order},
            {"extrapolation", protocol.extrapolation},
            {"max_reduced_chi2", protocol.max_reduced_chi2}}},
          {"empirical",
           {{"sim", inforesp::to_json(empirical.sim)},
            {"pool_size", empirical.pool_size},
            {"n_conditions", empirical.n_conditions},
            {"conditional_trajectories", empirical.conditional_trajectories},
            {"knn_k", empirical.knn.k},
            {"jackknife_blocks", empirical.knn.jackknife_blocks}}},
          {"brownian",
           {{"mass", brownian.mass},
            {"damping", brownian.damping},
            {"temperature", brownian.temperature},
            {"impulse", brownian.impulse},
            {"pulse_duration", brownian.pulse_duration},
            {"substeps", brownian.substeps},
            {"antithetic", brownian.antithetic},
            {"trajectories", brownian_trajectories},
            {"velocity_samples", velocity_samples}}},
          {"slice",
           {{"y0_quantiles", slice.y0_quantiles},
            {"x0_points", slice.x0_points},
            {"x0_half_width", slice.x0_half_width},
            {"trajectories", slice.trajectories}}}};
}

ExperimentSpec ExperimentSpec::named(const std::string& name) {
  ExperimentSpec s;
  s.name = name;
  if (name == "fig1") {
    s.empirical.pool_size = 100000;
  } else if (name == "fig2" || name == "brownian") {
  } else if (name == "fig_a1") {
    s.tau_grid = default_tau_grid();
  } else if (name == "nonlinear") {
    s.tau_grid = nonlinear_tau_grid();
  } else {
    throw ConfigError("unknown experiment: " + name + " (expected fig1, fig2, fig_a1, nonlinear or brownian)");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Shape counting

int count_local_maxima(std::span<const double> values) {
  if (values.empty()) return 0;
  const std::vector<double> s = smooth(values);
  const double top = *std::max_element(s.begin(), s.end());
  if (!(top > 0.0)) return 0;
  int count = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] < 0.01 * top) continue;
    const bool left = i == 0 || s[i] > s[i - 1];
    const bool right = i + 1 == s.size() || s[i] >= s[i + 1];
    if (left && right) ++count;
  }
  return count;
}

int count_local_maxima(const Matrix& values) {
  const Index R = values.rows(), C = values.cols();
  if (R == 0 || C == 0) return 0;
  Matrix s(R, C);
  for (Index i = 0; i < R; ++i) {
    std::vector<double> row(values.row(i).begin(), values.row(i).end());
    const auto sm = smooth(row);
    for (Index j = 0; j < C; ++j) s(i, j) = sm[std::size_t(j)];
  }
  for (Index j = 0; j < C; ++j) {
    std::vector<double> col(s.col(j).begin(), s.col(j).end());
    const auto sm = smooth(col);
    for (Index i = 0; i < R; ++i) s(i, j) = sm[std::size_t(i)];
  }
  const double top = s.maxCoeff();
  if (!(top > 0.0)) return 0;
  int count = 0;
  for (Index i = 0; i < R; ++i)
    for (Index j = 0; j < C; ++j) {
      if (s(i, j) < 0.01 * top) continue;
      bool is_max = true;
      for (Index di = -1; di <= 1 && is_max; ++di)
        for (Index dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const Index a = i + di, b = j + dj;
          if (a < 0 || a >= R || b < 0 || b >= C) continue;
          // Ties are broken by raster order so that a flat top counts once.
          const bool earlier = di < 0 || (di == 0 && dj < 0);
          if (earlier ? !(s(i, j) > s(a, b)) : !(s(i, j) >= s(a, b))) {
            is_max = false;
            break;
          }
        }
      if (is_max) ++count;
    }
  return count;
}

std::vector<LinearModel> random_stable_models(std::size_t count, std::uint64_t seed) {
  std::vector<LinearModel> out;
  out.reserve(count);
  for (std::size_t m = 0; m < count; ++m) {
    StreamRng rng(seed, m);
    boost::random::normal_distribution<double> normal;
    const Index n = 2 + Index(m % 4);
    Matrix B(n, n), K(n, n), C(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        B(i, j) = normal(rng);
        K(i, j) = normal(rng);
        C(i, j) = normal(rng);
      }
    // Positive-definite symmetric part keeps every eigenvalue in the right half plane.
    const Matrix A = 0.5 * B * B.transpose() / double(n) + 0.3 * (K - K.transpose()) / std::sqrt(double(n)) +
                     0.1 * Matrix::Identity(n, n);
    const Matrix Q = C * C.transpose() / double(n) + 0.05 * Matrix::Identity(n, n);
    out.push_back(LinearModel::make(A, Q, 0, 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Twin-trajectory panels

ValidationReport run_fig1(const ExperimentSpec& spec) {
  spec.validate();
  ValidationReport rep;
  rep.title = "fig1";
  rep.info["spec"] = spec.to_json();
  const SdeModel model = make_quadratic_coupling(spec.params);
  EmpiricalConfig cfg = spec.empirical;
  const std::uint64_t seed = cfg.sim.seed;

  // Trajectory panel: one twin pair from a stationary state.
  SimConfig start = cfg.sim;
  start.seed = sub_seed(seed, 1);
  start.n_trajectories = 1;
  start.record_lags.clear();
  const Ensemble origin = simulate_stationary(model, start);
  const std::vector<double> x_start = origin.initial_states();
  SimConfig twin_cfg = cfg.sim;
  twin_cfg.seed = sub_seed(seed, 2);
  twin_cfg.n_trajectories = 1;
  twin_cfg.burn_in = 0.0;
  const double record_step = 5.0 * cfg.sim.dt;
  const std::size_t n_lags = std::size_t(std::llround(3.0 * spec.params.t_relax / record_step));
  twin_cfg.record_lags.clear();
  for (std::size_t k = 1; k <= n_lags; ++k) twin_cfg.record_lags.push_back(double(k * 5) * cfg.sim.dt);
  const auto [nat, pert] = simulate_twin(model, twin_cfg, x_start, spec.epsilon, model.x_index);
  double worst = 0.0;
  std::vector<std::vector<double>> traj_rows;
  for (std::size_t s = 0; s < nat.slots(); ++s) {
    const double t = s == 0 ? 0.0 : nat.lags[s - 1];
    const double steps = std::round(t / cfg.sim.dt);
    const double predicted = spec.epsilon * std::pow(1.0 - cfg.sim.dt / spec.params.t_relax, steps);
    const double dx = pert.value(0, s, model.x_index) - nat.value(0, s, model.x_index);
    worst = std::max(worst, std::abs(dx - predicted));
    traj_rows.push_back({t, nat.value(0, s, model.x_index), nat.value(0, s, model.y_index),
                         pert.value(0, s, model.x_index), pert.value(0, s, model.y_index)});
  }
  rep.checks.push_back(make_check(
      "twin_pairing", "perturbed minus natural x equals the deterministically decayed shift", 0.0, worst, 1e-10,
      "observed <= tolerance", worst <= 1e-10, {{"recorded_points", nat.slots()}}));

  // Prediction panel: p(y_tau | x0, y0) and its shifted counterpart.
  const Ensemble pool = stationary_pool(model, cfg);
  const auto xs = pool.column(0, model.x_index), ys = pool.column(0, model.y_index);
  const double sx = std::sqrt(variance_of(xs));
  std::vector<double> condition(2);
  condition[std::size_t(model.x_index)] = sx;
  condition[std::size_t(model.y_index)] = quantile_of(ys, 0.5);
  SimConfig cond_cfg = cfg.sim;
  cond_cfg.seed = sub_seed(seed, 3);
  cond_cfg.n_trajectories = cfg.conditional_trajectories;
  cond_cfg.record_lags = {spec.tau};
  const auto [cn, cp] = simulate_twin(model, cond_cfg, condition, spec.epsilon, model.x_index);
  const auto yn = cn.column(1, model.y_index), yp = cp.column(1, model.y_index);
  const KlEstimate d = kl_knn(SampleSet::univariate(yp), SampleSet::univariate(yn), cfg.knn);
  const auto [lo_n, hi_n] = std::minmax_element(yn.begin(), yn.end());
  const auto [lo_p, hi_p] = std::minmax_element(yp.begin(), yp.end());
  const double lo = std::min(*lo_n, *lo_p), hi = std::max(*hi_n, *hi_p);
  const std::size_t U = std::size_t(spec.grid_points);
  SampleSet ygrid(1, std::vector<double>(U));
  for (std::size_t u = 0; u < U; ++u) ygrid.points[u] = lo + (hi - lo) * double(u) / double(U - 1);
  KernelOptions kopt;
  kopt.threads = cfg.sim.threads;
  kopt.bandwidth = silverman_bandwidth(SampleSet::univariate(yn));
  const auto pn = kde_density(SampleSet::univariate(yn), ygrid, kopt);
  const auto pp = kde_density(SampleSet::univariate(yp), ygrid, kopt);

  // Perturbation panel: p(x0 | y0) before and after the shift.
  const std::size_t n_kde = std::min<std::size_t>(pool.count, 200000);
  SampleSet joint(2, pool.initial_states());
  joint.points.resize(2 * n_kde);
  SampleSet xgrid(2, std::vector<double>(4 * U));
  std::vector<double> xg(U);
  for (std::size_t u = 0; u < U; ++u) {
    xg[u] = -spec.grid_half_width * sx + 2.0 * spec.grid_half_width * sx * double(u) / double(U - 1);
    for (std::size_t r = 0; r < 2; ++r) {
      double* row = xgrid.points.data() + 2 * (2 * u + r);
      row[model.x_index] = xg[u] - (r == 1 ? spec.epsilon : 0.0);
      row[model.y_index] = condition[std::size_t(model.y_index)];
    }
  }
  KernelOptions jopt;
  jopt.threads = cfg.sim.threads;
  const auto pj = kde_density(joint, xgrid, jopt);
  double norm = 0.0;
  for (std::size_t u = 0; u + 1 < U; ++u) norm += 0.5 * (pj[2 * u] + pj[2 * u + 2]) * (xg[u + 1] - xg[u]);
  const KlEstimate c = perturbation_divergence(model, spec.epsilon, cfg, &pool);

  rep.info["condition"] = {{"x0", condition[std::size_t(model.x_index)]}, {"y0", condition[std::size_t(model.y_index)]}};
  rep.info["local_response_divergence"] = to_json(d);
  rep.info["perturbation_divergence"] = to_json(c);

  if (!spec.output_dir.empty()) {
    const auto dir = experiment_dir(spec);
    const nlohmann::json params = spec_subset(spec, {"name", "model", "tau", "epsilon", "grid", "empirical"});
    write_csv_file(dir / "trajectories.csv", [&](std::ostream& os) {
      write_table_csv(os, params, {"t", "x", "y", "x_perturbed", "y_perturbed"}, traj_rows);
    });
    std::vector<std::vector<double>> pred_rows, pert_rows;
    for (std::size_t u = 0; u < U; ++u) pred_rows.push_back({ygrid.points[u], pn[u], pp[u]});
    for (std::size_t u = 0; u < U; ++u)
      pert_rows.push_back({xg[u], norm > 0 ? pj[2 * u] / norm : 0.0, norm > 0 ? pj[2 * u + 1] / norm : 0.0});
    nlohmann::json pp_params = params;
    pp_params["condition"] = rep.info["condition"];
    write_csv_file(dir / "prediction.csv", [&](std::ostream& os) {
      write_table_csv(os, pp_params, {"y_tau", "p_natural", "p_perturbed"}, pred_rows);
    });
    write_csv_file(dir / "perturbation.csv", [&](std::ostream& os) {
      write_table_csv(os, pp_params, {"x0", "p_natural", "p_perturbed"}, pert_rows);
    });
    write_json_file(dir / "report.json", rep.to_json());
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Local grids

Fig2Result run_fig2(const ExperimentSpec& spec) {
  spec.validate();
  Fig2Result out;
  out.report.title = "fig2";
  out.report.info["spec"] = spec.to_json();
  const LinearModel lm = hierarchical_ou(spec.params);
  const bool uncoupled = spec.params.alpha == 0.0;

  if (uncoupled) {
    // y relaxes deterministically to 0: its stationary law is a point mass, both measures vanish.
    const double sx = std::sqrt(spec.params.q * spec.params.t_relax / 2.0);
    GridAxes axes{Vector::LinSpaced(spec.grid_points, -spec.grid_half_width * sx, spec.grid_half_width * sx),
                  Vector::LinSpaced(spec.grid_points, -spec.grid_half_width, spec.grid_half_width)};
    const Matrix zero = Matrix::Zero(axes.x0.size(), axes.y0.size());
    out.local_gamma = {axes.x0, axes.y0, zero, GridQuantity::local_gamma};
    out.local_te = {axes.x0, axes.y0, zero, GridQuantity::local_te};
    out.weighted_gamma = {axes.x0, axes.y0, zero, GridQuantity::weighted_local_gamma};
    out.weighted_te = {axes.x0, axes.y0, zero, GridQuantity::weighted_local_te};
    out.report.info["note"] = "alpha = 0: x does not drive y; the stationary density of y is degenerate and omitted";
    out.report.checks.push_back(make_check("uncoupled_zero", "both grids vanish without coupling", 0.0, 0.0, 0.0,
                                           "observed == expected", true));
  } else {
    const GridAxes axes = GridAxes::around_stationary(lm, spec.grid_half_width, spec.grid_points);
    out.local_gamma = local_gamma_grid(lm, spec.tau, axes);
    out.local_te = local_te_grid(lm, spec.tau, axes);
    out.weighted_gamma = local_gamma_grid(lm, spec.tau, axes, true);
    out.weighted_te = local_te_grid(lm, spec.tau, axes, true);
    out.density = stationary_density_grid(lm, axes);

    const double spread = out.local_gamma.values.maxCoeff() - out.local_gamma.values.minCoeff();
    out.report.checks.push_back(make_check("gamma_constant", "local information response is constant in space", 0.0,
                                           spread, 1e-12, "max - min <= tolerance", spread <= 1e-12));
    const double T = transfer_entropy(lm, spec.tau).value;
    const double avg = integrate_trapezoid(out.weighted_te) / integrate_trapezoid(out.density);
    out.report.checks.push_back(
        relative_check("te_average", "density average of local transfer entropy equals T", T, avg, 0.01));
    out.report.checks.push_back(count_check("gamma_weighted_unimodal", "weighted local gamma has one maximum", 1,
                                            count_local_maxima(out.weighted_gamma.values), false));
    out.report.checks.push_back(count_check("te_weighted_bimodal", "weighted local TE has two maxima", 2,
                                            count_local_maxima(out.weighted_te.values), false));
    Index jm = 0, im = 0;
    out.density.values.maxCoeff(&im, &jm);
    const Vector col = out.weighted_te.values.col(jm);
    const std::vector<double> slice(col.begin(), col.end());
    out.report.checks.push_back(count_check("te_weighted_slice_bimodal",
                                            "weighted local TE has two maxima along x0 through the mode", 2,
                                            count_local_maxima(slice), false, {{"y0", out.density.y0(jm)}}));
  }

  if (!spec.output_dir.empty()) {
    const auto dir = experiment_dir(spec);
    const nlohmann::json params = spec_subset(spec, {"name", "model", "tau", "grid"});
    auto emit = [&](const char* file, const LocalGrid& g) {
      write_csv_file(dir / file, [&](std::ostream& os) { write_grid_csv(os, params, g); });
    };
    emit("local_gamma.csv", out.local_gamma);
    emit("local_te.csv", out.local_te);
    emit("weighted_local_gamma.csv", out.weighted_gamma);
    emit("weighted_local_te.csv", out.weighted_te);
    if (!uncoupled) emit("density.csv", out.density);
    write_json_file(dir / "report.json", out.report.to_json());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Curves over tau

FigA1Result run_fig_a1(const ExperimentSpec& spec) {
  spec.validate();
  FigA1Result out;
  out.report.title = "fig_a1";
  out.report.info["spec"] = spec.to_json();
  const LinearModel lm = hierarchical_ou(spec.params);
  std::vector<double> grid = spec.tau_grid.empty() ? default_tau_grid() : spec.tau_grid;
  std::sort(grid.begin(), grid.end());
  for (double t : grid)
    if (!(t > 0.0)) throw ConfigError("tau grid for the curves must be positive");
  if (grid.size() < 3) throw ConfigError("tau grid needs at least 3 points");
  for (double t : grid) out.rows.push_back(linear_summary(lm, t));

  double min_gamma = std::numeric_limits<double>::infinity(), worst_identity = 0.0, worst_order = -1e300;
  double peak = 0.0;
  std::vector<double> ens;
  for (const auto& r : out.rows) {
    min_gamma = std::min(min_gamma, r.gamma);
    // Gamma diverges as tau -> 0, so the residual is scaled by max(1, Gamma) (double precision limit).
    worst_identity = std::max(worst_identity,
                              std::abs(r.gamma - std::expm1(2.0 * r.transfer_entropy)) / std::max(1.0, r.gamma));
    worst_order = std::max(worst_order, r.gamma_ensemble - r.gamma);
    peak = std::max(peak, r.gamma_ensemble);
    ens.push_back(r.gamma_ensemble);
  }
  auto& checks = out.report.checks;
  checks.push_back(make_check("gamma_nonnegative", "Gamma >= 0 on the grid", 0.0, min_gamma, 0.0,
                              "observed >= expected", min_gamma >= 0.0));
  const double gamma_far = out.rows.back().gamma;
  checks.push_back(make_check("gamma_vanishes", "Gamma -> 0 at the largest tau", 0.0, gamma_far, 1e-6,
                              "observed <= tolerance", gamma_far <= 1e-6, {{"tau", grid.back()}}));
  checks.push_back(count_check("ensemble_unimodal", "Gamma~ is unimodal in tau", 1, count_local_maxima(ens), false));
  const double near = ens.front() / peak, far = ens.back() / peak;
  checks.push_back(make_check("ensemble_small_tau", "Gamma~ -> 0 for tau -> 0+ (relative to its peak)", 0.0, near,
                              0.01, "observed <= tolerance", near <= 0.01, {{"tau", grid.front()}}));
  checks.push_back(make_check("ensemble_large_tau", "Gamma~ -> 0 for tau -> infinity (relative to its peak)", 0.0,
                              far, 0.01, "observed <= tolerance", far <= 0.01, {{"tau", grid.back()}}));
  checks.push_back(make_check("ensemble_below_gamma", "Gamma~ <= Gamma pointwise", 0.0, worst_order, 0.0,
                              "max(Gamma~ - Gamma) <= 0", worst_order <= 0.0));
  const LinearSummary s50 = linear_summary(lm, 50.0);
  const double ratio = s50.gamma_ensemble / s50.gamma;
  checks.push_back(make_check("ratio_tau50", "Gamma~ / Gamma at tau = 50", 1.0, ratio, 1e-3,
                              "|observed - expected| <= tolerance", std::abs(ratio - 1.0) <= 1e-3));
  checks.push_back(make_check("gamma_identity", "Gamma = exp(2T) - 1 pointwise", 0.0, worst_identity, 1e-10,
                              "max |Gamma - (exp(2T) - 1)| / max(1, Gamma) <= tolerance", worst_identity <= 1e-10));

  if (!spec.output_dir.empty()) {
    const auto dir = experiment_dir(spec);
    std::vector<std::vector<double>> rows;
    for (const auto& r : out.rows)
      rows.push_back({r.tau, r.gamma, r.gamma_ensemble, r.transfer_entropy, r.mi_yy, r.mi_xy_y});
    write_csv_file(dir / "curves.csv", [&](std::ostream& os) {
      write_table_csv(os, spec_subset(spec, {"name", "model"}),
                      {"tau", "gamma", "gamma_ensemble", "transfer_entropy", "mi_yy", "mi_xy_y"}, rows);
    });
    write_json_file(dir / "report.json", out.report.to_json());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinear model

NonlinearResult run_nonlinear(const ExperimentSpec& spec) {
  spec.validate();
  NonlinearResult out;
  out.report.title = "nonlinear";
  out.report.info["spec"] = spec.to_json();
  out.report.info["noise_parameter"] = "q (labelled D in some figure captions)";
  const SdeModel model = make_quadratic_coupling(spec.params);
  const EmpiricalConfig& cfg = spec.empirical;
  std::vector<double> grid = spec.tau_grid.empty() ? nonlinear_tau_grid() : spec.tau_grid;
  std::erase_if(grid, [](double t) { return !(t > 0.0); });
  if (std::find(grid.begin(), grid.end(), spec.tau) == grid.end()) grid.push_back(spec.tau);
  std::sort(grid.begin(), grid.end());
  const Ensemble pool = stationary_pool(model, cfg, grid);

  const std::vector<double> x0 = pool.column(0, model.x_index), y0 = pool.column(0, model.y_index);
  nlohmann::json granger = nlohmann::json::array();
  for (double tau : grid) {
    NonlinearRow row;
    row.tau = tau;
    const std::size_t slot = pool.slot_of_lag(tau);
    const SampleSet s = SampleSet::from_columns({x0, y0, pool.column(slot, model.y_index)});
    row.te = cmi_knn(s, {0}, {2}, {1}, cfg.knn);
    row.mi_yy = cmi_knn(s, {1}, {2}, {}, cfg.knn);
    const KlEstimate g = granger_te(s, cfg.knn.jackknife_blocks);
    granger.push_back({{"tau", tau}, {"value", g.value}, {"stderr", g.std_error}});
    const double T = row.te.value, I = row.mi_yy.value;
    row.linear_gamma = std::expm1(2.0 * T);
    row.linear_gamma_se = 2.0 * std::exp(2.0 * T) * row.te.std_error;
    row.linear_gamma_ensemble = std::exp(-2.0 * I) * (-std::expm1(-2.0 * T));
    row.linear_gamma_ensemble_se = std::hypot(2.0 * row.linear_gamma_ensemble * row.mi_yy.std_error,
                                              2.0 * std::exp(-2.0 * I - 2.0 * T) * row.te.std_error);
    try {
      row.gamma = information_response_empirical(model, tau, spec.protocol, cfg, &pool);
      row.gamma_ensemble = ensemble_information_response_empirical(model, tau, spec.protocol, cfg, &pool);
    } catch (const Error& e) {
      row.error = e.what();
      row.gamma.value = row.gamma_ensemble.value = std::numeric_limits<double>::quiet_NaN();
    }
    out.rows.push_back(std::move(row));
  }
  out.report.info["granger_te"] = granger;

  auto& checks = out.report.checks;
  const auto at = std::find_if(out.rows.begin(), out.rows.end(), [&](const NonlinearRow& r) { return r.tau == spec.tau; });
  checks.push_back(guarded("violation", "Gamma differs from exp(2T) - 1 beyond the combined error", [&] {
    if (!at->error.empty()) throw NumericalError(at->error);
    const double se = std::hypot(at->gamma.std_error, at->linear_gamma_se);
    const double z = std::abs(at->gamma.value - at->linear_gamma) / se;
    nlohmann::json d = {{"tau", spec.tau},
                        {"gamma", at->gamma.value},
                        {"gamma_stderr", at->gamma.std_error},
                        {"exp2T_minus_1", at->linear_gamma},
                        {"exp2T_minus_1_stderr", at->linear_gamma_se},
                        {"transfer_entropy", at->te.value},
                        {"transfer_entropy_stderr", at->te.std_error},
                        {"combined_stderr", se}};
    if (!(z > 3.0)) d["statistical_power"] = "insufficient: combined stderr too large to resolve a violation";
    return make_check("", "", 0.0, z, 3.0, "|Gamma - (exp(2T) - 1)| / combined stderr > tolerance", z > 3.0, d);
  }));
  checks.push_back(guarded("ladder_quadratic", "epsilon ladder stays in the quadratic regime", [&] {
    if (!at->error.empty()) throw NumericalError(at->error);
    double worst = 0.0;
    for (const char* key : {"fit_numerator", "fit_denominator"}) {
      const auto& f = at->gamma.metadata.at(key);
      worst = std::max(worst, std::abs(f.at("lower_coeff").get<double>()) / f.at("lower_coeff_stderr").get<double>());
    }
    return make_check("", "", 0.0, worst, 3.0, "max |lower-order coefficient| / stderr <= tolerance", worst <= 3.0,
                      {{"fit_numerator", at->gamma.metadata.at("fit_numerator")},
                       {"fit_denominator", at->gamma.metadata.at("fit_denominator")}});
  }));

  // Local slices at fixed y0.
  const double sx = std::sqrt(variance_of(x0));
  std::vector<double> xg(std::size_t(spec.slice.x0_points));
  for (std::size_t i = 0; i < xg.size(); ++i)
    xg[i] = spec.slice.x0_half_width * sx * (-1.0 + 2.0 * double(i) / double(xg.size() - 1));
  std::vector<double> quantiles = spec.slice.y0_quantiles;
  std::sort(quantiles.begin(), quantiles.end());
  for (double q : quantiles)
    out.slices.push_back(
        local_measures_slice(model, spec.tau, quantile_of(y0, q), xg, spec.epsilon, spec.slice.trajectories, cfg, &pool));
  if (!out.slices.empty()) {
    const LocalSlice& top = out.slices.back();
    const int te_max = count_local_maxima(top.weighted_te()), d_max = count_local_maxima(top.weighted_d());
    checks.push_back(count_check("slice_te_peaks", "weighted local TE at large y0 has at least 3 maxima", 3, te_max,
                                 true, {{"y0", top.y0}, {"quantile", quantiles.back()}}));
    checks.push_back(count_check("slice_d_bimodal", "weighted local response divergence is bimodal in x0", 2, d_max,
                                 false, {{"y0", top.y0}, {"quantile", quantiles.back()}}));
  }

  if (!spec.output_dir.empty()) {
    const auto dir = experiment_dir(spec);
    const nlohmann::json params =
        spec_subset(spec, {"name", "model", "tau", "epsilon", "tau_grid", "protocol", "empirical", "slice"});
    std::vector<std::vector<double>> rows;
    for (const auto& r : out.rows)
      rows.push_back({r.tau, r.gamma.value, r.gamma.std_error, r.gamma_ensemble.value, r.gamma_ensemble.std_error,
                      r.te.value, r.te.std_error, r.mi_yy.value, r.mi_yy.std_error, r.linear_gamma, r.linear_gamma_se,
                      r.linear_gamma_ensemble, r.linear_gamma_ensemble_se});
    write_csv_file(dir / "curves.csv", [&](std::ostream& os) {
      write_table_csv(os, params,
                      {"tau", "gamma", "gamma_stderr", "gamma_ensemble", "gamma_ensemble_stderr", "transfer_entropy",
                       "transfer_entropy_stderr", "mi_yy", "mi_yy_stderr", "linear_gamma", "linear_gamma_stderr",
                       "linear_gamma_ensemble", "linear_gamma_ensemble_stderr"},
                      rows);
    });
    if (at->error.empty())
      write_csv_file(dir / "ladder.csv", [&](std::ostream& os) {
        write_parameter_comments(os, params);
        write_ladder_csv(os, at->gamma);
      });
    for (std::size_t k = 0; k < out.slices.size(); ++k) {
      const LocalSlice& s = out.slices[k];
      nlohmann::json p = params;
      p["slice"]["y0"] = s.y0;
      p["slice"]["quantile"] = quantiles[k];
      std::vector<std::vector<double>> srows;
      const auto wt = s.weighted_te(), wd = s.weighted_d();
      for (std::size_t i = 0; i < s.x0.size(); ++i)
        srows.push_back({s.x0[i], s.density[i], s.local_te[i], wt[i], s.local_d[i], wd[i]});
      write_csv_file(dir / ("slice_" + std::to_string(k) + ".csv"), [&](std::ostream& os) {
        write_table_csv(os, p, {"x0", "density", "local_te", "weighted_te", "local_d", "weighted_d"}, srows);
      });
    }
    nlohmann::json full = out.report.to_json();
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : out.rows)
      rows_json.push_back({{"tau", r.tau},
                           {"gamma", to_json(r.gamma)},
                           {"gamma_ensemble", to_json(r.gamma_ensemble)},
                           {"transfer_entropy", to_json(r.te)},
                           {"mi_yy", to_json(r.mi_yy)},
                           {"linear_gamma", r.linear_gamma},
                           {"linear_gamma_ensemble", r.linear_gamma_ensemble},
                           {"error", r.error}});
    full["rows"] = rows_json;
    write_json_file(dir / "report.json", full);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Brownian particle

ValidationReport run_brownian(const ExperimentSpec& spec) {
  spec.validate();
  ValidationReport rep;
  rep.title = "brownian";
  rep.info["spec"] = spec.to_json();
  const BrownianParams& p = spec.brownian;
  SimConfig sim = spec.empirical.sim;
  sim.seed = sub_seed(spec.empirical.sim.seed, 1);
  sim.n_trajectories = spec.brownian_trajectories + (p.antithetic ? spec.brownian_trajectories % 2 : 0);
  const BrownianRun run = simulate_brownian_particle(p, sim);
  const double mean_w = mean_of(run.work), var_w = variance_of(run.work);

  const SdeModel vm = make_linear_sde(brownian_velocity_model(p), "velocity");
  SimConfig vs = spec.empirical.sim;
  vs.seed = sub_seed(spec.empirical.sim.seed, 2);
  vs.n_trajectories = spec.velocity_samples;
  vs.record_lags.clear();
  const Ensemble velocities = simulate_stationary(vm, vs);
  const KlEstimate cv = perturbation_divergence(SampleSet::univariate(velocities.column(0, 0)),
                                                p.impulse / p.mass, 0, spec.empirical.knn);

  const double f = p.impulse, m = p.mass, T = p.temperature;
  rep.checks.push_back(relative_check("work_mean", "<W> = f^2 / (2m)", f * f / (2.0 * m), mean_w, 0.02,
                                      {{"stderr", std::sqrt(var_w / double(run.work.size()))}}));
  rep.checks.push_back(relative_check("work_variance", "var(W) = 2 <W> T", 2.0 * mean_w * T, var_w, 0.05));
  rep.checks.push_back(relative_check("perturbation_cost", "c_v(f / m) = <W> / T", mean_w / T, cv.value, 0.05,
                                      {{"estimate", to_json(cv)}, {"closed_form", m * (f / m) * (f / m) / (2.0 * T)}}));
  rep.info["trajectories"] = run.work.size();
  if (!spec.output_dir.empty()) {
    const auto dir = experiment_dir(spec);
    write_csv_file(dir / "work.csv", [&](std::ostream& os) {
      std::vector<std::vector<double>> rows;
      for (std::size_t i = 0; i < run.work.size(); ++i) rows.push_back({run.v0[i], run.v_end[i], run.work[i]});
      write_table_csv(os, spec_subset(spec, {"name", "brownian", "empirical"}), {"v0", "v_end", "work"}, rows);
    });
    write_json_file(dir / "report.json", rep.to_json());
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Validation suite

void Tolerances::validate() const {
  const double all[] = {lyapunov_analytic, lyapunov_mc_rel, variance_identity_rel, gamma_identity_abs,
                        gamma_empirical_rel, local_te_min_abs, grid_average_rel, ensemble_identity_abs,
                        long_tau_ratio_abs, violation_sigmas, work_mean_rel, work_var_rel, cv_rel, frt_rel,
                        bound_sigmas, kl_sigmas, kl_stderr_rel};
  for (double t : all)
    if (!(t >= 0.0) || !std::isfinite(t)) throw ConfigError("tolerances must be finite and non-negative");
}

nlohmann::json Tolerances::to_json() const {
  return {{"lyapunov_analytic", lyapunov_analytic},   {"lyapunov_mc_rel", lyapunov_mc_rel},
          {"variance_identity_rel", variance_identity_rel}, {"gamma_identity_abs", gamma_identity_abs},
          {"gamma_empirical_rel", gamma_empirical_rel}, {"local_te_min_abs", local_te_min_abs},
          {"grid_average_rel", grid_average_rel},     {"ensemble_identity_abs", ensemble_identity_abs},
          {"long_tau_ratio_abs", long_tau_ratio_abs}, {"violation_sigmas", violation_sigmas},
          {"work_mean_rel", work_mean_rel},           {"work_var_rel", work_var_rel},
          {"cv_rel", cv_rel},                         {"frt_rel", frt_rel},
          {"bound_sigmas", bound_sigmas},             {"kl_sigmas", kl_sigmas},
          {"kl_stderr_rel", kl_stderr_rel}};
}

void SuiteConfig::validate() const {
  tolerances.validate();
  if (random_models == 0) throw ConfigError("random_models must be positive");
}

namespace {

struct Sweep {
  std::vector<double> taus{0.5, 1.0, 3.0, 10.0};
  std::vector<LinearModel> models;
};

Check lyapunov_check(const SuiteConfig& cfg) {
  const Tolerances& tol = cfg.tolerances;
  const LinearModel ou = LinearModel::univariate(0.1, 0.1);
  const double analytic = solve_lyapunov(ou)(0, 0);
  SimConfig sim;
  sim.seed = sub_seed(cfg.seed, 1);
  sim.n_trajectories = 100000;
  sim.threads = cfg.threads;
  const Ensemble e = simulate_stationary(make_univariate_ou(0.1, 0.1), sim);
  const double mc = variance_of(e.column(0, 0));
  const bool ok_a = std::abs(analytic - 0.5) <= tol.lyapunov_analytic;
  const bool ok_mc = std::abs(mc - 0.5) <= tol.lyapunov_mc_rel * 0.5;
  return make_check("", "", 0.5, mc, tol.lyapunov_mc_rel, "|observed - expected| <= tolerance * expected", ok_a && ok_mc,
                    {{"analytic", analytic},
                     {"analytic_error", std::abs(analytic - 0.5)},
                     {"analytic_tolerance", tol.lyapunov_analytic},
                     {"trajectories", sim.n_trajectories}});
}

template <class F>
double max_over_sweep(const Sweep& sw, const LinearModel& base, F&& f) {
  double worst = 0.0;
  for (double tau : sw.taus) {
    worst = std::max(worst, f(base, tau));
    for (const auto& m : sw.models) worst = std::max(worst, f(m, tau));
  }
  return worst;
}

Check local_te_check(const SuiteConfig& cfg, const Fig2Result& fig2, const LinearModel& lm, double tau) {
  const Tolerances& tol = cfg.tolerances;
  const double T = transfer_entropy(lm, tau).value;
  const double predicted = 0.5 * (std::exp(-2.0 * T) + 2.0 * T - 1.0);
  const Matrix S = solve_lyapunov(lm);
  const double sx = std::sqrt(S(0, 0)), sy = std::sqrt(S(1, 1));
  double worst = 0.0;
  nlohmann::json minima = nlohmann::json::array();
  for (double k : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
    const double y0 = k * sy;
    const auto [x_min, t_min] = boost::math::tools::brent_find_minima(
        [&](double x) { return local_transfer_entropy(lm, tau, x, y0); }, -8.0 * sx, 8.0 * sx, 52);
    worst = std::max(worst, std::abs(t_min - predicted));
    minima.push_back({{"y0", y0}, {"x0_min", x_min}, {"t_min", t_min}});
  }
  const double avg = integrate_trapezoid(fig2.weighted_te) / integrate_trapezoid(fig2.density);
  const bool ok_avg = std::abs(avg - T) <= tol.grid_average_rel * T;
  return make_check("", "", predicted, predicted + worst, tol.local_te_min_abs,
                    "|observed - expected| <= tolerance", worst <= tol.local_te_min_abs && ok_avg,
                    {{"minima", minima},
                     {"transfer_entropy", T},
                     {"grid_average", avg},
                     {"grid_average_rel_error", std::abs(avg - T) / T},
                     {"grid_average_tolerance", tol.grid_average_rel}});
}

Check kl_calibration_check(const SuiteConfig& cfg) {
  const Tolerances& tol = cfg.tolerances;
  struct Pair {
    const char* name;
    double mp, vp, mq, vq;
  };
  const Pair pairs[] = {{"same", 0.0, 1.0, 0.0, 1.0}, {"shift", 0.25, 0.5, 0.0, 0.5}, {"scale", 0.0, 2.0, 0.0, 1.0}};
  const std::size_t N = 100000;
  const std::uint64_t seed = sub_seed(cfg.seed, 11);
  double worst_z = 0.0, worst_rel_se = 0.0;
  nlohmann::json rows = nlohmann::json::array();
  std::uint64_t stream = 0;
  KnnOptions knn;
  knn.threads = cfg.threads;
  for (const Pair& pr : pairs) {
    const GaussianDist p{Vector::Constant(1, pr.mp), Matrix::Constant(1, 1, pr.vp)};
    const GaussianDist q{Vector::Constant(1, pr.mq), Matrix::Constant(1, 1, pr.vq)};
    const double truth = gaussian_kl(p, q);
    const KlEstimate est = kl_knn(SampleSet::univariate(normal_draws(seed, stream, N, pr.mp, pr.vp)),
                                  SampleSet::univariate(normal_draws(seed, stream + 1, N, pr.mq, pr.vq)), knn);
    stream += 2;
    const double z = std::abs(est.value - truth) / est.std_error;
    worst_z = std::max(worst_z, z);
    if (truth > 0.0) worst_rel_se = std::max(worst_rel_se, est.std_error / truth);
    rows.push_back({{"pair", pr.name}, {"truth", truth}, {"estimate", est.value}, {"stderr", est.std_error}, {"z", z}});
  }
  return make_check("", "", 0.0, worst_z, tol.kl_sigmas, "max |estimate - truth| / stderr <= tolerance",
                    worst_z <= tol.kl_sigmas && worst_rel_se < tol.kl_stderr_rel,
                    {{"pairs", rows},
                     {"samples", N},
                     {"max_stderr_over_truth", worst_rel_se},
                     {"stderr_tolerance", tol.kl_stderr_rel}});
}

/// Small end-to-end pipeline rerun with different thread counts; results must agree bit for bit.
Check determinism_check(const SuiteConfig& cfg) {
  auto probe = [&](unsigned threads) {
    const SdeModel model = make_hierarchical_ou();
    EmpiricalConfig ec;
    ec.sim.seed = sub_seed(cfg.seed, 12);
    ec.sim.threads = threads;
    ec.pool_size = 4000;
    ec.n_conditions = 8;
    ec.conditional_trajectories = 1000;
    ec.knn.threads = threads;
    EpsilonProtocol protocol;
    protocol.max_reduced_chi2 = 1e12;
    const Ensemble pool = stationary_pool(model, ec, {1.0});
    nlohmann::json j;
    j["gamma"] = to_json(information_response_empirical(model, 1.0, protocol, ec, &pool));
    j["frt"] = to_json(classical_frt_check(model, 1.0, protocol, ec, &pool));
    BrownianParams bp;
    SimConfig bs = ec.sim;
    bs.n_trajectories = 2000;
    const BrownianRun br = simulate_brownian_particle(bp, bs);
    j["work"] = br.work;
    return j.dump();
  };
  const std::string a = probe(1), b = probe(4), c = probe(1);
  const int mismatches = int(a != b) + int(a != c);
  return make_check("", "", 0.0, mismatches, 0.0, "observed == expected", mismatches == 0,
                    {{"runs", 3}, {"thread_counts", {1, 4, 1}}, {"bytes", a.size()}});
}

}  // namespace

ValidationReport run_validation_suite(const SuiteConfig& cfg) {
  cfg.validate();
  const Tolerances& tol = cfg.tolerances;
  ValidationReport rep;
  rep.title = "validation";
  rep.info["seed"] = cfg.seed;
  rep.info["tolerances"] = tol.to_json();
  rep.info["random_models"] = cfg.random_models;

  const OuParams params;
  const LinearModel lm = hierarchical_ou(params);
  Sweep sweep;
  sweep.models = random_stable_models(cfg.random_models, sub_seed(cfg.seed, 2));
  const double tau = 3.0;

  ExperimentSpec base = ExperimentSpec::named("fig2");
  base.empirical.sim.threads = cfg.threads;
  base.empirical.knn.threads = cfg.threads;
  const Fig2Result fig2 = run_fig2(base);

  rep.checks.push_back(guarded("C1", "Lyapunov stationary variance of the 1D OU process", [&] {
    return lyapunov_check(cfg);
  }));

  rep.checks.push_back(guarded("C2", "conditional variance identity", [&] {
    const double worst = max_over_sweep(sweep, lm, [](const LinearModel& m, double t) {
      return std::abs(variance_identity_residual(m, t)) / linear_summary(m, t).var_y_given_yz;
    });
    return make_check("", "", 0.0, worst, tol.variance_identity_rel, "max |residual| / var(y_tau | y0) <= tolerance",
                      worst < tol.variance_identity_rel, {{"taus", sweep.taus}, {"models", sweep.models.size() + 1}});
  }));

  rep.checks.push_back(guarded("C3", "Gamma = exp(2T) - 1 (analytic)", [&] {
    const double worst = max_over_sweep(sweep, lm, [](const LinearModel& m, double t) {
      const LinearSummary s = linear_summary(m, t);
      return std::abs(s.gamma - std::expm1(2.0 * s.transfer_entropy));
    });
    return make_check("", "", 0.0, worst, tol.gamma_identity_abs, "max |Gamma - (exp(2T) - 1)| <= tolerance",
                      worst < tol.gamma_identity_abs);
  }));

  // Shared stationary pool of the linear model with y recorded at tau.
  EmpiricalConfig lin_cfg;
  lin_cfg.sim.seed = sub_seed(cfg.seed, 4);
  lin_cfg.sim.threads = cfg.threads;
  lin_cfg.knn.threads = cfg.threads;
  const EpsilonProtocol protocol;
  std::optional<Ensemble> lin_pool;
  try {
    lin_pool = stationary_pool(make_hierarchical_ou(params), lin_cfg, {tau});
  } catch (const std::exception&) {
  }
  const SdeModel lin_model = make_hierarchical_ou(params);

  rep.checks.push_back(guarded("C4", "empirical Gamma matches analytic Gamma (linear model)", [&] {
    if (!lin_pool) throw NumericalError("stationary pool of the linear model could not be simulated");
    const MeasureResult emp = information_response_empirical(lin_model, tau, protocol, lin_cfg, &*lin_pool);
    const double analytic = information_response(lm, tau).value;
    return relative_check("", "", analytic, emp.value, tol.gamma_empirical_rel,
                          {{"stderr", emp.std_error}, {"tau", tau}, {"empirical", to_json(emp)}});
  }));

  rep.checks.push_back(guarded("C5", "local transfer entropy minimum and density average", [&] {
    return local_te_check(cfg, fig2, lm, tau);
  }));

  rep.checks.push_back(guarded("C6", "ensemble information response identity and bounds", [&] {
    double lo = 1e300, hi = -1e300;
    const double worst = max_over_sweep(sweep, lm, [&](const LinearModel& m, double t) {
      const LinearSummary s = linear_summary(m, t);
      lo = std::min(lo, s.gamma_ensemble);
      hi = std::max(hi, s.gamma_ensemble);
      return std::abs(s.gamma_ensemble - std::exp(-2.0 * s.mi_yy) * (-std::expm1(-2.0 * s.transfer_entropy)));
    });
    std::vector<double> curve;
    for (double t : default_tau_grid()) {
      const double g = linear_summary(lm, t).gamma_ensemble;
      curve.push_back(g);
      lo = std::min(lo, g);
      hi = std::max(hi, g);
    }
    const int peaks = count_local_maxima(curve);
    const LinearSummary s50 = linear_summary(lm, 50.0);
    const double ratio = s50.gamma_ensemble / s50.gamma;
    nlohmann::json d = {{"min_gamma_ensemble", lo},
                        {"max_gamma_ensemble", hi},
                        {"ratio_tau50", ratio},
                        {"ratio_tolerance", tol.long_tau_ratio_abs},
                        {"maxima_on_default_grid", peaks}};
    if (lin_pool) {
      try {
        d["empirical_tau3"] = to_json(ensemble_information_response_empirical(lin_model, tau, protocol, lin_cfg, &*lin_pool));
        d["analytic_tau3"] = linear_summary(lm, tau).gamma_ensemble;
      } catch (const Error& e) {
        d["empirical_tau3_error"] = e.what();
      }
    }
    const bool pass = worst < tol.ensemble_identity_abs && lo >= 0.0 && hi <= 1.0 &&
                      std::abs(ratio - 1.0) <= tol.long_tau_ratio_abs && peaks == 1;
    return make_check("", "", 0.0, worst, tol.ensemble_identity_abs,
                      "max |Gamma~ - exp(-2I)(1 - exp(-2T))| <= tolerance, with bounds, ratio and unimodality in details",
                      pass, d);
  }));

  EmpiricalConfig quad_cfg = lin_cfg;
  quad_cfg.sim.seed = sub_seed(cfg.seed, 7);
  const SdeModel quad = make_quadratic_coupling(params);
  std::optional<Ensemble> quad_pool;
  try {
    quad_pool = stationary_pool(quad, quad_cfg, {tau});
  } catch (const std::exception&) {
  }

  rep.checks.push_back(guarded("C7", "nonlinear model violates Gamma = exp(2T) - 1", [&] {
    if (!quad_pool) throw NumericalError("stationary pool of the nonlinear model could not be simulated");
    const MeasureResult g = information_response_empirical(quad, tau, protocol, quad_cfg, &*quad_pool);
    const SampleSet s = SampleSet::from_columns({quad_pool->column(0, quad.x_index), quad_pool->column(0, quad.y_index),
                                                 quad_pool->column(quad_pool->slot_of_lag(tau), quad.y_index)});
    const KlEstimate te = cmi_knn(s, {0}, {2}, {1}, quad_cfg.knn);
    const double lin = std::expm1(2.0 * te.value), lin_se = 2.0 * std::exp(2.0 * te.value) * te.std_error;
    const double se = std::hypot(g.std_error, lin_se);
    const double z = std::abs(g.value - lin) / se;
    return make_check("", "", 0.0, z, tol.violation_sigmas, "|Gamma - (exp(2T) - 1)| / combined stderr > tolerance",
                      z > tol.violation_sigmas,
                      {{"gamma", g.value},
                       {"gamma_stderr", g.std_error},
                       {"transfer_entropy", te.value},
                       {"transfer_entropy_stderr", te.std_error},
                       {"exp2T_minus_1", lin},
                       {"exp2T_minus_1_stderr", lin_se},
                       {"combined_stderr", se}});
  }));

  rep.checks.push_back(guarded("C8", "Brownian particle: work, its variance and the perturbation cost", [&] {
    ExperimentSpec b = ExperimentSpec::named("brownian");
    b.empirical.sim.seed = sub_seed(cfg.seed, 8);
    b.empirical.sim.threads = cfg.threads;
    b.empirical.knn.threads = cfg.threads;
    const ValidationReport br = run_brownian(b);
    nlohmann::json subs = nlohmann::json::array();
    for (const auto& c : br.checks) subs.push_back(to_json(c));
    const Check& w = br.checks.front();
    return make_check("", "", w.expected, w.observed, tol.work_mean_rel,
                      "all three relative deviations within their tolerances (details)",
                      std::abs(br.checks[0].observed - br.checks[0].expected) <= tol.work_mean_rel * br.checks[0].expected &&
                          std::abs(br.checks[1].observed - br.checks[1].expected) <= tol.work_var_rel * br.checks[1].expected &&
                          std::abs(br.checks[2].observed - br.checks[2].expected) <= tol.cv_rel * br.checks[2].expected,
                      {{"checks", subs}, {"trajectories", br.info["trajectories"]}});
  }));

  std::optional<FrtReport> frt_lin, frt_quad;
  std::string frt_lin_error, frt_quad_error;
  try {
    if (lin_pool) frt_lin = classical_frt_check(lin_model, tau, protocol, lin_cfg, &*lin_pool);
  } catch (const std::exception& e) {
    frt_lin_error = e.what();
  }
  try {
    if (quad_pool) frt_quad = classical_frt_check(quad, tau, protocol, quad_cfg, &*quad_pool);
  } catch (const std::exception& e) {
    frt_quad_error = e.what();
  }

  rep.checks.push_back(guarded("C9", "classical fluctuation-response theorem (linear model)", [&] {
    if (!frt_lin) throw NumericalError("FRT run failed: " + frt_lin_error);
    return make_check("", "", 0.0, frt_lin->relative_discrepancy, tol.frt_rel,
                      "|slope - correlation| / |correlation| <= tolerance",
                      frt_lin->relative_discrepancy <= tol.frt_rel, to_json(*frt_lin));
  }));

  rep.checks.push_back(guarded("C10", "linear fluctuation-response inequality on every ladder rung", [&] {
    if (!frt_lin) throw NumericalError("FRT run failed: " + frt_lin_error);
    if (!frt_quad) throw NumericalError("FRT run failed: " + frt_quad_error);
    double worst = -1e300;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto* r : {&*frt_lin, &*frt_quad})
      for (const auto& row : r->rows) {
        const double lhs = row.response * row.response / (2.0 * r->sigma_y_tau * r->sigma_y_tau);
        const double z = (lhs - row.divergence) / row.divergence_se;
        worst = std::max(worst, z);
        rows.push_back({{"tau", r->tau}, {"epsilon", row.epsilon}, {"response", row.response},
                        {"bound", row.bound}, {"z", z}});
      }
    return make_check("", "", 0.0, worst, tol.bound_sigmas,
                      "max (response^2 / (2 var(y_tau)) - divergence) / stderr <= tolerance", worst <= tol.bound_sigmas,
                      {{"rows", rows}});
  }));

  rep.checks.push_back(guarded("C11", "k-NN divergence calibration on Gaussian pairs", [&] { return kl_calibration_check(cfg); }));

  rep.checks.push_back(guarded("C12", "bit-identical reruns across thread counts", [&] { return determinism_check(cfg); }));

  rep.checks.push_back(guarded("C13", "shape of weighted local grids and nonlinear slice", [&] {
    const int gamma_peaks = count_local_maxima(fig2.weighted_gamma.values);
    const int te_peaks = count_local_maxima(fig2.weighted_te.values);
    if (!quad_pool) throw NumericalError("stationary pool of the nonlinear model could not be simulated");
    const std::vector<double> xs = quad_pool->column(0, quad.x_index);
    const double sx = std::sqrt(variance_of(xs));
    const SliceSettings ss;
    std::vector<double> xg(std::size_t(ss.x0_points));
    for (std::size_t i = 0; i < xg.size(); ++i) xg[i] = ss.x0_half_width * sx * (-1.0 + 2.0 * double(i) / double(xg.size() - 1));
    const double y0 = quantile_of(quad_pool->column(0, quad.y_index), ss.y0_quantiles.back());
    const LocalSlice slice = local_measures_slice(quad, tau, y0, xg, base.epsilon, ss.trajectories, quad_cfg, &*quad_pool);
    const int slice_peaks = count_local_maxima(slice.weighted_te());
    return make_check("", "", 2.0, te_peaks, 0.0, "TE grid == 2, gamma grid == 1, nonlinear slice >= 3 (details)",
                      te_peaks == 2 && gamma_peaks == 1 && slice_peaks >= 3,
                      {{"weighted_te_maxima", te_peaks},
                       {"weighted_gamma_maxima", gamma_peaks},
                       {"nonlinear_slice_maxima", slice_peaks},
                       {"nonlinear_slice_y0", y0}});
  }));

  if (!cfg.output_dir.empty()) {
    const auto dir = ensure_output_dir(cfg.output_dir / "validate");
    write_json_file(dir / "report.json", rep.to_json());
  }
  return rep;
}

}  // namespace inforesp
