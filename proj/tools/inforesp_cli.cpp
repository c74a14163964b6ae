// inforesp: command-line front end for the analytic measures, the Monte Carlo pipeline and the
// canned experiments. Exit codes: 0 ok, 1 failed checks, 2 usage or config error, 3 numerical failure.

#include "inforesp/errors.hpp"
#include "inforesp/estimators.hpp"
#include "inforesp/experiments.hpp"
#include "inforesp/measures_analytic.hpp"
#include "inforesp/measures_empirical.hpp"
#include "inforesp/sde_engine.hpp"
#include "inforesp/serialization.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

using namespace inforesp;

namespace {

constexpr int kExitOk = 0, kExitChecks = 1, kExitUsage = 2, kExitNumerical = 3;

struct Options {
  bool json = false;
  unsigned threads = 0;
  std::uint64_t seed = 1;
  std::string out = "out";

  std::string model;
  std::string matrix_a, matrix_q;
  Index x_index = 0, y_index = 1;
  OuParams params;
  double ou_rate = 0.1;

  std::string tau_spec = "3";
  double epsilon = 0.25;
  std::vector<double> ladder;
  bool absolute_ladder = false;
  std::string measure = "gamma";
  std::size_t pool_size = 400000, conditions = 64, trajectories = 10000, k = 5;
  double dt = 0.01;
  double burn_in = -1.0;

  std::string quantity = "weighted_local_te";
  Index points = 201;
  double half_width = 4.0;

  std::string figure;

  BrownianParams brownian;
  std::size_t brownian_n = 100000;

  std::vector<std::string> tolerance_overrides;
  std::size_t random_models = 100;
};

Matrix parse_matrix(const std::string& text, const char* what) {
  // Rows separated by ';', entries by ',' or whitespace.
  std::vector<std::vector<double>> rows;
  std::stringstream rs(text);
  std::string row;
  while (std::getline(rs, row, ';')) {
    for (char& c : row)
      if (c == ',') c = ' ';
    std::stringstream es(row);
    std::vector<double> r;
    std::string tok;
    while (es >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) throw ConfigError(std::string("bad number in matrix ") + what + ": " + tok);
      r.push_back(v);
    }
    if (!r.empty()) rows.push_back(r);
  }
  if (rows.empty()) throw ConfigError(std::string("empty matrix ") + what);
  Matrix M(Index(rows.size()), Index(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw ConfigError(std::string("ragged matrix ") + what);
    for (std::size_t j = 0; j < rows[i].size(); ++j) M(Index(i), Index(j)) = rows[i][j];
  }
  return M;
}

/// "a:b:step" (inclusive), or a comma-separated list.
std::vector<double> parse_tau(const std::string& spec) {
  std::vector<double> out;
  auto num = [](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw ConfigError("bad tau value: '" + s + "'");
    return v;
  };
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string p;
    while (std::getline(ss, p, ':')) parts.push_back(p);
    if (parts.size() != 3) throw ConfigError("tau range must be start:stop:step");
    const double a = num(parts[0]), b = num(parts[1]), h = num(parts[2]);
    if (!(h > 0.0) || b < a) throw ConfigError("tau range needs step > 0 and stop >= start");
    const auto n = std::size_t(std::floor((b - a) / h + 1e-9)) + 1;
    for (std::size_t i = 0; i < n; ++i) out.push_back(a + h * double(i));
  } else {
    std::stringstream ss(spec);
    std::string p;
    while (std::getline(ss, p, ',')) out.push_back(num(p));
  }
  if (out.empty()) throw ConfigError("empty tau list");
  return out;
}

SdeModel build_model(const Options& o) {
  if (o.model.empty()) throw ConfigError("no model selected (--model ou1 | ou2 | quad | linear)");
  if (o.model == "ou2") return make_hierarchical_ou(o.params);
  if (o.model == "quad") return make_quadratic_coupling(o.params);
  if (o.model == "ou1") return make_univariate_ou(o.ou_rate, o.params.q);
  if (o.model == "linear") {
    if (o.matrix_a.empty() || o.matrix_q.empty()) throw ConfigError("model 'linear' needs --A and --Q");
    return make_linear_sde(LinearModel::make(parse_matrix(o.matrix_a, "A"), parse_matrix(o.matrix_q, "Q"),
                                             o.x_index, o.y_index));
  }
  throw ConfigError("unknown model: " + o.model);
}

LinearModel require_linear(const SdeModel& m) {
  if (!m.linear) throw ConfigError("analytic path requires linear model (got '" + m.name + "')");
  return *m.linear;
}

EmpiricalConfig empirical_config(const Options& o) {
  EmpiricalConfig c;
  c.sim.dt = o.dt;
  c.sim.seed = o.seed;
  c.sim.threads = o.threads;
  if (o.burn_in >= 0.0) c.sim.burn_in = o.burn_in;
  c.pool_size = o.pool_size;
  c.n_conditions = o.conditions;
  c.conditional_trajectories = o.trajectories;
  c.knn.k = o.k;
  c.knn.threads = o.threads;
  c.validate();
  return c;
}

EpsilonProtocol protocol_of(const Options& o) {
  EpsilonProtocol p;
  if (!o.ladder.empty()) p.factors = o.ladder;
  p.relative = !o.absolute_ladder;
  p.validate();
  return p;
}

void print_report(const ValidationReport& rep, bool json) {
  if (json) {
    std::cout << rep.to_json().dump(2) << '\n';
    return;
  }
  std::cout << rep.title << ": " << (rep.passed() ? "PASS" : "FAIL") << '\n';
  for (const auto& c : rep.checks)
    std::cout << "  " << (c.pass ? "pass" : "FAIL") << "  " << std::left << std::setw(28) << c.id << " "
              << c.name << "  (observed " << format_double(c.observed) << ", expected " << format_double(c.expected)
              << ", tolerance " << format_double(c.tolerance) << ")\n";
}

std::string monotonicity(const std::vector<double>& taus, const std::vector<double>& v) {
  bool inc = true, dec = true;
  double prev_t = 0.0, prev = 0.0;
  bool have = false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(taus[i] > 0.0)) continue;
    if (have) {
      if (!(taus[i] > prev_t)) return "unsorted";
      if (v[i] < prev) inc = false;
      if (v[i] > prev) dec = false;
    }
    prev_t = taus[i];
    prev = v[i];
    have = true;
  }
  return inc ? "increasing" : dec ? "decreasing" : "non-monotone";
}

int cmd_analytic(const Options& o) {
  const SdeModel m = build_model(o);
  const LinearModel lm = require_linear(m);
  const std::vector<double> taus = parse_tau(o.tau_spec);
  const std::vector<std::string> header{"tau", "gamma", "transfer_entropy", "gamma_ensemble", "mi_yy", "mi_xy_y"};
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<double>> cols(header.size() - 1);
  // The response measures vanish for tau < 0; the lagged mutual informations are left undefined there.
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (double t : taus) {
    std::vector<double> r{t,
                          information_response(lm, t).value,
                          transfer_entropy(lm, t).value,
                          ensemble_information_response(lm, t).value,
                          t < 0.0 ? nan : mutual_info_yy(lm, t).value,
                          t < 0.0 ? nan : mutual_info_xy_y(lm, t).value};
    for (std::size_t c = 1; c < r.size(); ++c) cols[c - 1].push_back(r[c]);
    rows.push_back(std::move(r));
  }
  if (o.json) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json e;
      for (std::size_t c = 0; c < header.size(); ++c) e[header[c]] = r[c];
      j.push_back(e);
    }
    std::cout << nlohmann::json{{"model", m.name}, {"parameters", m.parameters}, {"rows", j}}.dump(2) << '\n';
    return kExitOk;
  }
  nlohmann::json params{{"model", m.name}, {"parameters", m.parameters}};
  for (std::size_t c = 1; c < header.size(); ++c) params["monotone"][header[c]] = monotonicity(taus, cols[c - 1]);
  write_table_csv(std::cout, params, header, rows);
  return kExitOk;
}

int cmd_measure(const Options& o) {
  const SdeModel m = build_model(o);
  const EmpiricalConfig cfg = empirical_config(o);
  const EpsilonProtocol protocol = protocol_of(o);
  const std::vector<double> taus = parse_tau(o.tau_spec);
  std::vector<double> lags;
  for (double t : taus)
    if (t > 0.0) lags.push_back(t);
  const Ensemble pool = stationary_pool(m, cfg, lags);
  nlohmann::json results = nlohmann::json::array();
  const bool all = o.measure == "all";
  if (!all && o.measure != "gamma" && o.measure != "gamma_ensemble" && o.measure != "te" && o.measure != "frt")
    throw ConfigError("unknown measure: " + o.measure + " (gamma, gamma_ensemble, te, frt, all)");
  for (double t : taus) {
    if (all || o.measure == "gamma") results.push_back(to_json(information_response_empirical(m, t, protocol, cfg, &pool)));
    if (all || o.measure == "gamma_ensemble")
      results.push_back(to_json(ensemble_information_response_empirical(m, t, protocol, cfg, &pool)));
    if ((all || o.measure == "te") && t > 0.0) {
      const SampleSet s = SampleSet::from_columns(
          {pool.column(0, m.x_index), pool.column(0, m.y_index), pool.column(pool.slot_of_lag(t), m.y_index)});
      nlohmann::json te = to_json(cmi_knn(s, {0}, {2}, {1}, cfg.knn));
      te["kind"] = "TransferEntropy";
      te["tau"] = t;
      results.push_back(te);
    }
    if ((all || o.measure == "frt") && t > 0.0) results.push_back(to_json(classical_frt_check(m, t, protocol, cfg, &pool)));
  }
  const nlohmann::json out{{"model", m.name}, {"parameters", m.parameters}, {"seed", o.seed}, {"results", results}};
  if (o.json) {
    std::cout << out.dump(2) << '\n';
  } else {
    for (const auto& r : results) {
      std::cout << std::left << std::setw(24) << r.value("kind", std::string("frt")) << " tau="
                << format_double(r.value("tau", 0.0)) << "  value=" << format_double(r.value("value", r.value("slope", 0.0)))
                << "  stderr=" << format_double(r.value("stderr", r.value("slope_stderr", 0.0))) << '\n';
      if (r.contains("metadata") && r["metadata"].contains("ladder"))
        for (const auto& row : r["metadata"]["ladder"])
          std::cout << "    eps=" << format_double(row["epsilon"].get<double>())
                    << "  d=" << format_double(row["d_mean"].get<double>()) << " +- "
                    << format_double(row["d_stderr"].get<double>()) << "  c=" << format_double(row["c"].get<double>())
                    << " +- " << format_double(row["c_stderr"].get<double>()) << '\n';
    }
  }
  return kExitOk;
}

int cmd_grid(const Options& o) {
  const SdeModel m = build_model(o);
  const LinearModel lm = require_linear(m);
  const std::vector<double> taus = parse_tau(o.tau_spec);
  if (taus.size() != 1) throw ConfigError("grid takes a single tau");
  const GridAxes axes = GridAxes::around_stationary(lm, o.half_width, o.points);
  LocalGrid g;
  if (o.quantity == "local_te") g = local_te_grid(lm, taus[0], axes);
  else if (o.quantity == "weighted_local_te") g = local_te_grid(lm, taus[0], axes, true);
  else if (o.quantity == "local_gamma") g = local_gamma_grid(lm, taus[0], axes);
  else if (o.quantity == "weighted_local_gamma") g = local_gamma_grid(lm, taus[0], axes, true);
  else if (o.quantity == "density") g = stationary_density_grid(lm, axes);
  else throw ConfigError("unknown grid quantity: " + o.quantity);
  write_grid_csv(std::cout, {{"model", m.name}, {"parameters", m.parameters}, {"tau", taus[0]}}, g);
  return kExitOk;
}

ExperimentSpec experiment_spec(const Options& o, const std::string& name) {
  ExperimentSpec s = ExperimentSpec::named(name);
  s.params = o.params;
  s.epsilon = o.epsilon;
  s.output_dir = o.out;
  s.empirical.sim.seed = o.seed;
  s.empirical.sim.threads = o.threads;
  s.empirical.knn.threads = o.threads;
  s.empirical.sim.dt = o.dt;
  if (o.burn_in >= 0.0) s.empirical.sim.burn_in = o.burn_in;
  s.empirical.knn.k = o.k;
  s.protocol = protocol_of(o);
  return s;
}

int cmd_figure(const Options& o) {
  ExperimentSpec s = experiment_spec(o, o.figure);
  const std::vector<double> taus = parse_tau(o.tau_spec);
  if (taus.size() == 1) s.tau = taus[0];
  else s.tau_grid = taus;
  ValidationReport rep;
  if (o.figure == "fig1") rep = run_fig1(s);
  else if (o.figure == "fig2") rep = run_fig2(s).report;
  else if (o.figure == "fig_a1") rep = run_fig_a1(s).report;
  else if (o.figure == "nonlinear") rep = run_nonlinear(s).report;
  else throw ConfigError("unknown figure: " + o.figure);
  print_report(rep, o.json);
  return rep.passed() ? kExitOk : kExitChecks;
}

int cmd_brownian(const Options& o) {
  ExperimentSpec s = experiment_spec(o, "brownian");
  s.brownian = o.brownian;
  s.brownian_trajectories = o.brownian_n;
  const ValidationReport rep = run_brownian(s);
  print_report(rep, o.json);
  return rep.passed() ? kExitOk : kExitChecks;
}

void apply_tolerance(Tolerances& t, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("tolerance override must be name=value: " + kv);
  const std::string key = kv.substr(0, eq);
  double v = 0.0;
  try {
    v = std::stod(kv.substr(eq + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad tolerance value: " + kv);
  }
  nlohmann::json j = t.to_json();
  if (!j.contains(key)) throw ConfigError("unknown tolerance: " + key);
  j[key] = v;
  t.lyapunov_analytic = j["lyapunov_analytic"];
  t.lyapunov_mc_rel = j["lyapunov_mc_rel"];
  t.variance_identity_rel = j["variance_identity_rel"];
  t.gamma_identity_abs = j["gamma_identity_abs"];
  t.gamma_empirical_rel = j["gamma_empirical_rel"];
  t.local_te_min_abs = j["local_te_min_abs"];
  t.grid_average_rel = j["grid_average_rel"];
  t.ensemble_identity_abs = j["ensemble_identity_abs"];
  t.long_tau_ratio_abs = j["long_tau_ratio_abs"];
  t.violation_sigmas = j["violation_sigmas"];
  t.work_mean_rel = j["work_mean_rel"];
  t.work_var_rel = j["work_var_rel"];
  t.cv_rel = j["cv_rel"];
  t.frt_rel = j["frt_rel"];
  t.bound_sigmas = j["bound_sigmas"];
  t.kl_sigmas = j["kl_sigmas"];
  t.kl_stderr_rel = j["kl_stderr_rel"];
}

int cmd_validate(const Options& o) {
  SuiteConfig cfg;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  cfg.output_dir = o.out;
  cfg.random_models = o.random_models;
  for (const auto& kv : o.tolerance_overrides) apply_tolerance(cfg.tolerances, kv);
  cfg.validate();
  const ValidationReport rep = run_validation_suite(cfg);
  print_report(rep, o.json);
  return rep.passed() ? kExitOk : kExitChecks;
}

void add_model_options(CLI::App* sub, Options& o) {
  sub->add_option("--model", o.model, "ou1, ou2, quad, or linear (with --A, --Q)");
  sub->add_option("--A", o.matrix_a, "interaction matrix, rows separated by ';'");
  sub->add_option("--Q", o.matrix_q, "noise covariance, rows separated by ';'");
  sub->add_option("--x-index", o.x_index, "index of x in the state")->check(CLI::NonNegativeNumber);
  sub->add_option("--y-index", o.y_index, "index of y in the state")->check(CLI::NonNegativeNumber);
}

void add_params(CLI::App* sub, Options& o) {
  sub->add_option("--t-relax", o.params.t_relax, "relaxation time of x")->check(CLI::PositiveNumber);
  sub->add_option("--q,--D", o.params.q, "noise intensity on x")->check(CLI::PositiveNumber);
  sub->add_option("--alpha", o.params.alpha, "coupling x -> y");
  sub->add_option("--beta", o.params.beta, "relaxation rate of y")->check(CLI::PositiveNumber);
  sub->add_option("--rate", o.ou_rate, "relaxation rate of the univariate OU model")->check(CLI::PositiveNumber);
}

void add_sim_options(CLI::App* sub, Options& o) {
  sub->add_option("--epsilon", o.epsilon, "perturbation size for figures")->check(CLI::PositiveNumber);
  sub->add_option("--ladder", o.ladder, "epsilon ladder factors (relative to sigma_{x|y} unless --absolute)")
      ->check(CLI::PositiveNumber);
  sub->add_flag("--absolute", o.absolute_ladder, "ladder values are absolute epsilons");
  sub->add_option("--dt", o.dt, "integration step")->check(CLI::PositiveNumber);
  sub->add_option("--burn-in", o.burn_in, "burn-in time (default 10 x slowest relaxation time)")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--k", o.k, "k-NN neighbour count")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Information response and transfer entropy for Langevin models"};
  app.require_subcommand(1);
  app.fallthrough();
  app.allow_config_extras(false);
  app.set_config("--config", "", "config file (INI sections per subcommand)");
  app.add_flag("--json", o.json, "machine-readable JSON on stdout");
  app.add_option("--threads", o.threads, "worker cap (0: all cores)");
  app.add_option("--seed", o.seed, "base seed")->envname("INFORESP_SEED");
  app.add_option("--out", o.out, "output directory")->envname("INFORESP_OUTDIR");

  auto* analytic = app.add_subcommand("analytic", "closed-form measures over a tau grid (linear models)");
  add_model_options(analytic, o);
  add_params(analytic, o);
  analytic->add_option("--tau", o.tau_spec, "start:stop:step or comma list")->required();

  auto* measure = app.add_subcommand("measure", "Monte Carlo estimates with epsilon-ladder diagnostics");
  add_model_options(measure, o);
  add_params(measure, o);
  add_sim_options(measure, o);
  measure->add_option("--tau", o.tau_spec, "start:stop:step or comma list");
  measure->add_option("--measure", o.measure, "gamma, gamma_ensemble, te, frt or all");
  measure->add_option("--pool-size", o.pool_size, "stationary pool size");
  measure->add_option("--conditions", o.conditions, "stratified conditions for <d>");
  measure->add_option("--trajectories", o.trajectories, "trajectories per conditional ensemble");

  auto* grid = app.add_subcommand("grid", "local measure grid as CSV (linear two-variable models)");
  add_model_options(grid, o);
  add_params(grid, o);
  grid->add_option("--tau", o.tau_spec, "lag");
  grid->add_option("--quantity", o.quantity,
                   "local_te, local_gamma, density, weighted_local_te or weighted_local_gamma");
  grid->add_option("--points", o.points, "points per axis")->check(CLI::Range(Index(2), Index(100000)));
  grid->add_option("--half-width", o.half_width, "extent in marginal standard deviations")->check(CLI::PositiveNumber);

  auto* figure = app.add_subcommand("figure", "canned figure data: fig1, fig2, fig_a1, nonlinear");
  figure->add_option("name", o.figure, "experiment name")->required();
  add_params(figure, o);
  add_sim_options(figure, o);
  figure->add_option("--tau", o.tau_spec, "lag, or a tau grid for the curve experiments");

  auto* brownian = app.add_subcommand("brownian", "work / information cost of a kicked Brownian particle");
  brownian->add_option("--m", o.brownian.mass, "mass")->check(CLI::PositiveNumber);
  brownian->add_option("--lambda", o.brownian.damping, "damping")->check(CLI::PositiveNumber);
  brownian->add_option("--temp", o.brownian.temperature, "temperature")->check(CLI::PositiveNumber);
  brownian->add_option("--f", o.brownian.impulse, "impulse")->check(CLI::NonNegativeNumber);
  brownian->add_option("--pulse", o.brownian.pulse_duration, "pulse duration")->check(CLI::PositiveNumber);
  brownian->add_option("--n", o.brownian_n, "trajectories")->check(CLI::PositiveNumber);
  brownian->add_option("--k", o.k, "k-NN neighbour count")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "full acceptance suite");
  validate->add_option("--tolerance", o.tolerance_overrides, "override a tolerance: name=value");
  validate->add_option("--random-models", o.random_models, "random models in the identity sweeps")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*analytic) return cmd_analytic(o);
    if (*measure) return cmd_measure(o);
    if (*grid) return cmd_grid(o);
    if (*figure) return cmd_figure(o);
    if (*brownian) return cmd_brownian(o);
    if (*validate) return cmd_validate(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.category() == Error::Category::usage ? kExitUsage : kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitUsage;
}
