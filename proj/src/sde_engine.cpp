#include "inforesp/sde_engine.hpp"

#include "inforesp/errors.hpp"
#include "inforesp/parallel.hpp"
#include "inforesp/rng.hpp"

#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace inforesp {

namespace {

struct NoiseFactor {
  Index n = 0;
  Index rank = 0;
  std::vector<double> L;  // n x rank, row-major
};

NoiseFactor factor_noise(const Matrix& Q) {
  NoiseFactor f;
  f.n = Q.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (Q + Q.transpose()));
  const double scale = std::max(std::abs(Q.trace()), 1e-300);
  std::vector<Index> keep;
  for (Index k = 0; k < es.eigenvalues().size(); ++k)
    if (es.eigenvalues()(k) > 1e-14 * scale) keep.push_back(k);
  f.rank = Index(keep.size());
  f.L.assign(std::size_t(f.n * f.rank), 0.0);
  for (Index i = 0; i < f.n; ++i)
    for (Index c = 0; c < f.rank; ++c) {
      const Index k = keep[std::size_t(c)];
      f.L[std::size_t(i * f.rank + c)] = es.eigenvectors()(i, k) * std::sqrt(es.eigenvalues()(k));
    }
  return f;
}

/// Lower-triangular-like square-root factor M with M M^T = S for PSD S.
Matrix psd_sqrt(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()));
  Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

constexpr std::size_t kBatch = 16;

/// Euler-Maruyama over a batch of trajectories advanced in lockstep; trajectory b draws its
/// normals from its own stream, so results do not depend on the batching.
class EulerMaruyama {
 public:
  EulerMaruyama(const SdeModel& model, double dt)
      : model_(model), dt_(dt), sqrt_dt_(std::sqrt(dt)), noise_(factor_noise(model.noise_cov)) {}

  /// Advances count row-major states in `x` by `steps`; `step0` and `traj0` only label errors.
  void advance(double* x, std::size_t count, long long steps, std::span<StreamRng> rng, std::size_t traj0,
               long long step0) {
    const Index n = model_.n, r = noise_.rank;
    if (n == 1 && r == 1) return run<1, 1>(x, count, steps, rng, traj0, step0);
    if (n == 2 && r == 1) return run<2, 1>(x, count, steps, rng, traj0, step0);
    if (n == 2 && r == 2) return run<2, 2>(x, count, steps, rng, traj0, step0);
    if (n == 3 && r == 1) return run<3, 1>(x, count, steps, rng, traj0, step0);
    if (n == 3 && r == 3) return run<3, 3>(x, count, steps, rng, traj0, step0);
    return run<0, 0>(x, count, steps, rng, traj0, step0);
  }

 private:
  /// N, R > 0 fix dimension and noise rank at compile time; 0 selects the general path.
  template <std::size_t N, std::size_t R>
  void run(double* x, std::size_t count, long long steps, std::span<StreamRng> rng, std::size_t traj0,
           long long step0) {
    const std::size_t n = N > 0 ? N : std::size_t(model_.n);
    const std::size_t r = R > 0 ? R : std::size_t(noise_.rank);
    f_.resize(count * n);
    z_.resize(count * r);
    // Locals keep the hot loop free of reloads through `this`.
    double* const f = f_.data();
    double* const z = z_.data();
    const double* const L = noise_.L.data();
    const double dt = dt_, sqrt_dt = sqrt_dt_;
    boost::random::normal_distribution<double> normal;
    for (long long s = 0; s < steps; ++s) {
      if (model_.batch_drift) {
        model_.batch_drift(x, f, count);
      } else {
        for (std::size_t b = 0; b < count; ++b)
          model_.drift(std::span<const double>(x + b * n, n), std::span<double>(f + b * n, n));
      }
      for (std::size_t b = 0; b < count; ++b)
        for (std::size_t c = 0; c < r; ++c) z[b * r + c] = normal(rng[b]) * sqrt_dt;
      double check = 0.0;
      for (std::size_t b = 0; b < count; ++b) {
        double* xb = x + b * n;
        const double* fb = f + b * n;
        const double* zb = z + b * r;
        for (std::size_t i = 0; i < n; ++i) {
          double xi = xb[i] + fb[i] * dt;
          for (std::size_t c = 0; c < r; ++c) xi += L[i * r + c] * zb[c];
          xb[i] = xi;
          check += xi;
        }
      }
      if (!std::isfinite(check)) fail(x, count, traj0, step0 + s + 1);
    }
  }

  [[noreturn]] void fail(const double* x, std::size_t count, std::size_t traj0, long long step) const {
    const std::size_t n = std::size_t(model_.n);
    std::size_t bad = 0;
    for (std::size_t b = 0; b < count; ++b)
      for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(x[b * n + i])) {
          bad = b;
          b = count;
          break;
        }
    std::ostringstream os;
    os << "integration diverged in model '" << model_.name << "': trajectory " << (traj0 + bad) << ", step " << step;
    throw DivergenceError(os.str());
  }

  const SdeModel& model_;
  double dt_;
  double sqrt_dt_;
  NoiseFactor noise_;
  std::vector<double> f_;
  std::vector<double> z_;
};

long long lag_steps(double lag, double dt) {
  const double ratio = lag / dt;
  const long long steps = std::llround(ratio);
  if (std::abs(ratio - double(steps)) > 1e-6) {
    std::ostringstream os;
    os << "record lag " << lag << " is not a multiple of dt = " << dt;
    throw DomainError(os.str());
  }
  return steps;
}

Ensemble empty_ensemble(const SdeModel& model, const SimConfig& cfg, std::size_t count) {
  Ensemble e;
  e.dim = model.n;
  e.lags = cfg.record_lags;
  e.count = count;
  e.data.assign(count * e.slots() * std::size_t(model.n), 0.0);
  e.provenance.model = model.name;
  e.provenance.config = cfg;
  e.provenance.config.n_trajectories = count;
  return e;
}

template <class Source>
Ensemble run_trajectories(const SdeModel& model, const SimConfig& cfg, std::size_t count, long long burn_steps,
                          Source&& initial) {
  auto warnings = cfg.validate(model);
  Ensemble e = empty_ensemble(model, cfg, count);
  e.provenance.warnings = std::move(warnings);
  std::vector<long long> steps;
  for (double lag : cfg.record_lags) steps.push_back(lag_steps(lag, cfg.dt));
  const std::size_t n = std::size_t(model.n);
  const std::size_t slots = e.slots();

  // Batches of trajectories are the parallel work items; each batch owns its integrator state.
  const std::size_t batches = (count + kBatch - 1) / kBatch;
  parallel_for(batches, cfg.threads, [&](std::size_t bi) {
    EulerMaruyama integrator(model, cfg.dt);
    const std::size_t begin = bi * kBatch, end = std::min(count, begin + kBatch), m = end - begin;
    std::vector<double> x(m * n);
    std::vector<StreamRng> rng;
    rng.reserve(m);
    for (std::size_t b = 0; b < m; ++b) {
      rng.emplace_back(cfg.seed, begin + b);
      std::vector<double> s(n);
      initial(begin + b, s);
      std::copy(s.begin(), s.end(), x.begin() + std::ptrdiff_t(b * n));
    }
    auto record = [&](std::size_t slot) {
      for (std::size_t b = 0; b < m; ++b)
        std::copy_n(x.begin() + std::ptrdiff_t(b * n), n, e.data.begin() + std::ptrdiff_t(((begin + b) * slots + slot) * n));
    };
    integrator.advance(x.data(), m, burn_steps, rng, begin, -burn_steps);
    record(0);
    long long done = 0;
    for (std::size_t k = 0; k < steps.size(); ++k) {
      integrator.advance(x.data(), m, steps[k] - done, rng, begin, done);
      done = steps[k];
      record(k + 1);
    }
  });
  return e;
}

}  // namespace

// ---------------------------------------------------------------------------
// Models

void SdeModel::validate() const {
  if (n <= 0) throw DomainError("SDE model dimension must be positive");
  if (!drift) throw DomainError("SDE model needs a drift function");
  if (noise_cov.rows() != n || noise_cov.cols() != n) throw DomainError("noise covariance shape mismatch");
  const double scale = std::max(noise_cov.cwiseAbs().maxCoeff(), 1e-300);
  if ((noise_cov - noise_cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw DomainError("noise covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(noise_cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-12 * std::max(std::abs(noise_cov.trace()), 1e-300))
    throw DomainError("noise covariance must be positive semidefinite");
  if (x_index < 0 || x_index >= n) throw DomainError("x_index out of range");
  if (y_index != kNoIndex && (y_index < 0 || y_index >= n || y_index == x_index))
    throw DomainError("y_index out of range or equal to x_index");
}

IndexList SdeModel::y_and_confounders() const {
  IndexList out;
  if (y_index != kNoIndex) out.push_back(y_index);
  out.insert(out.end(), z_indices.begin(), z_indices.end());
  return out;
}

SdeModel make_linear_sde(const LinearModel& lm, std::string name) {
  lm.validate();
  SdeModel m;
  m.name = std::move(name);
  m.n = lm.dim();
  m.noise_cov = lm.Q;
  m.x_index = lm.x_index;
  m.y_index = lm.y_index;
  m.z_indices = lm.z_indices;
  m.linear = lm;
  const Matrix A = lm.A;
  const Index n = m.n;
  m.drift = [A, n](std::span<const double> s, std::span<double> f) {
    for (Index i = 0; i < n; ++i) {
      double acc = 0.0;
      for (Index j = 0; j < n; ++j) acc -= A(i, j) * s[std::size_t(j)];
      f[std::size_t(i)] = acc;
    }
  };
  m.batch_drift = [A, n](const double* s, double* f, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) {
      const double* sk = s + k * std::size_t(n);
      double* fk = f + k * std::size_t(n);
      for (Index i = 0; i < n; ++i) {
        double acc = 0.0;
        for (Index j = 0; j < n; ++j) acc -= A(i, j) * sk[j];
        fk[i] = acc;
      }
    }
  };
  m.slowest_timescale = 1.0 / lm.slowest_rate();
  m.fastest_timescale = 1.0 / lm.fastest_rate();
  return m;
}

SdeModel make_hierarchical_ou(const OuParams& p) {
  SdeModel m = make_linear_sde(hierarchical_ou(p), "ou2");
  const double inv_t = 1.0 / p.t_relax, alpha = p.alpha, beta = p.beta;
  m.drift = [inv_t, alpha, beta](std::span<const double> s, std::span<double> f) {
    f[0] = -inv_t * s[0];
    f[1] = alpha * s[0] - beta * s[1];
  };
  m.batch_drift = [inv_t, alpha, beta](const double* s, double* f, std::size_t count) {
    for (std::size_t k = 0; k < 2 * count; k += 2) {
      f[k] = -inv_t * s[k];
      f[k + 1] = alpha * s[k] - beta * s[k + 1];
    }
  };
  m.parameters = {{"t_relax", p.t_relax}, {"q", p.q}, {"alpha", p.alpha}, {"beta", p.beta}};
  return m;
}

SdeModel make_quadratic_coupling(const OuParams& p) {
  if (!(p.t_relax > 0) || !(p.q > 0) || !(p.beta > 0))
    throw DomainError("quadratic coupling model needs t_relax > 0, q > 0, beta > 0");
  SdeModel m;
  m.name = "quad";
  m.n = 2;
  m.noise_cov = Matrix::Zero(2, 2);
  m.noise_cov(0, 0) = p.q;
  const double inv_t = 1.0 / p.t_relax, alpha = p.alpha, beta = p.beta;
  m.drift = [inv_t, alpha, beta](std::span<const double> s, std::span<double> f) {
    f[0] = -inv_t * s[0];
    f[1] = alpha * s[0] * s[0] - beta * s[1];
  };
  m.batch_drift = [inv_t, alpha, beta](const double* s, double* f, std::size_t count) {
    for (std::size_t k = 0; k < 2 * count; k += 2) {
      f[k] = -inv_t * s[k];
      f[k + 1] = alpha * s[k] * s[k] - beta * s[k + 1];
    }
  };
  m.slowest_timescale = std::max(p.t_relax, 1.0 / p.beta);
  m.fastest_timescale = std::min(p.t_relax, 1.0 / p.beta);
  m.parameters = {{"t_relax", p.t_relax}, {"q", p.q}, {"alpha", p.alpha}, {"beta", p.beta}};
  return m;
}

SdeModel make_univariate_ou(double a, double q) {
  SdeModel m = make_linear_sde(LinearModel::univariate(a, q), "ou1");
  m.drift = [a](std::span<const double> s, std::span<double> f) { f[0] = -a * s[0]; };
  m.batch_drift = [a](const double* s, double* f, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) f[k] = -a * s[k];
  };
  m.parameters = {{"a", a}, {"q", q}};
  return m;
}

// ---------------------------------------------------------------------------
// Configuration

double SimConfig::resolved_burn_in(const SdeModel& model) const {
  return burn_in.value_or(10.0 * model.slowest_timescale);
}

std::vector<std::string> SimConfig::validate(const SdeModel& model) const {
  model.validate();
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("dt must be positive");
  if (burn_in && !(*burn_in >= 0.0)) throw DomainError("burn_in must be non-negative");
  for (std::size_t k = 0; k < record_lags.size(); ++k) {
    if (!(record_lags[k] >= 0.0)) throw DomainError("record lags must be non-negative");
    if (k > 0 && record_lags[k] < record_lags[k - 1]) throw DomainError("record lags must be sorted ascending");
    lag_steps(record_lags[k], dt);
  }
  std::vector<std::string> warnings;
  if (dt > 0.05 * model.fastest_timescale) {
    std::ostringstream os;
    os << "dt = " << dt << " exceeds 0.05 x fastest timescale (" << model.fastest_timescale << ")";
    warnings.push_back(os.str());
  }
  return warnings;
}

nlohmann::json to_json(const SimConfig& cfg) {
  nlohmann::json j = {{"dt", cfg.dt},
                      {"seed", cfg.seed},
                      {"n_trajectories", cfg.n_trajectories},
                      {"record_lags", cfg.record_lags}};
  j["burn_in"] = cfg.burn_in ? nlohmann::json(*cfg.burn_in) : nlohmann::json("default");
  return j;
}

PerturbationSpec PerturbationSpec::shift(double epsilon, Index target) {
  if (!std::isfinite(epsilon)) throw DomainError("perturbation epsilon must be finite");
  PerturbationSpec p;
  p.kind = Kind::shift;
  p.epsilon = epsilon;
  p.target = target;
  return p;
}

PerturbationSpec PerturbationSpec::general(double epsilon, Index target,
                                           std::function<double(std::span<const double>)> h) {
  if (!std::isfinite(epsilon)) throw DomainError("perturbation epsilon must be finite");
  if (!h) throw DomainError("general perturbation needs a profile");
  PerturbationSpec p;
  p.kind = Kind::general;
  p.epsilon = epsilon;
  p.target = target;
  p.profile = std::move(h);
  return p;
}

std::string PerturbationSpec::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::none: return "none";
    case Kind::shift: os << "shift(index=" << target << ", epsilon=" << epsilon << ")"; break;
    case Kind::general: os << "general(index=" << target << ", epsilon=" << epsilon << ")"; break;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Ensemble

std::vector<double> Ensemble::column(std::size_t slot, Index var) const {
  if (slot >= slots() || var < 0 || var >= dim) throw DomainError("ensemble column out of range");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = value(i, slot, var);
  return out;
}

std::vector<double> Ensemble::initial_states() const {
  std::vector<double> out(count * std::size_t(dim));
  for (std::size_t i = 0; i < count; ++i) {
    auto s = state(i, 0);
    std::copy(s.begin(), s.end(), out.begin() + std::ptrdiff_t(i * std::size_t(dim)));
  }
  return out;
}

std::size_t Ensemble::slot_of_lag(double lag) const {
  for (std::size_t k = 0; k < lags.size(); ++k)
    if (std::abs(lags[k] - lag) <= 1e-9 * std::max(1.0, std::abs(lag))) return k + 1;
  throw DomainError("lag " + std::to_string(lag) + " was not recorded");
}

void Ensemble::write_csv(std::ostream& os, Index x_index, Index y_index) const {
  os.precision(17);
  os << "x0";
  if (y_index != kNoIndex) os << ",y0";
  std::vector<Index> others;
  for (Index v = 0; v < dim; ++v)
    if (v != x_index && v != y_index) others.push_back(v);
  for (Index v : others) os << ",z" << v << "_0";
  const Index rec = y_index != kNoIndex ? y_index : x_index;
  for (double lag : lags) os << ',' << (y_index != kNoIndex ? "y" : "x") << "_tau_" << lag;
  os << '\n';
  for (std::size_t i = 0; i < count; ++i) {
    os << value(i, 0, x_index);
    if (y_index != kNoIndex) os << ',' << value(i, 0, y_index);
    for (Index v : others) os << ',' << value(i, 0, v);
    for (std::size_t k = 0; k < lags.size(); ++k) os << ',' << value(i, k + 1, rec);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Simulation entry points

Ensemble simulate_stationary(const SdeModel& model, const SimConfig& cfg) {
  const long long burn = std::llround(cfg.resolved_burn_in(model) / cfg.dt);
  return run_trajectories(model, cfg, cfg.n_trajectories, burn,
                          [](std::size_t, std::vector<double>& x) { std::fill(x.begin(), x.end(), 0.0); });
}

Ensemble propagate(const SdeModel& model, const SimConfig& cfg, std::span<const double> initial_states,
                   const PerturbationSpec& perturbation) {
  const std::size_t n = std::size_t(model.n);
  if (n == 0 || initial_states.size() % n != 0) throw DomainError("initial states do not match model dimension");
  if (perturbation.kind != PerturbationSpec::Kind::none &&
      (perturbation.target < 0 || perturbation.target >= model.n))
    throw DomainError("perturbation target out of range");
  const std::size_t count = initial_states.size() / n;
  const bool shift = perturbation.kind == PerturbationSpec::Kind::shift;
  const std::size_t target = std::size_t(perturbation.target);
  Ensemble e = run_trajectories(model, cfg, count, 0, [&](std::size_t i, std::vector<double>& x) {
    std::copy_n(initial_states.begin() + std::ptrdiff_t(i * n), n, x.begin());
    if (shift) x[target] += perturbation.epsilon;
  });
  if (perturbation.kind == PerturbationSpec::Kind::general) {
    e.weights.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double w = 1.0 + perturbation.epsilon * perturbation.profile(initial_states.subspan(i * n, n));
      if (!(w >= 0.0)) throw DomainError("general perturbation produces a negative density weight");
      e.weights[i] = w;
    }
  }
  e.provenance.perturbation = perturbation.describe();
  return e;
}

Ensemble simulate_conditional(const SdeModel& model, const SimConfig& cfg, std::span<const double> condition) {
  if (condition.size() != std::size_t(model.n)) throw DomainError("condition does not match model dimension");
  std::vector<double> states(cfg.n_trajectories * condition.size());
  for (std::size_t i = 0; i < cfg.n_trajectories; ++i)
    std::copy(condition.begin(), condition.end(), states.begin() + std::ptrdiff_t(i * condition.size()));
  return propagate(model, cfg, states);
}

std::pair<Ensemble, Ensemble> simulate_twin(const SdeModel& model, const SimConfig& cfg,
                                            std::span<const double> condition, double epsilon, Index target) {
  if (condition.size() != std::size_t(model.n)) throw DomainError("condition does not match model dimension");
  std::vector<double> states(cfg.n_trajectories * condition.size());
  for (std::size_t i = 0; i < cfg.n_trajectories; ++i)
    std::copy(condition.begin(), condition.end(), states.begin() + std::ptrdiff_t(i * condition.size()));
  Ensemble natural = propagate(model, cfg, states);
  Ensemble perturbed = propagate(model, cfg, states, PerturbationSpec::shift(epsilon, target));
  return {std::move(natural), std::move(perturbed)};
}

Ensemble simulate_stationary_exact(const LinearModel& lm, const SimConfig& cfg) {
  const SdeModel model = make_linear_sde(lm, "linear-exact");
  cfg.validate(model);
  Ensemble e = empty_ensemble(model, cfg, cfg.n_trajectories);
  e.provenance.perturbation = "none";
  const Index n = lm.dim();
  const Matrix S = solve_lyapunov(lm);
  const Matrix root = psd_sqrt(S);
  std::vector<Matrix> prop, noise;
  double prev = 0.0;
  for (double lag : cfg.record_lags) {
    const Matrix P = matexp(-lm.A * (lag - prev));
    prop.push_back(P);
    noise.push_back(psd_sqrt(S - P * S * P.transpose()));
    prev = lag;
  }
  const std::size_t slots = e.slots();
  parallel_for(cfg.n_trajectories, cfg.threads, [&](std::size_t i) {
    StreamRng rng(cfg.seed, i);
    boost::random::normal_distribution<double> normal;
    Vector z(n);
    auto draw = [&] {
      for (Index k = 0; k < n; ++k) z(k) = normal(rng);
      return z;
    };
    Vector x = root * draw();
    double* out = e.data.data() + i * slots * std::size_t(n);
    std::copy(x.data(), x.data() + n, out);
    for (std::size_t k = 0; k < prop.size(); ++k) {
      x = prop[k] * x + noise[k] * draw();
      std::copy(x.data(), x.data() + n, out + (k + 1) * std::size_t(n));
    }
  });
  return e;
}

// ---------------------------------------------------------------------------
// Brownian particle

void BrownianParams::validate() const {
  if (!(mass > 0) || !(damping > 0) || !(temperature > 0))
    throw DomainError("Brownian particle needs m, lambda, T > 0");
  if (!(pulse_duration > 0)) throw DomainError("pulse duration must be > 0");
  if (substeps < 1) throw DomainError("pulse needs at least one integration step");
  if (!std::isfinite(impulse)) throw DomainError("impulse must be finite");
}

LinearModel brownian_velocity_model(const BrownianParams& p) {
  p.validate();
  return LinearModel::univariate(p.damping / p.mass, 2.0 * p.damping * p.temperature / (p.mass * p.mass));
}

BrownianRun simulate_brownian_particle(const BrownianParams& p, const SimConfig& cfg) {
  p.validate();
  const std::size_t N = cfg.n_trajectories;
  if (N == 0) throw DomainError("need at least one trajectory");
  if (p.antithetic && N % 2 != 0) throw DomainError("antithetic sampling needs an even trajectory count");
  BrownianRun run;
  run.work.resize(N);
  run.v0.resize(N);
  run.v_end.resize(N);
  const double dt = p.pulse_duration / p.substeps;
  const double force = p.impulse / p.pulse_duration;
  const double kick = std::sqrt(2.0 * p.damping * p.temperature * dt) / p.mass;
  const double sd_v = std::sqrt(p.temperature / p.mass);
  parallel_for(N, cfg.threads, [&](std::size_t t) {
    const std::size_t stream = p.antithetic ? t / 2 : t;
    const double sign = (p.antithetic && (t % 2 == 1)) ? -1.0 : 1.0;
    StreamRng rng(cfg.seed, stream);
    boost::random::normal_distribution<double> normal;
    double v = sign * sd_v * normal(rng);
    run.v0[t] = v;
    double W = 0.0;
    for (int s = 0; s < p.substeps; ++s) {
      const double next = v + (-p.damping * v + force) / p.mass * dt + kick * sign * normal(rng);
      W += force * 0.5 * (v + next) * dt;
      v = next;
    }
    if (!std::isfinite(v) || !std::isfinite(W)) {
      std::ostringstream os;
      os << "Brownian integration diverged: trajectory " << t;
      throw DivergenceError(os.str());
    }
    run.work[t] = W;
    run.v_end[t] = v;
  });
  return run;
}

}  // namespace inforesp
