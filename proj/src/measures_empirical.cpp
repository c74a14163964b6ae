#include "inforesp/measures_empirical.hpp"

#include "inforesp/errors.hpp"
#include "inforesp/parallel.hpp"
#include "inforesp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace inforesp {

namespace {

enum SeedTag : std::uint64_t {
  kPool = 1,
  kNatural = 2,
  kPerturbed = 3,
  kEnsemble = 4,
  kTwin = 5,
  kNaturalLag = 6,
  kSlice = 7,
  kStrata = 8,
};

SimConfig sim_for(const EmpiricalConfig& cfg, std::uint64_t seed, std::vector<double> lags, std::size_t n) {
  SimConfig s = cfg.sim;
  s.seed = seed;
  s.record_lags = std::move(lags);
  s.n_trajectories = n;
  return s;
}

std::uint64_t seed_of(const EmpiricalConfig& cfg, SeedTag tag, std::uint64_t sub = 0) {
  return derive_seed(derive_seed(cfg.sim.seed, tag), sub);
}

void require_response_target(const SdeModel& model) {
  if (model.y_index == kNoIndex) throw DomainError("response measures need a model with a y variable");
}

void require_positive_tau(double tau) {
  if (tau == 0.0) throw DomainError("tau must be non-zero: y_tau coincides with the measured y0");
  if (!std::isfinite(tau)) throw DomainError("tau must be finite");
}

MeasureResult past_result(MeasureKind kind, double tau) {
  MeasureResult r;
  r.kind = kind;
  r.tau = tau;
  r.method = Method::empirical;
  r.metadata["note"] = "tau < 0: perturbations have no effect on the past";
  return r;
}

bool has_lag(const Ensemble& e, double tau) {
  for (double l : e.lags)
    if (std::abs(l - tau) <= 1e-9 * std::max(1.0, std::abs(tau))) return true;
  return false;
}

/// Even (parity 0) or odd (parity 1) rows of the flattened t = 0 states.
std::vector<double> rows_of_parity(const Ensemble& e, int parity) {
  std::vector<double> out;
  out.reserve((e.count / 2 + 1) * std::size_t(e.dim));
  for (std::size_t i = std::size_t(parity); i < e.count; i += 2) {
    auto s = e.state(i, 0);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

std::vector<double> column_of_parity(const Ensemble& e, std::size_t slot, Index var, int parity) {
  std::vector<double> out;
  for (std::size_t i = std::size_t(parity); i < e.count; i += 2) out.push_back(e.value(i, slot, var));
  return out;
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double sd_of(std::span<const double> v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(v.size() > 1 ? v.size() - 1 : 1));
}

/// Standard error of the mean over equal-probability strata with one unit each (adjacent-pair collapse).
double strata_se(std::span<const double> v) {
  const std::size_t H = v.size();
  double ss = 0.0;
  for (std::size_t g = 0; g + 1 < H; g += 2) ss += (v[g] - v[g + 1]) * (v[g] - v[g + 1]);
  return std::sqrt(ss) / double(H);
}

double covariance_of_means(std::span<const double> a, std::span<const double> b) {
  const double ma = mean_of(a), mb = mean_of(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / double(a.size() - 1) / double(a.size());
}

/// One condition per x0-quantile stratum of the pool.
std::vector<std::vector<double>> stratified_conditions(const Ensemble& pool, Index x, std::size_t H,
                                                       std::uint64_t seed) {
  std::vector<std::size_t> order(pool.count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pool.value(a, 0, x) < pool.value(b, 0, x); });
  std::vector<std::vector<double>> out(H);
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t lo = h * pool.count / H, hi = (h + 1) * pool.count / H;
    StreamRng rng(seed, h);
    const std::size_t pick = lo + std::min(hi - lo - 1, std::size_t(rng.uniform() * double(hi - lo)));
    auto s = pool.state(order[pick], 0);
    out[h].assign(s.begin(), s.end());
  }
  return out;
}

SampleSet shifted(SampleSet s, std::size_t var, double eps) {
  for (std::size_t i = 0; i < s.size(); ++i) s.points[i * s.dim + var] += eps;
  return s;
}

/// c_x(eps) for each rung, even rows shifted against odd rows.
std::vector<KlEstimate> shift_ladder(const Ensemble& pool, Index x, std::span<const double> eps,
                                     const KnnOptions& knn) {
  const SampleSet even(std::size_t(pool.dim), rows_of_parity(pool, 0));
  const SampleSet odd(std::size_t(pool.dim), rows_of_parity(pool, 1));
  std::vector<KlEstimate> out;
  for (double e : eps) out.push_back(kl_knn(shifted(even, std::size_t(x), e), odd, knn));
  return out;
}

/// Coefficient of each replicate (condition or block) under fixed ladder weights.
std::vector<double> replicate_coeffs(std::span<const double> eps, std::span<const double> se,
                                     const std::vector<std::vector<double>>& rungs_by_replicate, int order) {
  std::vector<double> w(eps.size());
  double den = 0.0;
  const double floor = [&] {
    double m = std::numeric_limits<double>::infinity();
    for (double s : se)
      if (s > 0.0) m = std::min(m, s);
    return std::isfinite(m) ? m : 1.0;
  }();
  for (std::size_t l = 0; l < eps.size(); ++l) {
    const double s = se[l] > 0.0 ? se[l] : floor;
    w[l] = 1.0 / (s * s);
    den += w[l] * std::pow(eps[l], 2 * order);
  }
  std::vector<double> out;
  for (const auto& r : rungs_by_replicate) {
    double num = 0.0;
    for (std::size_t l = 0; l < eps.size(); ++l) num += w[l] * r[l] * std::pow(eps[l], order);
    out.push_back(num / den);
  }
  return out;
}

std::vector<std::vector<double>> blocks_by_replicate(const std::vector<KlEstimate>& rungs) {
  const std::size_t B = rungs.front().block_values.size();
  std::vector<std::vector<double>> out(B, std::vector<double>(rungs.size()));
  for (std::size_t l = 0; l < rungs.size(); ++l) {
    if (rungs[l].block_values.size() != B) throw EstimatorError("inconsistent block counts across the ladder");
    for (std::size_t b = 0; b < B; ++b) out[b][l] = rungs[l].block_values[b];
  }
  return out;
}

nlohmann::json fit_json(const LadderFit& f) {
  return {{"coeff", f.coeff},
          {"coeff_stderr", f.coeff_se},
          {"lower_coeff", f.lower_coeff},
          {"lower_coeff_stderr", f.lower_coeff_se},
          {"reduced_chi2", f.reduced_chi2}};
}

void check_fit(const LadderFit& f, const EpsilonProtocol& protocol, const char* what) {
  if (!std::isfinite(f.coeff) || f.reduced_chi2 > protocol.max_reduced_chi2) {
    std::ostringstream os;
    os << what << " ladder is not quadratic in epsilon (reduced chi2 = " << f.reduced_chi2
       << "); use smaller epsilon factors";
    throw ProtocolError(os.str());
  }
}

const Ensemble& pool_with_lag(const SdeModel& model, const EmpiricalConfig& cfg, const Ensemble* given, double tau,
                              Ensemble& storage) {
  if (given && (tau <= 0.0 || has_lag(*given, tau))) return *given;
  if (given) {
    // Same states, fresh pass to record the lag.
    storage = propagate(model, sim_for(cfg, seed_of(cfg, kNaturalLag), {tau}, given->count), given->initial_states());
    return storage;
  }
  storage = stationary_pool(model, cfg, tau > 0.0 ? std::vector<double>{tau} : std::vector<double>{});
  return storage;
}

KernelOptions kernel_threads(unsigned threads) {
  KernelOptions o;
  o.threads = threads;
  return o;
}

double interpolate(const std::vector<double>& grid_values, double lo, double step, double at) {
  const double pos = (at - lo) / step;
  if (pos <= 0.0) return grid_values.front();
  const std::size_t last = grid_values.size() - 1;
  if (pos >= double(last)) return grid_values.back();
  const std::size_t g = std::size_t(pos);
  const double f = pos - double(g);
  return (1.0 - f) * grid_values[g] + f * grid_values[g + 1];
}

}  // namespace

// ---------------------------------------------------------------------------
// Protocol and configuration

void EpsilonProtocol::validate() const {
  if (factors.size() < 3) throw ConfigError("epsilon ladder needs at least 3 values");
  for (double f : factors)
    if (!(f > 0.0) || !std::isfinite(f)) throw ConfigError("epsilon ladder values must be positive");
  if (fit_order < 1) throw ConfigError("fit order must be at least 1");
  if (extrapolation != "quadratic-through-origin") throw ConfigError("unknown extrapolation method: " + extrapolation);
  if (!(max_reduced_chi2 > 0.0)) throw ConfigError("max_reduced_chi2 must be positive");
}

std::vector<double> EpsilonProtocol::resolve(double sigma_x_given_y) const {
  validate();
  std::vector<double> out;
  for (double f : factors) out.push_back(relative ? f * sigma_x_given_y : f);
  return out;
}

void EmpiricalConfig::validate() const {
  if (pool_size < 1000) throw ConfigError("pool_size must be at least 1000");
  if (n_conditions < 2 || n_conditions % 2 != 0) throw ConfigError("n_conditions must be even and at least 2");
  if (conditional_trajectories < 2 * (knn.k + 1)) throw ConfigError("too few conditional trajectories for k-NN");
  if (knn.k == 0) throw ConfigError("k must be positive");
  if (!(sim.dt > 0.0)) throw ConfigError("dt must be positive");
}

Ensemble stationary_pool(const SdeModel& model, const EmpiricalConfig& cfg, std::vector<double> lags) {
  cfg.validate();
  std::sort(lags.begin(), lags.end());
  return simulate_stationary(model, sim_for(cfg, seed_of(cfg, kPool), std::move(lags), cfg.pool_size));
}

double residual_sd_x(const Ensemble& pool, const SdeModel& model) {
  const IndexList given = model.y_and_confounders();
  const Index n = Index(pool.count);
  Matrix X(n, Index(given.size()) + 1);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (std::size_t g = 0; g < given.size(); ++g) X(i, Index(g) + 1) = pool.value(std::size_t(i), 0, given[g]);
    y(i) = pool.value(std::size_t(i), 0, model.x_index);
  }
  const Vector beta = X.colPivHouseholderQr().solve(y);
  const double rss = (y - X * beta).squaredNorm();
  return std::sqrt(rss / double(n - X.cols()));
}

// ---------------------------------------------------------------------------
// Divergences

KlEstimate local_response_divergence(const SdeModel& model, std::span<const double> condition, double epsilon,
                                     double tau, const EmpiricalConfig& cfg) {
  require_response_target(model);
  if (tau < 0.0) {
    KlEstimate z;
    z.notes.push_back("tau < 0: perturbations have no effect on the past");
    return z;
  }
  require_positive_tau(tau);
  cfg.validate();
  if (condition.size() != std::size_t(model.n)) throw DomainError("condition does not match model dimension");
  const std::size_t M = cfg.conditional_trajectories;
  const Ensemble nat = simulate_conditional(model, sim_for(cfg, seed_of(cfg, kNatural), {tau}, M), condition);
  std::vector<double> moved(condition.begin(), condition.end());
  moved[std::size_t(model.x_index)] += epsilon;
  const Ensemble pert = simulate_conditional(model, sim_for(cfg, seed_of(cfg, kPerturbed), {tau}, M), moved);
  const auto q = nat.column(1, model.y_index);
  if (!(sd_of(q) > 0.0)) throw EstimatorError("degenerate y_tau distribution (zero spread)");
  return kl_knn(SampleSet::univariate(pert.column(1, model.y_index)), SampleSet::univariate(q), cfg.knn);
}

KlEstimate perturbation_divergence(const SampleSet& samples, double epsilon, std::size_t var, const KnnOptions& knn) {
  samples.validate();
  if (var >= samples.dim) throw DomainError("perturbed coordinate out of range");
  if (epsilon == 0.0) {
    KlEstimate zero;
    zero.n_p = zero.n_q = samples.size();
    zero.notes.push_back("zero shift: identical distributions");
    return zero;
  }
  return kl_knn(shifted(samples.strided(0, 2), var, epsilon), samples.strided(1, 2), knn);
}

KlEstimate perturbation_divergence(const SdeModel& model, double epsilon, const EmpiricalConfig& cfg,
                                   const Ensemble* pool) {
  Ensemble storage;
  if (!pool) {
    storage = stationary_pool(model, cfg);
    pool = &storage;
  }
  return perturbation_divergence(SampleSet(std::size_t(pool->dim), pool->initial_states()), epsilon,
                                 std::size_t(model.x_index), cfg.knn);
}

LadderFit fit_ladder(std::span<const double> eps, std::span<const double> y, std::span<const double> se, int order) {
  const std::size_t L = eps.size();
  if (L < 2 || y.size() != L || se.size() != L) throw DomainError("ladder fit needs matching arrays of length >= 2");
  double floor = std::numeric_limits<double>::infinity();
  for (double s : se)
    if (s > 0.0) floor = std::min(floor, s);
  if (!std::isfinite(floor)) floor = 1.0;
  double sww = 0.0, swy = 0.0;
  double s11 = 0.0, s12 = 0.0, s22 = 0.0, t1 = 0.0, t2 = 0.0;
  std::vector<double> w(L);
  for (std::size_t l = 0; l < L; ++l) {
    const double s = se[l] > 0.0 ? se[l] : floor;
    w[l] = 1.0 / (s * s);
    const double p = std::pow(eps[l], order), q = std::pow(eps[l], order - 1);
    sww += w[l] * p * p;
    swy += w[l] * p * y[l];
    s11 += w[l] * q * q;
    s12 += w[l] * q * p;
    s22 += w[l] * p * p;
    t1 += w[l] * q * y[l];
    t2 += w[l] * p * y[l];
  }
  LadderFit f;
  f.coeff = swy / sww;
  f.coeff_se = 1.0 / std::sqrt(sww);
  double chi2 = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const double r = y[l] - f.coeff * std::pow(eps[l], order);
    chi2 += w[l] * r * r;
  }
  f.reduced_chi2 = chi2 / double(L - 1);
  const double det = s11 * s22 - s12 * s12;
  if (det > 0.0) {
    f.lower_coeff = (s22 * t1 - s12 * t2) / det;
    f.lower_coeff_se = std::sqrt(s22 / det);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Information responses

MeasureResult information_response_empirical(const SdeModel& model, double tau, const EpsilonProtocol& protocol,
                                             const EmpiricalConfig& cfg, const Ensemble* pool) {
  require_response_target(model);
  if (tau < 0.0) return past_result(MeasureKind::gamma, tau);
  require_positive_tau(tau);
  protocol.validate();
  cfg.validate();
  Ensemble storage;
  const Ensemble& P = pool ? *pool : (storage = stationary_pool(model, cfg));
  const double sx = residual_sd_x(P, model);
  const std::vector<double> eps = protocol.resolve(sx);
  const std::size_t L = eps.size(), H = cfg.n_conditions, M = cfg.conditional_trajectories;
  const auto conditions = stratified_conditions(P, model.x_index, H, seed_of(cfg, kStrata));

  KnnOptions quick = cfg.knn;
  quick.jackknife_blocks = 0;
  std::vector<std::vector<double>> d(H, std::vector<double>(L));
  for (std::size_t h = 0; h < H; ++h) {
    const Ensemble nat =
        simulate_conditional(model, sim_for(cfg, seed_of(cfg, kNatural, h), {tau}, M), conditions[h]);
    const SampleSet q = SampleSet::univariate(nat.column(1, model.y_index));
    if (!(sd_of(q.points) > 0.0)) throw EstimatorError("degenerate y_tau distribution (zero spread)");
    for (std::size_t l = 0; l < L; ++l) {
      std::vector<double> moved = conditions[h];
      moved[std::size_t(model.x_index)] += eps[l];
      const Ensemble pert =
          simulate_conditional(model, sim_for(cfg, seed_of(cfg, kPerturbed, h * 1024 + l), {tau}, M), moved);
      d[h][l] = kl_knn(SampleSet::univariate(pert.column(1, model.y_index)), q, quick).value;
    }
  }
  std::vector<double> d_mean(L), d_se(L);
  for (std::size_t l = 0; l < L; ++l) {
    std::vector<double> col(H);
    for (std::size_t h = 0; h < H; ++h) col[h] = d[h][l];
    d_mean[l] = mean_of(col);
    d_se[l] = strata_se(col);
  }
  const auto c = shift_ladder(P, model.x_index, eps, cfg.knn);
  std::vector<double> c_val(L), c_se(L);
  for (std::size_t l = 0; l < L; ++l) {
    c_val[l] = c[l].value;
    c_se[l] = c[l].std_error;
  }

  LadderFit fd = fit_ladder(eps, d_mean, d_se, protocol.fit_order);
  LadderFit fc = fit_ladder(eps, c_val, c_se, protocol.fit_order);
  check_fit(fd, protocol, "response divergence");
  check_fit(fc, protocol, "perturbation divergence");
  // Replicate-based errors account for the correlation between rungs.
  fd.coeff_se = strata_se(replicate_coeffs(eps, d_se, d, protocol.fit_order));
  fc.coeff_se = block_stats(replicate_coeffs(eps, c_se, blocks_by_replicate(c), protocol.fit_order)).std_error;

  MeasureResult r;
  r.kind = MeasureKind::gamma;
  r.tau = tau;
  r.method = Method::empirical;
  r.value = fd.coeff / fc.coeff;
  r.std_error = std::hypot(fd.coeff_se / fc.coeff, fd.coeff * fc.coeff_se / (fc.coeff * fc.coeff));
  nlohmann::json ladder = nlohmann::json::array();
  for (std::size_t l = 0; l < L; ++l)
    ladder.push_back({{"epsilon", eps[l]}, {"d_mean", d_mean[l]}, {"d_stderr", d_se[l]}, {"c", c_val[l]}, {"c_stderr", c_se[l]}});
  r.metadata = {{"ladder", ladder},
                {"fit_numerator", fit_json(fd)},
                {"fit_denominator", fit_json(fc)},
                {"sigma_x_given_y", sx},
                {"n_conditions", H},
                {"conditional_trajectories", M},
                {"pool_size", P.count},
                {"estimator", "knn"},
                {"k", cfg.knn.k},
                {"model", model.name}};
  return r;
}

MeasureResult ensemble_information_response_empirical(const SdeModel& model, double tau,
                                                      const EpsilonProtocol& protocol, const EmpiricalConfig& cfg,
                                                      const Ensemble* pool) {
  require_response_target(model);
  if (tau < 0.0) return past_result(MeasureKind::gamma_ensemble, tau);
  require_positive_tau(tau);
  protocol.validate();
  cfg.validate();
  Ensemble storage;
  const Ensemble& P = pool_with_lag(model, cfg, pool, tau, storage);
  const double sx = residual_sd_x(P, model);
  const std::vector<double> eps = protocol.resolve(sx);
  const std::size_t L = eps.size();

  const std::size_t slot = P.slot_of_lag(tau);
  const SampleSet natural = SampleSet::univariate(column_of_parity(P, slot, model.y_index, 1));
  const std::vector<double> even = rows_of_parity(P, 0);
  const SimConfig sim = sim_for(cfg, seed_of(cfg, kEnsemble), {tau}, 0);
  std::vector<KlEstimate> dt;
  for (double e : eps) {
    const Ensemble pert = propagate(model, sim, even, PerturbationSpec::shift(e, model.x_index));
    dt.push_back(kl_knn(SampleSet::univariate(pert.column(1, model.y_index)), natural, cfg.knn));
  }
  const auto c = shift_ladder(P, model.x_index, eps, cfg.knn);
  std::vector<double> d_val(L), d_se(L), c_val(L), c_se(L);
  for (std::size_t l = 0; l < L; ++l) {
    d_val[l] = dt[l].value;
    d_se[l] = dt[l].std_error;
    c_val[l] = c[l].value;
    c_se[l] = c[l].std_error;
  }
  LadderFit fd = fit_ladder(eps, d_val, d_se, protocol.fit_order);
  LadderFit fc = fit_ladder(eps, c_val, c_se, protocol.fit_order);
  check_fit(fd, protocol, "ensemble response divergence");
  check_fit(fc, protocol, "perturbation divergence");
  const auto bd = replicate_coeffs(eps, d_se, blocks_by_replicate(dt), protocol.fit_order);
  const auto bc = replicate_coeffs(eps, c_se, blocks_by_replicate(c), protocol.fit_order);
  fd.coeff_se = block_stats(bd).std_error;
  fc.coeff_se = block_stats(bc).std_error;
  const double cov = covariance_of_means(bd, bc);

  MeasureResult r;
  r.kind = MeasureKind::gamma_ensemble;
  r.tau = tau;
  r.method = Method::empirical;
  const double a = fd.coeff, b = fc.coeff;
  r.value = a / b;
  const double var = fd.coeff_se * fd.coeff_se / (b * b) + a * a * fc.coeff_se * fc.coeff_se / (b * b * b * b) -
                     2.0 * a * cov / (b * b * b);
  r.std_error = std::sqrt(std::max(var, 0.0));
  nlohmann::json ladder = nlohmann::json::array();
  for (std::size_t l = 0; l < L; ++l)
    ladder.push_back({{"epsilon", eps[l]}, {"d_mean", d_val[l]}, {"d_stderr", d_se[l]}, {"c", c_val[l]}, {"c_stderr", c_se[l]}});
  r.metadata = {{"ladder", ladder},
                {"fit_numerator", fit_json(fd)},
                {"fit_denominator", fit_json(fc)},
                {"sigma_x_given_y", sx},
                {"pool_size", P.count},
                {"estimator", "knn"},
                {"k", cfg.knn.k},
                {"model", model.name}};
  return r;
}

MeasureResult generalized_response(const SdeModel& model, const Profile& h, double tau, const EmpiricalConfig& cfg,
                                   const Ensemble* pool) {
  require_response_target(model);
  if (!h) throw DomainError("generalized response needs a profile h");
  if (tau < 0.0) return past_result(MeasureKind::gamma_ensemble, tau);
  require_positive_tau(tau);
  cfg.validate();
  Ensemble storage;
  const Ensemble& P = pool_with_lag(model, cfg, pool, tau, storage);
  const std::size_t N = P.count, slot = P.slot_of_lag(tau);
  std::vector<double> hv(N), yt(N);
  for (std::size_t i = 0; i < N; ++i) {
    hv[i] = h(P.state(i, 0));
    yt[i] = P.value(i, slot, model.y_index);
    if (!std::isfinite(hv[i])) throw DomainError("profile h returned a non-finite value");
  }
  const double mean = mean_of(hv), sd = sd_of(hv);
  if (!(sd > 1e-9 * std::max(std::abs(mean), 1e-300)) || sd == 0.0)
    throw DomainError("degenerate profile: h has no variance, so <h> = 0 cannot hold");
  std::vector<std::string> warnings;
  if (std::abs(mean) > 3.0 * sd / std::sqrt(double(N))) {
    for (double& v : hv) v -= mean;
    std::ostringstream os;
    os << "profile recentred: <h> = " << mean << " differs from 0 beyond 3 standard errors";
    warnings.push_back(os.str());
  }
  auto estimate = [&](std::span<const double> y, std::span<const double> hh, std::size_t* skipped) {
    const RegressionResult m = kernel_regression_1d_gridded(y, hh, y, 1024, kernel_threads(cfg.sim.threads));
    double num = 0.0, den = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      den += hh[i] * hh[i];
      if (m.extrapolated[i] || !std::isfinite(m.values[i])) continue;
      num += m.values[i] * m.values[i];
      ++used;
    }
    if (skipped) *skipped = y.size() - used;
    return (num / double(used)) / (den / double(y.size()));
  };
  std::size_t skipped = 0;
  MeasureResult r;
  r.kind = MeasureKind::gamma_ensemble;
  r.tau = tau;
  r.method = Method::empirical;
  r.value = estimate(yt, hv, &skipped);
  const std::size_t B = std::max<std::size_t>(2, cfg.knn.jackknife_blocks);
  std::vector<double> blocks(B);
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> yb, hb;
    for (std::size_t i = b; i < N; i += B) {
      yb.push_back(yt[i]);
      hb.push_back(hv[i]);
    }
    blocks[b] = estimate(yb, hb, nullptr);
  }
  r.std_error = block_stats(blocks).std_error;
  r.metadata = {{"profile_mean", mean},    {"extrapolated_points", skipped}, {"warnings", warnings},
                {"pool_size", N},          {"estimator", "kernel_regression"}, {"model", model.name}};
  return r;
}

// ---------------------------------------------------------------------------
// Classical fluctuation-response check

bool FrtReport::bound_holds() const {
  return std::all_of(rows.begin(), rows.end(), [](const FrtRow& r) { return r.within_bound; });
}

nlohmann::json to_json(const FrtReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"epsilon", row.epsilon},
                    {"response", row.response},
                    {"response_stderr", row.response_se},
                    {"divergence", row.divergence},
                    {"divergence_stderr", row.divergence_se},
                    {"bound", row.bound},
                    {"within_bound", row.within_bound}});
  return {{"tau", r.tau},
          {"slope", r.slope},
          {"slope_stderr", r.slope_se},
          {"correlation", r.correlation},
          {"correlation_stderr", r.correlation_se},
          {"score_method", r.score_method},
          {"score_failures", r.score_failures},
          {"relative_discrepancy", r.relative_discrepancy},
          {"sigma_y_tau", r.sigma_y_tau},
          {"bound_holds", r.bound_holds()},
          {"rows", rows}};
}

FrtReport classical_frt_check(const SdeModel& model, double tau, const EpsilonProtocol& protocol,
                              const EmpiricalConfig& cfg, const Ensemble* pool) {
  require_response_target(model);
  FrtReport rep;
  rep.tau = tau;
  if (tau < 0.0) {
    rep.score_method = model.is_linear() ? "analytic" : "kde";
    return rep;
  }
  require_positive_tau(tau);
  protocol.validate();
  cfg.validate();
  Ensemble storage;
  const Ensemble& P = pool_with_lag(model, cfg, pool, tau, storage);
  const std::vector<double> eps = protocol.resolve(residual_sd_x(P, model));
  const std::size_t slot = P.slot_of_lag(tau);
  const std::vector<double> natural_odd = column_of_parity(P, slot, model.y_index, 1);
  const SampleSet natural = SampleSet::univariate(natural_odd);
  rep.sigma_y_tau = sd_of(natural_odd);

  const std::vector<double> even = rows_of_parity(P, 0);
  const std::size_t n = even.size() / std::size_t(model.n);
  const SimConfig sim = sim_for(cfg, seed_of(cfg, kTwin), {tau}, 0);
  const std::vector<double> y_nat = propagate(model, sim, even).column(1, model.y_index);

  std::vector<double> resp(eps.size()), resp_se(eps.size());
  for (std::size_t l = 0; l < eps.size(); ++l) {
    const std::vector<double> y_pert =
        propagate(model, sim, even, PerturbationSpec::shift(eps[l], model.x_index)).column(1, model.y_index);
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = y_pert[i] - y_nat[i];
    FrtRow row;
    row.epsilon = eps[l];
    row.response = mean_of(diff);
    row.response_se = sd_of(diff) / std::sqrt(double(n));
    const KlEstimate kl = kl_knn(SampleSet::univariate(y_pert), natural, cfg.knn);
    row.divergence = kl.value;
    row.divergence_se = kl.std_error;
    row.bound = rep.sigma_y_tau * std::sqrt(2.0 * std::max(kl.value, 0.0));
    const double lhs = row.response * row.response / (2.0 * rep.sigma_y_tau * rep.sigma_y_tau);
    row.within_bound = lhs <= kl.value + 3.0 * kl.std_error;
    resp[l] = row.response;
    resp_se[l] = row.response_se;
    rep.rows.push_back(row);
  }
  const LadderFit slope = fit_ladder(eps, resp, resp_se, 1);
  rep.slope = slope.coeff;
  // Paired differences share noise across rungs; the per-rung error is an adequate scale for the slope.
  rep.slope_se = resp_se.back() / eps.back();

  const double ybar = mean_of(y_nat);
  std::vector<double> terms;
  if (model.is_linear()) {
    rep.score_method = "analytic";
    const Matrix Sinv = solve_lyapunov(*model.linear).inverse();
    terms.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Map<const Vector> xi(even.data() + i * std::size_t(model.n), model.n);
      terms[i] = (y_nat[i] - ybar) * Sinv.row(model.x_index).dot(xi);
    }
  } else {
    rep.score_method = "kde";
    const std::size_t n_kde = std::min<std::size_t>(100000, P.count / 2);
    const std::size_t n_eval = std::min<std::size_t>(10000, n);
    SampleSet kde_samples(std::size_t(model.n), rows_of_parity(P, 1));
    kde_samples.points.resize(n_kde * std::size_t(model.n));
    SampleSet eval(std::size_t(model.n), std::vector<double>(even.begin(), even.begin() + std::ptrdiff_t(n_eval * std::size_t(model.n))));
    const auto grad = kde_log_gradient(kde_samples, eval, std::size_t(model.x_index), kernel_threads(cfg.sim.threads));
    std::size_t failed = 0;
    for (std::size_t i = 0; i < n_eval; ++i) {
      if (!std::isfinite(grad[i])) {
        ++failed;
        continue;
      }
      terms.push_back(-(y_nat[i] - ybar) * grad[i]);
    }
    if (failed * 100 > n_eval) throw EstimatorError("score estimation failed in the tails for more than 1% of points");
    rep.score_failures = failed;
  }
  rep.correlation = mean_of(terms);
  rep.correlation_se = sd_of(terms) / std::sqrt(double(terms.size()));
  rep.relative_discrepancy = std::abs(rep.slope - rep.correlation) / std::max(std::abs(rep.correlation), 1e-300);
  return rep;
}

// ---------------------------------------------------------------------------
// Local slices

std::vector<double> LocalSlice::weighted_te() const {
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = density[i] * local_te[i];
  return out;
}

std::vector<double> LocalSlice::weighted_d() const {
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = density[i] * local_d[i];
  return out;
}

LocalSlice local_measures_slice(const SdeModel& model, double tau, double y0, std::span<const double> x0_grid,
                                double epsilon, std::size_t trajectories, const EmpiricalConfig& cfg,
                                const Ensemble* pool) {
  require_response_target(model);
  require_positive_tau(tau);
  if (tau < 0.0) throw DomainError("local slices need tau > 0");
  if (model.n != 2) throw DomainError("local slices support two-variable models only");
  if (x0_grid.size() < 3) throw DomainError("slice needs at least 3 x0 points");
  if (trajectories < 100) throw DomainError("slice needs at least 100 trajectories per point");
  Ensemble storage;
  if (!pool) {
    storage = stationary_pool(model, cfg);
    pool = &storage;
  }
  const std::size_t G = x0_grid.size();
  LocalSlice out;
  out.tau = tau;
  out.y0 = y0;
  out.epsilon = epsilon;
  out.x0.assign(x0_grid.begin(), x0_grid.end());

  const std::size_t n_kde = std::min<std::size_t>(pool->count, 200000);
  SampleSet kde_samples(2, pool->initial_states());
  kde_samples.points.resize(n_kde * 2);
  SampleSet eval(2, std::vector<double>(2 * G));
  for (std::size_t i = 0; i < G; ++i) {
    eval.points[2 * i + std::size_t(model.x_index)] = x0_grid[i];
    eval.points[2 * i + std::size_t(model.y_index)] = y0;
  }
  out.density = kde_density(kde_samples, eval, kernel_threads(cfg.sim.threads));

  std::vector<std::vector<double>> nat(G), pert(G);
  for (std::size_t i = 0; i < G; ++i) {
    const SimConfig sim = sim_for(cfg, seed_of(cfg, kSlice, i), {tau}, trajectories);
    std::vector<double> c(2);
    c[std::size_t(model.x_index)] = x0_grid[i];
    c[std::size_t(model.y_index)] = y0;
    nat[i] = simulate_conditional(model, sim, c).column(1, model.y_index);
    c[std::size_t(model.x_index)] += epsilon;
    pert[i] = simulate_conditional(model, sim, c).column(1, model.y_index);
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < G; ++i)
    for (const auto* v : {&nat[i], &pert[i]}) {
      const auto [a, b] = std::minmax_element(v->begin(), v->end());
      lo = std::min(lo, *a);
      hi = std::max(hi, *b);
    }
  const double pad = 0.05 * (hi - lo) + 1e-12;
  lo -= pad;
  hi += pad;
  const std::size_t U = 2048;
  const double step = (hi - lo) / double(U - 1);
  SampleSet ugrid(1, std::vector<double>(U));
  for (std::size_t u = 0; u < U; ++u) ugrid.points[u] = lo + step * double(u);

  std::vector<std::vector<double>> g(G), f(G);
  for (std::size_t i = 0; i < G; ++i) {
    const SampleSet sn = SampleSet::univariate(nat[i]);
    const std::vector<double> h = silverman_bandwidth(sn);
    g[i] = kde_density(sn, ugrid, {.bandwidth = h});
    // Same bandwidth for the shifted ensemble so that smoothing bias cancels in the ratio.
    f[i] = kde_density(SampleSet::univariate(pert[i]), ugrid, {.bandwidth = h});
  }
  double wsum = std::accumulate(out.density.begin(), out.density.end(), 0.0);
  if (!(wsum > 0.0)) throw EstimatorError("slice lies outside the stationary support (zero density)");
  std::vector<double> mix(U, 0.0);
  for (std::size_t i = 0; i < G; ++i)
    for (std::size_t u = 0; u < U; ++u) mix[u] += out.density[i] / wsum * g[i][u];
  const double tiny = 1e-300;
  out.local_te.resize(G);
  out.local_d.resize(G);
  for (std::size_t i = 0; i < G; ++i) {
    double te = 0.0, dd = 0.0;
    for (double v : nat[i])
      te += std::log(std::max(interpolate(g[i], lo, step, v), tiny)) -
            std::log(std::max(interpolate(mix, lo, step, v), tiny));
    for (double v : pert[i])
      dd += std::log(std::max(interpolate(f[i], lo, step, v), tiny)) -
            std::log(std::max(interpolate(g[i], lo, step, v), tiny));
    out.local_te[i] = te / double(nat[i].size());
    out.local_d[i] = dd / double(pert[i].size());
  }
  return out;
}

void write_ladder_csv(std::ostream& os, const MeasureResult& result) {
  if (!result.metadata.contains("ladder")) throw DomainError("result carries no epsilon ladder");
  os.precision(12);
  os << "epsilon,d_mean,d_stderr,c,c_stderr\n";
  for (const auto& row : result.metadata["ladder"])
    os << row["epsilon"].get<double>() << ',' << row["d_mean"].get<double>() << ','
       << row["d_stderr"].get<double>() << ',' << row["c"].get<double>() << ',' << row["c_stderr"].get<double>()
       << '\n';
}

}  // namespace inforesp
