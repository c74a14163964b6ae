#include "inforesp/estimators.hpp"

#include "inforesp/errors.hpp"
#include "inforesp/kdtree.hpp"
#include "inforesp/parallel.hpp"
#include "inforesp/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <sstream>

namespace inforesp {

namespace {

std::size_t blocks_for(std::size_t requested, std::size_t n, std::size_t min_per_block) {
  return std::min(requested, n / std::max<std::size_t>(1, min_per_block));
}

/// psi(1..n) by the recurrence psi(m + 1) = psi(m) + 1/m.
std::vector<double> digamma_table(std::size_t n) {
  std::vector<double> t(n + 1, 0.0);
  if (n >= 1) t[1] = -0.57721566490153286061;
  for (std::size_t m = 1; m < n; ++m) t[m + 1] = t[m] + 1.0 / double(m);
  return t;
}

double column_sd(const SampleSet& s, std::size_t j) {
  const std::size_t n = s.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += s.at(i, j);
  mean /= double(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) ss += (s.at(i, j) - mean) * (s.at(i, j) - mean);
  return std::sqrt(ss / double(n > 1 ? n - 1 : 1));
}

struct KnnKlRaw {
  double value = 0.0;
  std::size_t zero_radii = 0;
};

KnnKlRaw knn_kl_raw(const SampleSet& p, const SampleSet& q, std::size_t k, unsigned threads) {
  const std::size_t n = p.size(), m = q.size(), d = p.dim;
  KdTree tp(p.points, d), tq(q.points, d);
  std::vector<double> terms(n);
  std::vector<unsigned char> zero(n, 0);
  parallel_for(n, threads, [&](std::size_t i) {
    const double* x = p.points.data() + i * d;
    const double rho = tp.kth_distance(x, k, Metric::euclidean, i);
    const double nu = tq.kth_distance(x, k, Metric::euclidean);
    if (rho <= 0.0 || nu <= 0.0) {
      zero[i] = 1;
      terms[i] = 0.0;
    } else {
      terms[i] = std::log(nu / rho);
    }
  });
  KnnKlRaw out;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += terms[i];
    out.zero_radii += zero[i];
  }
  out.value = double(d) / double(n) * sum + std::log(double(m) / double(n - 1));
  return out;
}

void jitter(SampleSet& s, const std::vector<double>& scale, std::uint64_t stream) {
  StreamRng rng(0x6a177e5ULL, stream);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.dim; ++j) s.points[i * s.dim + j] += 1e-12 * scale[j] * (2.0 * rng.uniform() - 1.0);
}

double cmi_raw(const SampleSet& s, const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
               const std::vector<std::size_t>& c, std::size_t k, unsigned threads, const std::vector<double>& psi) {
  const std::size_t n = s.size();
  std::vector<std::size_t> joint = a, ac = a, bc = b;
  joint.insert(joint.end(), b.begin(), b.end());
  joint.insert(joint.end(), c.begin(), c.end());
  ac.insert(ac.end(), c.begin(), c.end());
  bc.insert(bc.end(), c.begin(), c.end());
  const SampleSet sj = s.select(joint), sac = s.select(ac), sbc = s.select(bc);
  KdTree tj(sj.points, sj.dim), tac(sac.points, sac.dim), tbc(sbc.points, sbc.dim);
  std::unique_ptr<KdTree> tc;
  SampleSet sc;
  if (!c.empty()) {
    sc = s.select(c);
    tc = std::make_unique<KdTree>(sc.points, sc.dim);
  }
  std::vector<double> terms(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const double eps = tj.kth_distance(sj.points.data() + i * sj.dim, k, Metric::chebyshev, i);
    const std::size_t n_ac = tac.count_within(sac.points.data() + i * sac.dim, eps, Metric::chebyshev, i);
    const std::size_t n_bc = tbc.count_within(sbc.points.data() + i * sbc.dim, eps, Metric::chebyshev, i);
    const std::size_t n_c = tc ? tc->count_within(sc.points.data() + i * sc.dim, eps, Metric::chebyshev, i) : n - 1;
    terms[i] = psi[n_ac + 1] + psi[n_bc + 1] - psi[n_c + 1];
  });
  double sum = 0.0;
  for (double t : terms) sum += t;
  return psi[k] - sum / double(n);
}

struct OlsFit {
  double rss = 0.0;
  std::size_t params = 0;
};

OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols()) throw EstimatorError("granger_te: rank-deficient design matrix");
  const Eigen::VectorXd beta = qr.solve(y);
  return {(y - X * beta).squaredNorm(), std::size_t(X.cols())};
}

double granger_raw(const SampleSet& s) {
  const std::size_t n = s.size(), d = s.dim;
  Eigen::MatrixXd full(n, d), reduced(n, d - 1);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    full(Eigen::Index(i), 0) = 1.0;
    reduced(Eigen::Index(i), 0) = 1.0;
    full(Eigen::Index(i), 1) = s.at(i, 0);
    for (std::size_t j = 1; j + 1 < d; ++j) {
      full(Eigen::Index(i), Eigen::Index(j + 1)) = s.at(i, j);
      reduced(Eigen::Index(i), Eigen::Index(j)) = s.at(i, j);
    }
    y(Eigen::Index(i)) = s.at(i, d - 1);
  }
  const OlsFit f = ols(full, y), r = ols(reduced, y);
  const double var_full = f.rss / double(n - f.params), var_red = r.rss / double(n - r.params);
  return 0.5 * std::log(var_red / var_full);
}

/// Rows of the sorted-by-dimension-0 sample copy whose first coordinate lies in [lo, hi].
struct SortedSamples {
  SampleSet s;
  std::vector<double> first;
  std::vector<double> weight;
  std::pair<std::size_t, std::size_t> window(double lo, double hi) const {
    const auto b = std::lower_bound(first.begin(), first.end(), lo) - first.begin();
    const auto e = std::upper_bound(first.begin(), first.end(), hi) - first.begin();
    return {std::size_t(b), std::size_t(e)};
  }
};

SortedSamples sort_samples(const SampleSet& samples) {
  const std::size_t n = samples.size(), d = samples.dim;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return samples.at(a, 0) < samples.at(b, 0); });
  SortedSamples out;
  out.s.dim = d;
  out.s.points.resize(n * d);
  out.first.resize(n);
  out.weight.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(samples.points.begin() + std::ptrdiff_t(order[r] * d), d, out.s.points.begin() + std::ptrdiff_t(r * d));
    out.first[r] = samples.at(order[r], 0);
    out.weight[r] = samples.weights.empty() ? 1.0 : samples.weights[order[r]];
  }
  return out;
}

std::vector<double> resolve_bandwidth(const SampleSet& samples, const KernelOptions& opt) {
  if (opt.bandwidth.empty()) return silverman_bandwidth(samples);
  if (opt.bandwidth.size() != samples.dim) throw DomainError("bandwidth size does not match sample dimension");
  for (double h : opt.bandwidth)
    if (!(h > 0.0)) throw DomainError("bandwidth must be positive");
  return opt.bandwidth;
}

/// Accumulates sum_k w_k K_k, sum_k w_k K_k g(k) over the kernel window of point x.
template <class Extra>
void kernel_sums(const SortedSamples& ss, const std::vector<double>& h, double cutoff, const double* x,
                 Extra&& extra) {
  const std::size_t d = ss.s.dim;
  const auto [b, e] = ss.window(x[0] - cutoff * h[0], x[0] + cutoff * h[0]);
  for (std::size_t r = b; r < e; ++r) {
    const double* p = ss.s.points.data() + r * d;
    double u2 = 0.0;
    bool inside = true;
    for (std::size_t j = 0; j < d; ++j) {
      const double u = (x[j] - p[j]) / h[j];
      if (std::abs(u) > cutoff) {
        inside = false;
        break;
      }
      u2 += u * u;
    }
    if (!inside) continue;
    extra(r, ss.weight[r] * std::exp(-0.5 * u2), p);
  }
}

void check_eval(const SampleSet& samples, const SampleSet& eval) {
  if (eval.dim != samples.dim) throw DomainError("evaluation points do not match sample dimension");
}

}  // namespace

// ---------------------------------------------------------------------------

SampleSet SampleSet::univariate(std::vector<double> values) { return SampleSet(1, std::move(values)); }

SampleSet SampleSet::from_columns(const std::vector<std::vector<double>>& columns) {
  if (columns.empty()) throw DomainError("sample set needs at least one column");
  const std::size_t n = columns.front().size();
  for (const auto& c : columns)
    if (c.size() != n) throw DomainError("sample columns have different lengths");
  SampleSet s;
  s.dim = columns.size();
  s.points.resize(n * s.dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < s.dim; ++j) s.points[i * s.dim + j] = columns[j][i];
  return s;
}

std::vector<double> SampleSet::column(std::size_t j) const {
  if (j >= dim) throw DomainError("sample column out of range");
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i, j);
  return out;
}

SampleSet SampleSet::strided(std::size_t start, std::size_t stride) const {
  if (stride == 0) throw DomainError("stride must be positive");
  SampleSet s;
  s.dim = dim;
  for (std::size_t i = start; i < size(); i += stride) {
    s.points.insert(s.points.end(), points.begin() + std::ptrdiff_t(i * dim),
                    points.begin() + std::ptrdiff_t((i + 1) * dim));
    if (!weights.empty()) s.weights.push_back(weights[i]);
  }
  return s;
}

SampleSet SampleSet::select(const std::vector<std::size_t>& columns) const {
  for (std::size_t c : columns)
    if (c >= dim) throw DomainError("selected column out of range");
  SampleSet s;
  s.dim = columns.size();
  s.points.resize(size() * s.dim);
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = 0; j < s.dim; ++j) s.points[i * s.dim + j] = at(i, columns[j]);
  s.weights = weights;
  return s;
}

void SampleSet::validate() const {
  if (dim == 0) throw DomainError("sample dimension must be positive");
  if (points.size() % dim != 0) throw DomainError("sample buffer is not a whole number of records");
  for (double v : points)
    if (!std::isfinite(v)) throw DomainError("samples must be finite");
  if (!weights.empty()) {
    if (weights.size() != size()) throw DomainError("weights do not match sample count");
    for (double w : weights)
      if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("weights must be finite and non-negative");
  }
}

std::string_view to_string(KlEstimator e) {
  switch (e) {
    case KlEstimator::knn_k: return "knn_k";
    case KlEstimator::kde_bandwidth: return "kde_bandwidth";
    case KlEstimator::knn_cmi: return "knn_cmi";
    case KlEstimator::linear_gaussian: return "linear_gaussian";
  }
  return "unknown";
}

nlohmann::json to_json(const KlEstimate& e) {
  return {{"value", e.value},         {"stderr", e.std_error}, {"estimator", std::string(to_string(e.estimator))},
          {"n_p", e.n_p},             {"n_q", e.n_q},          {"notes", e.notes}};
}

BlockStats block_stats(std::span<const double> v) {
  BlockStats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= double(v.size());
  if (v.size() < 2) return s;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std_error = std::sqrt(ss / double(v.size() - 1) / double(v.size()));
  return s;
}

// ---------------------------------------------------------------------------
// k-NN divergence

KlEstimate kl_knn(const SampleSet& p_in, const SampleSet& q_in, const KnnOptions& opt) {
  p_in.validate();
  q_in.validate();
  if (p_in.dim != q_in.dim) throw DomainError("kl_knn: sample sets have different dimensions");
  const std::size_t k = opt.k;
  if (k == 0) throw DomainError("kl_knn: k must be positive");
  if (p_in.size() < k + 1 || q_in.size() < k + 1) throw DomainError("kl_knn: each sample set needs at least k + 1 points");

  KlEstimate out;
  out.estimator = KlEstimator::knn_k;
  out.n_p = p_in.size();
  out.n_q = q_in.size();
  SampleSet p = p_in, q = q_in;
  KnnKlRaw full = knn_kl_raw(p, q, k, opt.threads);
  if (full.zero_radii > 0) {
    const double frac = double(full.zero_radii) / double(p.size());
    if (frac > 0.01) {
      std::ostringstream os;
      os << "kl_knn: " << full.zero_radii << " of " << p.size() << " points have zero neighbor radius (duplicates)";
      throw EstimatorError(os.str());
    }
    std::vector<double> scale(p.dim);
    for (std::size_t j = 0; j < p.dim; ++j) scale[j] = std::max(column_sd(p, j), 1e-300);
    jitter(p, scale, 1);
    jitter(q, scale, 2);
    full = knn_kl_raw(p, q, k, opt.threads);
    out.notes.push_back("duplicate points jittered at 1e-12 x sample scale");
    if (full.zero_radii > 0) throw EstimatorError("kl_knn: zero neighbor radii persist after jitter");
  }
  out.value = full.value;

  if (opt.jackknife_blocks == 0) return out;
  const std::size_t blocks =
      std::min(blocks_for(opt.jackknife_blocks, p.size(), k + 1), blocks_for(opt.jackknife_blocks, q.size(), k));
  if (blocks < 2) throw EstimatorError("kl_knn: too few samples for block standard errors");
  out.block_values.resize(blocks);
  for (std::size_t b = 0; b < blocks; ++b)
    out.block_values[b] = knn_kl_raw(p.strided(b, blocks), q.strided(b, blocks), k, opt.threads).value;
  out.std_error = block_stats(out.block_values).std_error;
  return out;
}

KlEstimate cmi_knn(const SampleSet& s, const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                   const std::vector<std::size_t>& c, const KnnOptions& opt) {
  s.validate();
  if (a.empty() || b.empty()) throw DomainError("cmi_knn: both variable groups must be non-empty");
  if (s.size() < opt.k + 2) throw DomainError("cmi_knn: too few samples");
  const std::vector<double> psi = digamma_table(s.size() + 1);
  KlEstimate out;
  out.estimator = KlEstimator::knn_cmi;
  out.n_p = out.n_q = s.size();
  out.value = cmi_raw(s, a, b, c, opt.k, opt.threads, psi);
  if (opt.jackknife_blocks == 0) return out;
  const std::size_t blocks = blocks_for(opt.jackknife_blocks, s.size(), opt.k + 2);
  if (blocks < 2) throw EstimatorError("cmi_knn: too few samples for block standard errors");
  out.block_values.resize(blocks);
  for (std::size_t bl = 0; bl < blocks; ++bl)
    out.block_values[bl] = cmi_raw(s.strided(bl, blocks), a, b, c, opt.k, opt.threads, psi);
  out.std_error = block_stats(out.block_values).std_error;
  return out;
}

// ---------------------------------------------------------------------------
// Kernel methods

std::vector<double> silverman_bandwidth(const SampleSet& samples) {
  samples.validate();
  const std::size_t n = samples.size(), d = samples.dim;
  if (n < 2) throw EstimatorError("bandwidth needs at least two samples");
  const double factor = std::pow(4.0 / (double(d + 2) * double(n)), 1.0 / double(d + 4));
  std::vector<double> h(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = column_sd(samples, j);
    if (!(sd > 0.0)) throw EstimatorError("zero variance in sample dimension " + std::to_string(j));
    h[j] = sd * factor;
  }
  return h;
}

std::vector<double> kde_density(const SampleSet& samples, const SampleSet& eval, const KernelOptions& opt) {
  samples.validate();
  if (samples.size() < 30) throw DomainError("kde_density needs at least 30 samples");
  check_eval(samples, eval);
  const std::vector<double> h = resolve_bandwidth(samples, opt);
  const SortedSamples ss = sort_samples(samples);
  double norm = std::accumulate(ss.weight.begin(), ss.weight.end(), 0.0);
  for (double hj : h) norm *= hj * std::sqrt(2.0 * std::numbers::pi);
  std::vector<double> out(eval.size());
  parallel_for(eval.size(), opt.threads, [&](std::size_t i) {
    double sum = 0.0;
    kernel_sums(ss, h, opt.cutoff, eval.points.data() + i * eval.dim, [&](std::size_t, double w, const double*) { sum += w; });
    out[i] = sum / norm;
  });
  return out;
}

std::vector<double> kde_log_gradient(const SampleSet& samples, const SampleSet& eval, std::size_t var,
                                     const KernelOptions& opt) {
  samples.validate();
  if (samples.size() < 30) throw DomainError("kde_log_gradient needs at least 30 samples");
  check_eval(samples, eval);
  if (var >= samples.dim) throw DomainError("gradient coordinate out of range");
  const std::vector<double> h = resolve_bandwidth(samples, opt);
  const SortedSamples ss = sort_samples(samples);
  std::vector<double> out(eval.size());
  parallel_for(eval.size(), opt.threads, [&](std::size_t i) {
    const double* x = eval.points.data() + i * eval.dim;
    double sum = 0.0, grad = 0.0;
    kernel_sums(ss, h, opt.cutoff, x, [&](std::size_t, double w, const double* p) {
      sum += w;
      grad -= w * (x[var] - p[var]) / (h[var] * h[var]);
    });
    out[i] = sum > 0.0 ? grad / sum : std::numeric_limits<double>::quiet_NaN();
  });
  return out;
}

std::size_t RegressionResult::extrapolated_count() const {
  return std::size_t(std::count(extrapolated.begin(), extrapolated.end(), true));
}

RegressionResult kernel_regression(const SampleSet& x, std::span<const double> response, const SampleSet& eval,
                                   const KernelOptions& opt) {
  x.validate();
  if (x.size() < 100) throw DomainError("kernel_regression needs at least 100 samples");
  if (response.size() != x.size()) throw DomainError("response length does not match samples");
  check_eval(x, eval);
  const std::vector<double> h = resolve_bandwidth(x, opt);
  // Carry the response through the sort as an extra column.
  SampleSet aug;
  aug.dim = x.dim + 1;
  aug.points.resize(x.size() * aug.dim);
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::copy_n(x.points.begin() + std::ptrdiff_t(i * x.dim), x.dim, aug.points.begin() + std::ptrdiff_t(i * aug.dim));
    aug.points[i * aug.dim + x.dim] = response[i];
  }
  aug.weights = x.weights;
  SortedSamples ss = sort_samples(aug);
  std::vector<double> resp(x.size());
  for (std::size_t r = 0; r < x.size(); ++r) resp[r] = ss.s.points[r * aug.dim + x.dim];
  ss.s = ss.s.select([&] {
    std::vector<std::size_t> cols(x.dim);
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    return cols;
  }());
  RegressionResult out;
  out.values.resize(eval.size());
  std::vector<unsigned char> flag(eval.size(), 0);
  parallel_for(eval.size(), opt.threads, [&](std::size_t i) {
    double sum = 0.0, acc = 0.0;
    kernel_sums(ss, h, opt.cutoff, eval.points.data() + i * eval.dim, [&](std::size_t r, double w, const double*) {
      sum += w;
      acc += w * resp[r];
    });
    flag[i] = sum < 1.0;
    out.values[i] = sum > 0.0 ? acc / sum : std::numeric_limits<double>::quiet_NaN();
  });
  out.extrapolated.assign(flag.begin(), flag.end());
  return out;
}

RegressionResult kernel_regression_1d_gridded(std::span<const double> x, std::span<const double> response,
                                              std::span<const double> at, std::size_t grid_points,
                                              const KernelOptions& opt) {
  if (grid_points < 2) throw DomainError("regression grid needs at least two points");
  SampleSet xs = SampleSet::univariate(std::vector<double>(x.begin(), x.end()));
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it, hi = *hi_it;
  SampleSet grid;
  grid.dim = 1;
  grid.points.resize(grid_points);
  const double step = (hi - lo) / double(grid_points - 1);
  for (std::size_t g = 0; g < grid_points; ++g) grid.points[g] = lo + step * double(g);
  const RegressionResult on_grid = kernel_regression(xs, response, grid, opt);
  RegressionResult out;
  out.values.resize(at.size());
  out.extrapolated.resize(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double pos = step > 0.0 ? (at[i] - lo) / step : 0.0;
    if (pos < 0.0 || pos > double(grid_points - 1)) {
      out.values[i] = std::numeric_limits<double>::quiet_NaN();
      out.extrapolated[i] = true;
      continue;
    }
    const std::size_t g = std::min<std::size_t>(std::size_t(pos), grid_points - 2);
    const double f = pos - double(g);
    out.values[i] = (1.0 - f) * on_grid.values[g] + f * on_grid.values[g + 1];
    out.extrapolated[i] = on_grid.extrapolated[g] || on_grid.extrapolated[g + 1];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear transfer entropy

KlEstimate granger_te(const SampleSet& samples, std::size_t jackknife_blocks) {
  samples.validate();
  if (samples.dim < 2) throw DomainError("granger_te needs columns (x0, ..., y_tau)");
  if (samples.size() < 1000) throw DomainError("granger_te needs at least 1000 samples");
  KlEstimate out;
  out.estimator = KlEstimator::linear_gaussian;
  out.n_p = out.n_q = samples.size();
  out.value = granger_raw(samples);
  const std::size_t blocks = blocks_for(jackknife_blocks, samples.size(), 50);
  if (blocks < 2) throw EstimatorError("granger_te: too few samples for block standard errors");
  out.block_values.resize(blocks);
  for (std::size_t b = 0; b < blocks; ++b) out.block_values[b] = granger_raw(samples.strided(b, blocks));
  out.std_error = block_stats(out.block_values).std_error;
  out.notes.push_back("linear-only");
  return out;
}

}  // namespace inforesp
