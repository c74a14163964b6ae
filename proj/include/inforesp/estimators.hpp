#pragma once

// Sample-based estimators: k-NN divergences and conditional mutual information, Gaussian-kernel
// density and regression, and linear (Granger) transfer entropy.

#include <nlohmann/json.hpp>

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace inforesp {

/// n points of dimension d, stored row-major.
struct SampleSet {
  std::size_t dim = 1;
  std::vector<double> points;
  std::vector<double> weights;  ///< optional, non-negative; empty means uniform

  SampleSet() = default;
  SampleSet(std::size_t d, std::vector<double> pts) : dim(d), points(std::move(pts)) {}
  static SampleSet univariate(std::vector<double> values);
  static SampleSet from_columns(const std::vector<std::vector<double>>& columns);

  std::size_t size() const { return dim ? points.size() / dim : 0; }
  double at(std::size_t i, std::size_t j) const { return points[i * dim + j]; }
  std::span<const double> row(std::size_t i) const { return {points.data() + i * dim, dim}; }
  std::vector<double> column(std::size_t j) const;
  /// Rows start, start + stride, ...
  SampleSet strided(std::size_t start, std::size_t stride) const;
  /// Keeps the listed columns, in order.
  SampleSet select(const std::vector<std::size_t>& columns) const;
  void validate() const;
};

enum class KlEstimator { knn_k, kde_bandwidth, knn_cmi, linear_gaussian };
std::string_view to_string(KlEstimator e);

struct KlEstimate {
  double value = 0.0;  ///< nats; raw, may be slightly negative
  double std_error = 0.0;
  KlEstimator estimator = KlEstimator::knn_k;
  std::size_t n_p = 0;
  std::size_t n_q = 0;
  std::vector<std::string> notes;
  std::vector<double> block_values;  ///< estimate on each disjoint subsample block
};

nlohmann::json to_json(const KlEstimate& e);

struct KnnOptions {
  std::size_t k = 5;
  std::size_t jackknife_blocks = 20;  ///< 0 skips the standard error
  unsigned threads = 0;
};

/// KL[p || q] from samples of p and q by the k-NN radius-ratio estimator:
///   (d/n) sum_i ln(nu_k(i) / rho_k(i)) + ln(m / (n - 1)).
/// The standard error comes from the spread of the estimate over disjoint subsample blocks.
KlEstimate kl_knn(const SampleSet& p, const SampleSet& q, const KnnOptions& opt = {});

/// Conditional mutual information I(a; b | c) of column groups, Frenzel-Pompe k-NN estimator in
/// the max norm. An empty `c` gives the plain KSG mutual information.
KlEstimate cmi_knn(const SampleSet& samples, const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                   const std::vector<std::size_t>& c, const KnnOptions& opt = {});

/// Silverman's rule per dimension: h_j = s_j (4 / ((d + 2) n))^(1 / (d + 4)).
std::vector<double> silverman_bandwidth(const SampleSet& samples);

struct KernelOptions {
  std::vector<double> bandwidth;  ///< empty: Silverman
  double cutoff = 6.0;            ///< kernel support in bandwidth units
  unsigned threads = 0;
};

/// Gaussian product-kernel density at each row of `eval` (weights honoured when present).
std::vector<double> kde_density(const SampleSet& samples, const SampleSet& eval, const KernelOptions& opt = {});

/// d/d(coordinate `var`) ln p at each row of `eval`, from the same kernel estimate; NaN where the
/// kernel window holds no samples.
std::vector<double> kde_log_gradient(const SampleSet& samples, const SampleSet& eval, std::size_t var,
                                     const KernelOptions& opt = {});

struct RegressionResult {
  std::vector<double> values;
  std::vector<bool> extrapolated;  ///< kernel mass below one effective sample
  std::size_t extrapolated_count() const;
};

/// Nadaraya-Watson estimate of < response | point > at each row of `eval`.
RegressionResult kernel_regression(const SampleSet& x, std::span<const double> response, const SampleSet& eval,
                                   const KernelOptions& opt = {});

/// Nadaraya-Watson on a uniform grid spanning the samples, linearly interpolated at `at`.
/// One-dimensional regressors only; intended for evaluation at many points.
RegressionResult kernel_regression_1d_gridded(std::span<const double> x, std::span<const double> response,
                                              std::span<const double> at, std::size_t grid_points = 1024,
                                              const KernelOptions& opt = {});

/// Columns: x0, conditioning columns..., y_tau (last). ln(sigma_reduced / sigma_full) from OLS
/// fits of y_tau with and without x0. Valid as transfer entropy only for linear-Gaussian data.
KlEstimate granger_te(const SampleSet& samples, std::size_t jackknife_blocks = 20);

/// Mean of per-block estimates and the standard error sd / sqrt(blocks).
struct BlockStats {
  double mean = 0.0;
  double std_error = 0.0;
};
BlockStats block_stats(std::span<const double> block_values);

}  // namespace inforesp
