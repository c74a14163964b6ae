#pragma once

#include <cstddef>
#include <limits>
#include <vector>

namespace inforesp {

enum class Metric { euclidean, chebyshev };

/// Static kd-tree over row-major points for k-th neighbor distances and open-ball counts.
class KdTree {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  KdTree(std::vector<double> points, std::size_t dim, std::size_t leaf_size = 16);

  std::size_t size() const { return n_; }
  std::size_t dim() const { return dim_; }

  /// Distance from q to its k-th nearest point (k >= 1), ignoring point `exclude`.
  double kth_distance(const double* q, std::size_t k, Metric metric, std::size_t exclude = npos) const;

  /// Number of points at distance strictly below r, ignoring point `exclude`.
  std::size_t count_within(const double* q, double r, Metric metric, std::size_t exclude = npos) const;

 private:
  struct Node {
    std::size_t begin, end;
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end, std::vector<std::size_t>& order);
  double box_distance(int node, const double* q, Metric metric) const;  // squared for euclidean
  double box_far(int node, const double* q, Metric metric) const;
  double point_distance(std::size_t slot, const double* q, Metric metric) const;

  std::size_t n_, dim_, leaf_;
  std::vector<double> pts_;        // reordered copy
  std::vector<std::size_t> ids_;   // original index of each reordered slot
  std::vector<std::size_t> slot_;  // inverse of ids_
  std::vector<Node> nodes_;
  std::vector<double> lo_, hi_;    // bounding boxes, nodes x dim
};

}  // namespace inforesp
