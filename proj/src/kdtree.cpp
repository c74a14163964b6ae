#include "inforesp/kdtree.hpp"

#include "inforesp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace inforesp {

KdTree::KdTree(std::vector<double> points, std::size_t dim, std::size_t leaf_size)
    : n_(dim ? points.size() / dim : 0), dim_(dim), leaf_(std::max<std::size_t>(1, leaf_size)) {
  if (dim == 0 || points.size() % dim != 0) throw DomainError("kd-tree: point buffer does not match dimension");
  std::vector<std::size_t> order(n_);
  std::iota(order.begin(), order.end(), std::size_t{0});
  nodes_.reserve(2 * (n_ / leaf_ + 1));
  pts_ = std::move(points);
  if (n_ > 0) build(0, n_, order);
  std::vector<double> sorted(n_ * dim_);
  for (std::size_t s = 0; s < n_; ++s)
    std::copy_n(pts_.begin() + std::ptrdiff_t(order[s] * dim_), dim_, sorted.begin() + std::ptrdiff_t(s * dim_));
  pts_ = std::move(sorted);
  ids_ = std::move(order);
  slot_.resize(n_);
  for (std::size_t s = 0; s < n_; ++s) slot_[ids_[s]] = s;
}

int KdTree::build(std::size_t begin, std::size_t end, std::vector<std::size_t>& order) {
  const int id = int(nodes_.size());
  nodes_.push_back({begin, end});
  lo_.resize(nodes_.size() * dim_);
  hi_.resize(nodes_.size() * dim_);
  double* lo = lo_.data() + std::size_t(id) * dim_;
  double* hi = hi_.data() + std::size_t(id) * dim_;
  std::fill(lo, lo + dim_, std::numeric_limits<double>::infinity());
  std::fill(hi, hi + dim_, -std::numeric_limits<double>::infinity());
  for (std::size_t s = begin; s < end; ++s) {
    const double* p = pts_.data() + order[s] * dim_;
    for (std::size_t j = 0; j < dim_; ++j) {
      lo[j] = std::min(lo[j], p[j]);
      hi[j] = std::max(hi[j], p[j]);
    }
  }
  if (end - begin <= leaf_) return id;
  std::size_t split = 0;
  double widest = -1.0;
  for (std::size_t j = 0; j < dim_; ++j)
    if (hi[j] - lo[j] > widest) {
      widest = hi[j] - lo[j];
      split = j;
    }
  if (widest <= 0.0) return id;  // all points identical
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order.begin() + std::ptrdiff_t(begin), order.begin() + std::ptrdiff_t(mid),
                   order.begin() + std::ptrdiff_t(end), [&](std::size_t a, std::size_t b) {
                     return pts_[a * dim_ + split] < pts_[b * dim_ + split];
                   });
  const int left = build(begin, mid, order);
  const int right = build(mid, end, order);
  nodes_[std::size_t(id)].left = left;
  nodes_[std::size_t(id)].right = right;
  return id;
}

double KdTree::point_distance(std::size_t slot, const double* q, Metric metric) const {
  const double* p = pts_.data() + slot * dim_;
  double acc = 0.0;
  if (metric == Metric::euclidean) {
    for (std::size_t j = 0; j < dim_; ++j) {
      const double d = p[j] - q[j];
      acc += d * d;
    }
  } else {
    for (std::size_t j = 0; j < dim_; ++j) acc = std::max(acc, std::abs(p[j] - q[j]));
  }
  return acc;
}

double KdTree::box_distance(int node, const double* q, Metric metric) const {
  const double* lo = lo_.data() + std::size_t(node) * dim_;
  const double* hi = hi_.data() + std::size_t(node) * dim_;
  double acc = 0.0;
  for (std::size_t j = 0; j < dim_; ++j) {
    const double d = q[j] < lo[j] ? lo[j] - q[j] : (q[j] > hi[j] ? q[j] - hi[j] : 0.0);
    acc = metric == Metric::euclidean ? acc + d * d : std::max(acc, d);
  }
  return acc;
}

double KdTree::box_far(int node, const double* q, Metric metric) const {
  const double* lo = lo_.data() + std::size_t(node) * dim_;
  const double* hi = hi_.data() + std::size_t(node) * dim_;
  double acc = 0.0;
  for (std::size_t j = 0; j < dim_; ++j) {
    const double d = std::max(std::abs(q[j] - lo[j]), std::abs(q[j] - hi[j]));
    acc = metric == Metric::euclidean ? acc + d * d : std::max(acc, d);
  }
  return acc;
}

double KdTree::kth_distance(const double* q, std::size_t k, Metric metric, std::size_t exclude) const {
  const std::size_t available = n_ - (exclude < n_ ? 1 : 0);
  if (k == 0 || k > available) throw DomainError("kd-tree: not enough points for the requested neighbor");
  std::priority_queue<double> best;  // max-heap of the k smallest distances so far
  std::vector<int> stack{0};
  auto bound = [&] { return best.size() < k ? std::numeric_limits<double>::infinity() : best.top(); };
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    if (box_distance(id, q, metric) > bound()) continue;
    const Node& node = nodes_[std::size_t(id)];
    if (node.left < 0) {
      for (std::size_t s = node.begin; s < node.end; ++s) {
        if (ids_[s] == exclude) continue;
        const double d = point_distance(s, q, metric);
        if (best.size() < k) {
          best.push(d);
        } else if (d < best.top()) {
          best.pop();
          best.push(d);
        }
      }
      continue;
    }
    // Visit the nearer child first.
    const double dl = box_distance(node.left, q, metric), dr = box_distance(node.right, q, metric);
    if (dl <= dr) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  const double top = best.top();
  return metric == Metric::euclidean ? std::sqrt(top) : top;
}

std::size_t KdTree::count_within(const double* q, double r, Metric metric, std::size_t exclude) const {
  if (!(r > 0.0) || n_ == 0) return 0;
  const double rr = metric == Metric::euclidean ? r * r : r;
  std::size_t count = 0;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    if (box_distance(id, q, metric) >= rr) continue;
    const Node& node = nodes_[std::size_t(id)];
    if (box_far(id, q, metric) < rr) {
      count += node.end - node.begin;
      continue;
    }
    if (node.left < 0) {
      for (std::size_t s = node.begin; s < node.end; ++s)
        if (point_distance(s, q, metric) < rr) ++count;
      continue;
    }
    stack.push_back(node.left);
    stack.push_back(node.right);
  }
  if (exclude < n_) {
    // The excluded point is at distance 0 from itself when it is the query.
    if (point_distance(slot_[exclude], q, metric) < rr) --count;
  }
  return count;
}

}  // namespace inforesp
