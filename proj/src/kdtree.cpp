#include "varifold/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

namespace varifold {

KdTree::KdTree(const PointMatrix& points, int leaf_size)
    : points_(points), leaf_size_(std::max(1, leaf_size)) {
  order_.resize(static_cast<std::size_t>(points_.cols()));
  std::iota(order_.begin(), order_.end(), Index{0});
  if (points_.cols() > 0) {
    nodes_.reserve(static_cast<std::size_t>(2 * points_.cols() / leaf_size_ + 2));
    build(0, points_.cols());
  }
}

int KdTree::build(Index begin, Index end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  const int n = dim();
  Vec lo = Vec::Constant(n, std::numeric_limits<double>::infinity());
  Vec hi = Vec::Constant(n, -std::numeric_limits<double>::infinity());
  for (Index k = begin; k < end; ++k) {
    const auto p = points_.col(order_[static_cast<std::size_t>(k)]);
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  nodes_[id].lo = lo;
  nodes_[id].hi = hi;
  if (end - begin <= leaf_size_) return id;

  Eigen::Index axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident

  const Index mid = begin + (end - begin) / 2;
  auto first = order_.begin() + begin;
  std::nth_element(first, order_.begin() + mid, order_.begin() + end, [&](Index a, Index b) {
    const double pa = points_(axis, a);
    const double pb = points_(axis, b);
    return pa < pb || (pa == pb && a < b);
  });
  nodes_[id].split_dim = static_cast<int>(axis);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double KdTree::box_sq_distance(const Node& node, const Vec& q) const {
  double s = 0.0;
  for (Eigen::Index k = 0; k < q.size(); ++k) {
    double d = 0.0;
    if (q[k] < node.lo[k]) {
      d = node.lo[k] - q[k];
    } else if (q[k] > node.hi[k]) {
      d = q[k] - node.hi[k];
    }
    s += d * d;
  }
  return s;
}

double KdTree::box_far_sq_distance(const Node& node, const Vec& q) const {
  double s = 0.0;
  for (int k = 0; k < dim(); ++k) {
    const double d = std::max(q[k] - node.lo[k], node.hi[k] - q[k]);
    s += d * d;
  }
  return s;
}

void KdTree::ball_query_impl(const Vec& q, double r, std::vector<Index>& out) const {
  out.clear();
  if (nodes_.empty() || r < 0.0) return;
  const double r2 = r * r;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (box_sq_distance(node, q) > r2) continue;
    if (box_far_sq_distance(node, q) <= r2) {
      // whole box inside the ball
      for (Index k = node.begin; k < node.end; ++k) out.push_back(order_[static_cast<std::size_t>(k)]);
      continue;
    }
    if (node.left < 0) {
      for (Index k = node.begin; k < node.end; ++k) {
        const Index i = order_[static_cast<std::size_t>(k)];
        if (squared_distance(points_.col(i), q) <= r2) out.push_back(i);
      }
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  std::sort(out.begin(), out.end());
}

std::pair<KdTree::Index, double> KdTree::nearest_impl(const Vec& q) const {
  Index best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  if (nodes_.empty()) return {best, best_d2};
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (box_sq_distance(node, q) > best_d2) continue;
    if (node.left < 0) {
      for (Index k = node.begin; k < node.end; ++k) {
        const Index i = order_[static_cast<std::size_t>(k)];
        const double d2 = squared_distance(points_.col(i), q);
        if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
          best_d2 = d2;
          best = i;
        }
      }
    } else {
      // visit the nearer child last so it is popped first
      const Node& l = nodes_[static_cast<std::size_t>(node.left)];
      const Node& r = nodes_[static_cast<std::size_t>(node.right)];
      if (box_sq_distance(l, q) <= box_sq_distance(r, q)) {
        stack.push_back(node.right);
        stack.push_back(node.left);
      } else {
        stack.push_back(node.left);
        stack.push_back(node.right);
      }
    }
  }
  return {best, std::sqrt(best_d2)};
}

std::vector<KdTree::Index> KdTree::knn_impl(const Vec& q, int k) const {
  std::vector<Index> result;
  if (nodes_.empty() || k <= 0) return result;
  using Item = std::pair<double, Index>;
  std::priority_queue<Item> heap;  // max-heap of current best
  auto worst = [&] {
    return static_cast<int>(heap.size()) < k ? std::numeric_limits<double>::infinity()
                                             : heap.top().first;
  };
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (box_sq_distance(node, q) > worst()) continue;
    if (node.left < 0) {
      for (Index j = node.begin; j < node.end; ++j) {
        const Index i = order_[static_cast<std::size_t>(j)];
        const Item item{squared_distance(points_.col(i), q), i};
        if (static_cast<int>(heap.size()) < k) {
          heap.push(item);
        } else if (item < heap.top()) {
          heap.pop();
          heap.push(item);
        }
      }
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  std::vector<Item> items;
  while (!heap.empty()) {
    items.push_back(heap.top());
    heap.pop();
  }
  std::sort(items.begin(), items.end());
  for (const auto& it : items) result.push_back(it.second);
  return result;
}

}  // namespace varifold
