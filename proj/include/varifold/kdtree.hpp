#pragma once

#include <utility>
#include <vector>

#include "varifold/linalg.hpp"

namespace varifold {

/// Exact kd-tree over the columns of a point matrix in R^n.
///
/// Ball queries return indices sorted ascending so that downstream weighted
/// sums are evaluated in a fixed order regardless of tree layout.
class KdTree {
 public:
  using Index = Eigen::Index;

  KdTree() = default;
  explicit KdTree(const PointMatrix& points, int leaf_size = 12);

  Index size() const { return points_.cols(); }
  int dim() const { return static_cast<int>(points_.rows()); }

  /// All i with |p_i - x| <= r.
  template <typename Derived>
  std::vector<Index> ball_query(const Eigen::MatrixBase<Derived>& x, double r) const {
    std::vector<Index> out;
    ball_query(x, r, out);
    return out;
  }

  template <typename Derived>
  void ball_query(const Eigen::MatrixBase<Derived>& x, double r, std::vector<Index>& out) const {
    Vec q = x;
    ball_query_impl(q, r, out);
  }

  /// Nearest point index and its distance. Ties resolve to the smaller index.
  template <typename Derived>
  std::pair<Index, double> nearest(const Eigen::MatrixBase<Derived>& x) const {
    Vec q = x;
    return nearest_impl(q);
  }

  /// k nearest indices sorted by distance (ties by index).
  template <typename Derived>
  std::vector<Index> knn(const Eigen::MatrixBase<Derived>& x, int k) const {
    Vec q = x;
    return knn_impl(q, k);
  }

 private:
  struct Node {
    Index begin = 0;
    Index end = 0;
    int split_dim = -1;
    int left = -1;
    int right = -1;
    Vec lo;
    Vec hi;
  };

  int build(Index begin, Index end);
  double box_sq_distance(const Node& node, const Vec& q) const;
  double box_far_sq_distance(const Node& node, const Vec& q) const;
  void ball_query_impl(const Vec& q, double r, std::vector<Index>& out) const;
  std::pair<Index, double> nearest_impl(const Vec& q) const;
  std::vector<Index> knn_impl(const Vec& q, int k) const;

  PointMatrix points_;
  std::vector<Index> order_;
  std::vector<Node> nodes_;
  int leaf_size_ = 12;
};

}  // namespace varifold
