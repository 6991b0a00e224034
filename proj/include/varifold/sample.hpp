#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "varifold/geometry.hpp"
#include "varifold/kdtree.hpp"

namespace varifold {

using Triangle = std::array<int, 3>;

/// A discrete 2-varifold: weighted points in R^n with tangent planes.
///
/// Immutable after construction; the spatial index is built once and shared
/// by copies, so the object is cheap to pass around and safe to query from
/// several threads.
class WeightedSurfaceSample {
 public:
  using Index = Eigen::Index;

  WeightedSurfaceSample() = default;

  /// Takes ownership of points (one per column), weights and tangent planes.
  /// An empty `tangent_planes` triggers PCA estimation at radius
  /// `estimation_radius_mult` x mean spacing.
  WeightedSurfaceSample(PointMatrix points, std::vector<double> weights,
                        std::vector<Plane> tangent_planes, int intrinsic_dim = 2,
                        double estimation_radius_mult = 3.0);

  Index size() const { return points_.cols(); }
  int ambient_dim() const { return static_cast<int>(points_.rows()); }
  int intrinsic_dim() const { return intrinsic_dim_; }

  const PointMatrix& points() const { return points_; }
  auto point(Index i) const { return points_.col(i); }
  double weight(Index i) const { return weights_[static_cast<std::size_t>(i)]; }
  std::span<const double> weights() const { return weights_; }
  const Plane& tangent(Index i) const { return tangents_[static_cast<std::size_t>(i)]; }
  const std::vector<Plane>& tangents() const { return tangents_; }

  double total_weight() const { return total_weight_; }
  /// (total weight / N)^(1/m): the side of the area cell owned by one point.
  double mean_spacing() const { return mean_spacing_; }

  template <typename Derived>
  std::vector<Index> ball_query(const Eigen::MatrixBase<Derived>& x, double r) const {
    return index_->ball_query(x, r);
  }
  template <typename Derived>
  void ball_query(const Eigen::MatrixBase<Derived>& x, double r, std::vector<Index>& out) const {
    index_->ball_query(x, r, out);
  }
  template <typename Derived>
  std::pair<Index, double> nearest(const Eigen::MatrixBase<Derived>& x) const {
    return index_->nearest(x);
  }
  const KdTree& index() const { return *index_; }

  /// Sum of weights of points within the closed ball.
  double measure(const Ball& ball) const;

  /// Optional analytic mean curvature vectors attached by generators.
  const std::optional<std::vector<Vec>>& reference_curvature() const { return reference_curvature_; }
  void set_reference_curvature(std::vector<Vec> h);

  /// Optional triangle connectivity when the sample came from a mesh.
  const std::optional<std::vector<Triangle>>& triangles() const { return triangles_; }
  void set_triangles(std::vector<Triangle> tris) { triangles_ = std::move(tris); }

  /// x -> scale * rotation * x + translation; weights scale by scale^m and
  /// tangent planes and reference curvature transform accordingly.
  WeightedSurfaceSample transformed(const Mat& rotation, const Vec& translation, double scale = 1.0) const;

  /// Sub-sample keeping the listed indices (in order).
  WeightedSurfaceSample subset(std::span<const Index> keep) const;

 private:
  PointMatrix points_;
  std::vector<double> weights_;
  std::vector<Plane> tangents_;
  int intrinsic_dim_ = 2;
  double total_weight_ = 0.0;
  double mean_spacing_ = 0.0;
  std::shared_ptr<const KdTree> index_;
  std::optional<std::vector<Vec>> reference_curvature_;
  std::optional<std::vector<Triangle>> triangles_;
};

}  // namespace varifold
