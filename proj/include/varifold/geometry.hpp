#pragma once

#include <optional>
#include <span>
#include <vector>

#include "varifold/linalg.hpp"

namespace varifold {

/// An m-dimensional linear subspace of R^n, optionally anchored at a basepoint.
///
/// Stores an orthonormal basis (n x m, one basis vector per column) together
/// with the orthogonal projector basis * basis^T. The projector is what every
/// tilt and distance computation consumes; the basis is kept for coordinates.
class Plane {
 public:
  Plane() = default;

  /// Orthonormalizes the columns of `spanning` (thin QR). Throws DegenerateCloud
  /// when the columns are rank deficient.
  static Plane from_basis(const Mat& spanning, std::optional<Vec> basepoint = std::nullopt);

  /// Keeps `basis` bit for bit when its columns are orthonormal to `tol`,
  /// otherwise falls back to from_basis.
  static Plane from_orthonormal(const Mat& basis, double tol = 1e-12);

  /// Coordinate plane span(e_{first}, ..., e_{first+m-1}) in R^n.
  static Plane coordinate(int n, int m, int first = 0);

  int ambient_dim() const { return static_cast<int>(basis_.rows()); }
  int dim() const { return static_cast<int>(basis_.cols()); }

  const Mat& basis() const { return basis_; }
  const Mat& projector() const { return projector_; }
  Mat normal_projector() const;
  const std::optional<Vec>& basepoint() const { return basepoint_; }

  Plane with_basepoint(const Vec& p) const;

  /// Tangential coordinates basis^T (x - basepoint) (basepoint = 0 if absent).
  Vec coordinates(const Vec& x) const;
  /// Distance from x to the affine plane basepoint + span(basis).
  double distance_to(const Vec& x) const;

  /// Checks symmetry, idempotence and trace against `tol`.
  bool satisfies_invariants(double tol = 1e-10) const;

 private:
  Plane(Mat basis, std::optional<Vec> basepoint);

  Mat basis_;
  Mat projector_;
  std::optional<Vec> basepoint_;
};

struct Ball {
  Vec center;
  double radius = 0.0;

  Ball() = default;
  Ball(Vec c, double r);

  bool contains(const Vec& x) const;
  /// True when this ball lies inside `outer` (closed containment).
  bool inside(const Ball& outer) const;
};

struct PlaneFit {
  Plane plane;             ///< affine: basepoint = centroid or pinned center
  Vec centroid;            ///< weighted centroid of the input
  Vec eigenvalues;         ///< weighted scatter eigenvalues, descending
  Mat eigenvectors;        ///< matching unit eigenvectors (columns)
  double residual = 0.0;   ///< sum of w * dist^2 to the fitted plane
  double total_weight = 0.0;
};

/// Weighted PCA plane of the columns `indices` of `points`.
///
/// With `pin` the scatter is taken about the pinned point and the plane passes
/// through it; otherwise it passes through the weighted centroid.
PlaneFit fit_plane_pca(const PointMatrix& points, std::span<const Eigen::Index> indices,
                       std::span<const double> weights, int dim,
                       const Vec* pin = nullptr);

/// Convenience overload over all columns.
PlaneFit fit_plane_pca(const PointMatrix& points, std::span<const double> weights, int dim,
                       const Vec* pin = nullptr);

/// Frobenius norm of the projector difference.
double projector_distance(const Plane& p, const Plane& q);
double projector_distance(const Mat& p, const Mat& q);

/// Bilateral Hausdorff distance between two finite point sets (columns).
double hausdorff_distance(const PointMatrix& a, const PointMatrix& b);

/// One directed distance sup_{a in A} inf_{b in B} |a - b|.
double directed_hausdorff(const PointMatrix& a, const PointMatrix& b);

struct GrassmannProjection {
  Plane plane;
  bool eigengap_tie = false;  ///< k-th and (k+1)-th eigenvalue within 1e-9
  Vec eigenvalues;            ///< of the symmetrized input, descending
};

/// Nearest rank-k orthogonal projector to (M + M^T)/2 in Frobenius norm.
GrassmannProjection grassmann_project(const Mat& m, int rank);

/// Rotates `plane` by the angle `angle` inside span(tangent_i, normal_dir).
Plane rotate_plane(const Plane& plane, int tangent_index, const Vec& normal_dir, double angle);

}  // namespace varifold
