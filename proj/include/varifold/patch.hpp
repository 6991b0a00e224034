#pragma once

#include <memory>
#include <vector>

#include "varifold/mesh.hpp"

namespace varifold {

struct PatchOptions {
  double edge_mult = 3.0;     ///< drop triangles with an edge longer than edge_mult * mean spacing
  double min_area_ratio = 0.5;///< drop triangles whose projected/true area ratio is below this (folds)
  double psi_max = 0.25;      ///< largest admissible sandwich defect
  int boundary_pairs = 400;   ///< boundary vertices used for the chord-arc fit (subsampled beyond)
};

/// Triangulated piece of the sample around xi with disk topology. Vertices
/// are sample points; `plane` holds their coordinates in the PCA plane of the
/// ball, where the triangulation is Delaunay.
struct DiskPatch {
  Vec xi;
  double sigma = 0.0;
  double spacing = 0.0;                 ///< sample mean spacing
  Plane plane;                          ///< PCA plane of sample ∩ B(xi, sigma), based at its centroid
  std::vector<Eigen::Index> source;     ///< sample index per vertex
  PointMatrix points;                   ///< n x V
  Eigen::Matrix2Xd planar;              ///< 2 x V plane coordinates
  std::vector<Triangle> triangles;      ///< counterclockwise in planar coordinates
  std::vector<int> boundary;            ///< boundary loop, counterclockwise
  std::vector<char> on_boundary;
  int euler = 0;
  double psi = 0.0;                     ///< B(xi, (1 - psi) sigma) ∩ sample ⊆ patch, boundary in the annulus
  double boundary_constant = 0.0;       ///< max l(x, y) / (sigma^(1/2) |x - y|^(1/2)) over boundary pairs
  double boundary_exponent = 0.0;       ///< slope of log l against log |x - y|
  int dropped_triangles = 0;

  Eigen::Index vertex_count() const { return points.cols(); }
  TriangleMesh mesh() const { return {points, triangles}; }
  double area() const;
};

/// Delaunay triangulation of sample ∩ B(xi, sigma) in its PCA plane, filtered
/// for long edges and folds, restricted to the edge-connected component of the
/// vertex nearest xi. Throws NotDiskTopology (Euler characteristic, several
/// boundary loops, sandwich defect above psi_max) or NoBoundaryCycle.
DiskPatch extract_disk_patch(const WeightedSurfaceSample& sample, const Vec& xi, double sigma,
                             const PatchOptions& opts = {});

/// Delaunay triangles of planar points (ccw). Cocircular cells are fanned.
std::vector<Triangle> delaunay_triangles(const Eigen::Matrix2Xd& pts);

/// Point location in a planar triangulation by bucketing triangle boxes.
class PlanarLocator {
 public:
  PlanarLocator() = default;
  PlanarLocator(const Eigen::Matrix2Xd& pts, const std::vector<Triangle>& tris);

  /// Containing triangle and barycentric weights, or -1 when outside (with a
  /// relative tolerance of 1e-9 on the weights).
  std::pair<int, Eigen::Vector3d> locate(const Vec2& q) const;

 private:
  Eigen::Matrix2Xd pts_;
  std::vector<Triangle> tris_;
  Vec2 lo_ = Vec2::Zero();
  double cell_ = 1.0;
  int nx_ = 0, ny_ = 0;
  std::vector<std::vector<int>> buckets_;
};

// ---------------------------------------------------------------------------
// intrinsic metric

/// Shortest paths on the polyhedral patch, approximated by a Steiner graph:
/// `steiner` extra nodes per edge, straight segments across each triangle.
class PatchMetric {
 public:
  explicit PatchMetric(const DiskPatch& patch, int steiner = 6);

  /// Distances from a vertex to every vertex. Throws DisconnectedPatch when
  /// some vertex is unreachable.
  std::vector<double> from_vertex(int v) const;

  int node_count() const { return static_cast<int>(adj_.size()); }

 private:
  int vertices_ = 0;
  std::vector<std::vector<std::pair<int, double>>> adj_;
};

/// Closed polyline on the patch, kept with its planar preimage.
struct SurfaceCycle {
  std::vector<Vec2> planar;
  PointMatrix points;  ///< n x K lifted points
  double length() const;
};

/// Lifts planar points through the patch triangulation (barycentric). Throws
/// NotJordan when a point falls outside the patch.
SurfaceCycle lift_cycle(const DiskPatch& patch, const std::vector<Vec2>& planar);

/// Circle of radius r about a planar center, `count` points.
SurfaceCycle circle_cycle(const DiskPatch& patch, const Vec2& center, double r, int count = 128);

/// Area of the patch enclosed by the cycle (planar clipping, true triangle areas).
double enclosed_area(const DiskPatch& patch, const SurfaceCycle& cycle);

/// H^2(enclosed) / l(cycle)^2. Throws NotJordan for self-intersecting cycles.
double isoperimetric_check(const DiskPatch& patch, const SurfaceCycle& cycle);

struct MetricDiagnostics {
  double max_ratio = 0.0;        ///< max d / |x - y| over sampled pairs
  double mean_ratio = 0.0;
  int pairs = 0;
  double max_outer_ratio = 1.0;  ///< max d_patch / d_outer (1 when no outer patch is given)
  double cycle_diameter_ratio_max = 0.0;  ///< max diam(enclosed) / length over sampled cycles
  double cycle_diameter_ratio_min = 0.0;
  int cycles = 0;
};

/// Shortest-path versus chord comparison from `sources` spread vertices; the
/// patch metric against the metric of a larger patch when `outer` is given;
/// diameter / length of sampled circles.
MetricDiagnostics intrinsic_metric_diagnostics(const DiskPatch& patch, int sources = 12,
                                               const DiskPatch* outer = nullptr);

/// Diameter of cycle points plus enclosed vertices over the cycle length.
double cycle_diameter_ratio(const DiskPatch& patch, const SurfaceCycle& cycle);

}  // namespace varifold
