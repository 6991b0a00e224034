#pragma once

#include <vector>

#include "varifold/sample.hpp"

namespace varifold {

/// Triangle soup with shared vertices; vertices are columns.
struct TriangleMesh {
  PointMatrix vertices;
  std::vector<Triangle> triangles;

  Eigen::Index vertex_count() const { return vertices.cols(); }
  double triangle_area(std::size_t t) const;
  double area() const;
};

/// Subdivided icosahedron projected onto the sphere of the given radius
/// centered at `center` (R^3).
TriangleMesh icosphere(int subdivisions, double radius = 1.0, const Vec3& center = Vec3::Zero());

/// Throws NonManifoldMesh when an edge is shared by more than two triangles.
void check_manifold_edges(const TriangleMesh& mesh);

/// One third of the incident triangle area per vertex.
std::vector<double> barycentric_areas(const TriangleMesh& mesh);

/// Vertices become atoms: weight = barycentric area, tangent plane = nearest
/// 2-plane to the area-weighted average of the incident face projectors.
/// Triangles are kept on the sample.
WeightedSurfaceSample sample_from_mesh(const TriangleMesh& mesh);

/// Mixed Voronoi cell areas (circumcentric for acute triangles, area halves
/// and quarters for obtuse ones). Sums to the mesh area.
std::vector<double> mixed_voronoi_areas(const TriangleMesh& mesh);

struct CotangentCurvature {
  std::vector<Vec> h;         ///< (1 / 2A_i) sum_j, A_i the mixed area, (cot a + cot b)(x_j - x_i)
  std::vector<char> boundary; ///< vertices on a boundary edge (value unreliable)
};

/// Discrete Laplace-Beltrami of the position; approximates the mean curvature vector.
CotangentCurvature cotangent_mean_curvature(const TriangleMesh& mesh);

/// Each triangle split into four through edge midpoints (midpoints stay on the
/// chords, no projection).
TriangleMesh midpoint_subdivide(const TriangleMesh& mesh);

}  // namespace varifold
