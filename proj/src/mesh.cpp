#include "varifold/mesh.hpp"

#include <map>
#include <utility>

#include "varifold/error.hpp"

namespace varifold {

using Index = Eigen::Index;

double TriangleMesh::triangle_area(std::size_t t) const {
  const auto& tri = triangles[t];
  const Vec a = vertices.col(tri[1]) - vertices.col(tri[0]);
  const Vec b = vertices.col(tri[2]) - vertices.col(tri[0]);
  // Gram determinant works in any ambient dimension
  const double g = a.squaredNorm() * b.squaredNorm() - a.dot(b) * a.dot(b);
  return 0.5 * std::sqrt(std::max(0.0, g));
}

double TriangleMesh::area() const {
  double s = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) s += triangle_area(t);
  return s;
}

namespace {

using Edge = std::pair<int, int>;

Edge edge_key(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }

// Splits every triangle in four; `midpoint` maps an edge to the new vertex position.
template <typename Midpoint>
TriangleMesh split4(const TriangleMesh& mesh, Midpoint&& midpoint) {
  std::map<Edge, int> mids;
  std::vector<Vec> extra;
  const int base = static_cast<int>(mesh.vertices.cols());
  auto mid = [&](int a, int b) {
    const auto key = edge_key(a, b);
    auto it = mids.find(key);
    if (it != mids.end()) return it->second;
    const int id = base + static_cast<int>(extra.size());
    extra.push_back(midpoint(mesh.vertices.col(a), mesh.vertices.col(b)));
    mids.emplace(key, id);
    return id;
  };
  TriangleMesh out;
  for (const auto& t : mesh.triangles) {
    const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
    out.triangles.push_back({t[0], ab, ca});
    out.triangles.push_back({t[1], bc, ab});
    out.triangles.push_back({t[2], ca, bc});
    out.triangles.push_back({ab, bc, ca});
  }
  out.vertices.resize(mesh.vertices.rows(), base + static_cast<Index>(extra.size()));
  out.vertices.leftCols(base) = mesh.vertices;
  for (std::size_t k = 0; k < extra.size(); ++k) out.vertices.col(base + static_cast<Index>(k)) = extra[k];
  return out;
}

}  // namespace

TriangleMesh icosphere(int subdivisions, double radius, const Vec3& center) {
  if (subdivisions < 0) throw Error(ErrorCode::InvalidSpec, "subdivision level must be nonnegative");
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidSpec, "sphere radius must be positive");
  const double t = 0.5 * (1.0 + std::sqrt(5.0));
  const double raw[12][3] = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                             {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  TriangleMesh mesh;
  mesh.vertices.resize(3, 12);
  for (int i = 0; i < 12; ++i) mesh.vertices.col(i) = Vec3(raw[i][0], raw[i][1], raw[i][2]).normalized();
  mesh.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                    {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                    {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    mesh = split4(mesh, [](const Vec& a, const Vec& b) { return Vec((a + b).normalized()); });
  }
  for (Index i = 0; i < mesh.vertices.cols(); ++i) {
    mesh.vertices.col(i) = center + radius * mesh.vertices.col(i);
  }
  return mesh;
}

TriangleMesh midpoint_subdivide(const TriangleMesh& mesh) {
  return split4(mesh, [](const Vec& a, const Vec& b) { return Vec(0.5 * (a + b)); });
}

void check_manifold_edges(const TriangleMesh& mesh) {
  std::map<Edge, int> count;
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      if (t[k] < 0 || t[k] >= mesh.vertices.cols()) throw Error(ErrorCode::ParseError, "triangle index out of range");
      if (++count[edge_key(t[k], t[(k + 1) % 3])] > 2) {
        throw Error(ErrorCode::NonManifoldMesh, "edge shared by more than two triangles");
      }
    }
  }
}

std::vector<double> barycentric_areas(const TriangleMesh& mesh) {
  std::vector<double> a(static_cast<std::size_t>(mesh.vertices.cols()), 0.0);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const double third = mesh.triangle_area(t) / 3.0;
    for (int v : mesh.triangles[t]) a[static_cast<std::size_t>(v)] += third;
  }
  return a;
}

WeightedSurfaceSample sample_from_mesh(const TriangleMesh& mesh) {
  check_manifold_edges(mesh);
  const auto n = mesh.vertices.rows();
  const auto nv = static_cast<std::size_t>(mesh.vertices.cols());
  std::vector<double> area(nv, 0.0);
  std::vector<Mat> proj(nv, Mat::Zero(n, n));
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double a = mesh.triangle_area(t);
    if (a <= 0.0) continue;
    Mat span(n, 2);
    span.col(0) = mesh.vertices.col(tri[1]) - mesh.vertices.col(tri[0]);
    span.col(1) = mesh.vertices.col(tri[2]) - mesh.vertices.col(tri[0]);
    const Mat p = Plane::from_basis(span).projector();
    for (int v : tri) {
      area[static_cast<std::size_t>(v)] += a / 3.0;
      proj[static_cast<std::size_t>(v)] += a * p;
    }
  }
  std::vector<Plane> planes;
  planes.reserve(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    if (!(area[v] > 0.0)) {
      throw Error(ErrorCode::DegenerateTriangle, "vertex " + std::to_string(v) + " has no incident area");
    }
    planes.push_back(grassmann_project(proj[v], 2).plane);
  }
  WeightedSurfaceSample s(mesh.vertices, std::move(area), std::move(planes), 2);
  s.set_triangles(mesh.triangles);
  return s;
}

std::vector<double> mixed_voronoi_areas(const TriangleMesh& mesh) {
  std::vector<double> out(static_cast<std::size_t>(mesh.vertices.cols()), 0.0);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double area = mesh.triangle_area(t);
    if (area <= 0.0) continue;
    double cot[3];
    int obtuse = -1;
    for (int k = 0; k < 3; ++k) {
      const Vec u = mesh.vertices.col(tri[(k + 1) % 3]) - mesh.vertices.col(tri[k]);
      const Vec v = mesh.vertices.col(tri[(k + 2) % 3]) - mesh.vertices.col(tri[k]);
      cot[k] = u.dot(v) / (2.0 * area);
      if (u.dot(v) < 0.0) obtuse = k;
    }
    for (int k = 0; k < 3; ++k) {
      auto& a = out[static_cast<std::size_t>(tri[k])];
      if (obtuse < 0) {
        // circumcentric part: edge to vertex k+1 is opposite k+2 and vice versa
        const double e1 = (mesh.vertices.col(tri[(k + 1) % 3]) - mesh.vertices.col(tri[k])).squaredNorm();
        const double e2 = (mesh.vertices.col(tri[(k + 2) % 3]) - mesh.vertices.col(tri[k])).squaredNorm();
        a += (e1 * cot[(k + 2) % 3] + e2 * cot[(k + 1) % 3]) / 8.0;
      } else {
        a += obtuse == k ? area / 2.0 : area / 4.0;
      }
    }
  }
  return out;
}

CotangentCurvature cotangent_mean_curvature(const TriangleMesh& mesh) {
  const auto n = mesh.vertices.rows();
  const auto nv = static_cast<std::size_t>(mesh.vertices.cols());
  CotangentCurvature out;
  out.h.assign(nv, Vec::Zero(n));
  out.boundary.assign(nv, 0);
  const auto area = mixed_voronoi_areas(mesh);
  std::map<Edge, int> edges;
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) ++edges[edge_key(t[k], t[(k + 1) % 3])];
    for (int k = 0; k < 3; ++k) {
      // angle at vertex k is opposite edge (k+1, k+2)
      const int i = t[k], a = t[(k + 1) % 3], b = t[(k + 2) % 3];
      const Vec u = mesh.vertices.col(a) - mesh.vertices.col(i);
      const Vec v = mesh.vertices.col(b) - mesh.vertices.col(i);
      const double cross = std::sqrt(std::max(0.0, u.squaredNorm() * v.squaredNorm() - u.dot(v) * u.dot(v)));
      if (cross <= 0.0) throw Error(ErrorCode::DegenerateTriangle, "zero-area triangle");
      const double cot = u.dot(v) / cross;
      const Vec e = mesh.vertices.col(b) - mesh.vertices.col(a);
      out.h[static_cast<std::size_t>(a)] += cot * e;
      out.h[static_cast<std::size_t>(b)] -= cot * e;
    }
  }
  for (const auto& [e, c] : edges) {
    if (c == 1) out.boundary[static_cast<std::size_t>(e.first)] = out.boundary[static_cast<std::size_t>(e.second)] = 1;
  }
  for (std::size_t v = 0; v < nv; ++v) {
    if (area[v] > 0.0) out.h[v] /= 2.0 * area[v];
  }
  return out;
}

}  // namespace varifold
