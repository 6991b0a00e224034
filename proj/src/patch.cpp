#include "varifold/patch.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <unordered_map>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/ring.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <boost/polygon/voronoi.hpp>

#include "varifold/error.hpp"

namespace {

struct IPoint {
  long long x, y;
};

}  // namespace

template <>
struct boost::polygon::geometry_concept<IPoint> {
  using type = boost::polygon::point_concept;
};

template <>
struct boost::polygon::point_traits<IPoint> {
  using coordinate_type = int;
  static int get(const IPoint& p, boost::polygon::orientation_2d o) {
    return static_cast<int>(o == boost::polygon::HORIZONTAL ? p.x : p.y);
  }
};

namespace varifold {

using Index = Eigen::Index;
namespace bg = boost::geometry;
using BPoint = bg::model::d2::point_xy<double>;
using BPolygon = bg::model::polygon<BPoint>;

namespace {

using Edge = std::pair<int, int>;
Edge edge_key(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }

double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
}

double true_area(const PointMatrix& p, const Triangle& t) {
  const Vec a = p.col(t[1]) - p.col(t[0]);
  const Vec b = p.col(t[2]) - p.col(t[0]);
  return 0.5 * std::sqrt(std::max(0.0, a.squaredNorm() * b.squaredNorm() - a.dot(b) * a.dot(b)));
}

BPolygon to_polygon(const std::vector<Vec2>& pts) {
  BPolygon poly;
  for (const auto& p : pts) bg::append(poly.outer(), BPoint(p.x(), p.y()));
  bg::append(poly.outer(), BPoint(pts.front().x(), pts.front().y()));
  bg::correct(poly);
  return poly;
}

// Keeps the triangles reachable from `seed` through edges shared by exactly two triangles.
std::vector<Triangle> component_of(const std::vector<Triangle>& tris, int seed_vertex) {
  std::map<Edge, std::vector<int>> by_edge;
  for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
    for (int k = 0; k < 3; ++k) by_edge[edge_key(tris[t][k], tris[t][(k + 1) % 3])].push_back(t);
  }
  std::vector<char> seen(tris.size(), 0);
  std::vector<int> stack;
  for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
    if (tris[t][0] == seed_vertex || tris[t][1] == seed_vertex || tris[t][2] == seed_vertex) {
      stack.push_back(t);
      seen[t] = 1;
      break;
    }
  }
  std::vector<Triangle> out;
  while (!stack.empty()) {
    const int t = stack.back();
    stack.pop_back();
    out.push_back(tris[t]);
    for (int k = 0; k < 3; ++k) {
      const auto& nb = by_edge[edge_key(tris[t][k], tris[t][(k + 1) % 3])];
      if (nb.size() != 2) continue;
      for (int u : nb) {
        if (!seen[u]) {
          seen[u] = 1;
          stack.push_back(u);
        }
      }
    }
  }
  return out;
}

// Directed boundary edges a -> b of ccw triangles whose reverse is absent.
std::multimap<int, int> boundary_edges(const std::vector<Triangle>& tris) {
  std::set<Edge> directed;
  for (const auto& t : tris)
    for (int k = 0; k < 3; ++k) directed.insert({t[k], t[(k + 1) % 3]});
  std::multimap<int, int> out;
  for (const auto& [a, b] : directed) {
    if (!directed.count({b, a})) out.emplace(a, b);
  }
  return out;
}

// Splits a vertex with several triangle fans by keeping the largest fan.
bool remove_bowties(std::vector<Triangle>& tris) {
  const auto bnd = boundary_edges(tris);
  std::set<int> bad;
  for (auto it = bnd.begin(); it != bnd.end(); ++it) {
    if (bnd.count(it->first) > 1) bad.insert(it->first);
  }
  if (bad.empty()) return false;
  std::vector<char> drop(tris.size(), 0);
  for (int v : bad) {
    std::vector<int> inc;
    for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
      if (!drop[t] && (tris[t][0] == v || tris[t][1] == v || tris[t][2] == v)) inc.push_back(t);
    }
    // fans: connected through edges that contain v
    std::vector<int> fan(inc.size(), -1);
    int fans = 0;
    for (std::size_t a = 0; a < inc.size(); ++a) {
      if (fan[a] >= 0) continue;
      std::vector<std::size_t> st{a};
      fan[a] = fans;
      while (!st.empty()) {
        const auto x = st.back();
        st.pop_back();
        for (std::size_t b = 0; b < inc.size(); ++b) {
          if (fan[b] >= 0) continue;
          int shared = 0;
          for (int p : tris[inc[x]])
            for (int q : tris[inc[b]]) shared += (p == q && p != v);
          if (shared >= 1) {
            fan[b] = fans;
            st.push_back(b);
          }
        }
      }
      ++fans;
    }
    std::vector<int> size(static_cast<std::size_t>(fans), 0);
    for (int f : fan) ++size[static_cast<std::size_t>(f)];
    const int keep = static_cast<int>(std::max_element(size.begin(), size.end()) - size.begin());
    for (std::size_t a = 0; a < inc.size(); ++a) {
      if (fan[a] != keep) drop[inc[a]] = 1;
    }
  }
  std::vector<Triangle> kept;
  for (std::size_t t = 0; t < tris.size(); ++t) {
    if (!drop[t]) kept.push_back(tris[t]);
  }
  tris.swap(kept);
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Delaunay

std::vector<Triangle> delaunay_triangles(const Eigen::Matrix2Xd& pts) {
  const Index count = pts.cols();
  if (count < 3) return {};
  const Vec2 lo = pts.rowwise().minCoeff(), hi = pts.rowwise().maxCoeff();
  const double extent = std::max((hi - lo).maxCoeff(), 1e-300);
  const double scale = double(1 << 28) / extent;

  // quantize; coincident points keep the first index
  std::vector<IPoint> input;
  std::vector<int> original;
  std::map<std::pair<long long, long long>, int> seen;
  for (Index i = 0; i < count; ++i) {
    const IPoint p{std::llround((pts(0, i) - lo.x()) * scale), std::llround((pts(1, i) - lo.y()) * scale)};
    if (seen.emplace(std::make_pair(p.x, p.y), static_cast<int>(i)).second) {
      input.push_back(p);
      original.push_back(static_cast<int>(i));
    }
  }
  boost::polygon::voronoi_diagram<double> vd;
  boost::polygon::construct_voronoi(input.begin(), input.end(), &vd);

  std::vector<Triangle> out;
  for (const auto& vertex : vd.vertices()) {
    std::vector<int> ring;
    const auto* start = vertex.incident_edge();
    const auto* e = start;
    do {
      ring.push_back(original[e->cell()->source_index()]);
      e = e->rot_next();
    } while (e != start);
    if (ring.size() < 3) continue;
    // order around the circumcenter, then fan
    const Vec2 c((vertex.x() / scale) + lo.x(), (vertex.y() / scale) + lo.y());
    std::sort(ring.begin(), ring.end(), [&](int a, int b) {
      return std::atan2(pts(1, a) - c.y(), pts(0, a) - c.x()) < std::atan2(pts(1, b) - c.y(), pts(0, b) - c.x());
    });
    for (std::size_t k = 1; k + 1 < ring.size(); ++k) {
      Triangle t{ring[0], ring[k], ring[k + 1]};
      const double a = signed_area(pts.col(t[0]), pts.col(t[1]), pts.col(t[2]));
      if (a == 0.0) continue;
      if (a < 0.0) std::swap(t[1], t[2]);
      out.push_back(t);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// locator

PlanarLocator::PlanarLocator(const Eigen::Matrix2Xd& pts, const std::vector<Triangle>& tris)
    : pts_(pts), tris_(tris) {
  if (tris_.empty()) return;
  lo_ = pts_.rowwise().minCoeff();
  const Vec2 hi = pts_.rowwise().maxCoeff();
  const double extent = std::max((hi - lo_).maxCoeff(), 1e-300);
  const int side = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(tris_.size()) / 2.0)));
  cell_ = extent / side;
  nx_ = static_cast<int>((hi.x() - lo_.x()) / cell_) + 1;
  ny_ = static_cast<int>((hi.y() - lo_.y()) / cell_) + 1;
  buckets_.assign(static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_), {});
  for (int t = 0; t < static_cast<int>(tris_.size()); ++t) {
    Vec2 a = pts_.col(tris_[t][0]), b = a;
    for (int v : tris_[t]) {
      a = a.cwiseMin(Vec2(pts_.col(v)));
      b = b.cwiseMax(Vec2(pts_.col(v)));
    }
    const int x0 = static_cast<int>((a.x() - lo_.x()) / cell_), x1 = static_cast<int>((b.x() - lo_.x()) / cell_);
    const int y0 = static_cast<int>((a.y() - lo_.y()) / cell_), y1 = static_cast<int>((b.y() - lo_.y()) / cell_);
    for (int x = x0; x <= std::min(x1, nx_ - 1); ++x)
      for (int y = y0; y <= std::min(y1, ny_ - 1); ++y) buckets_[static_cast<std::size_t>(x * ny_ + y)].push_back(t);
  }
}

std::pair<int, Eigen::Vector3d> PlanarLocator::locate(const Vec2& q) const {
  if (tris_.empty()) return {-1, Eigen::Vector3d::Zero()};
  const int x = static_cast<int>(std::floor((q.x() - lo_.x()) / cell_));
  const int y = static_cast<int>(std::floor((q.y() - lo_.y()) / cell_));
  int best = -1;
  double best_min = -std::numeric_limits<double>::infinity();
  Eigen::Vector3d best_w = Eigen::Vector3d::Zero();
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy) {
      const int cx = x + dx, cy = y + dy;
      if (cx < 0 || cy < 0 || cx >= nx_ || cy >= ny_) continue;
      for (int t : buckets_[static_cast<std::size_t>(cx * ny_ + cy)]) {
        const Vec2 a = pts_.col(tris_[t][0]), b = pts_.col(tris_[t][1]), c = pts_.col(tris_[t][2]);
        const double area = signed_area(a, b, c);
        if (area == 0.0) continue;
        const Eigen::Vector3d w(signed_area(q, b, c) / area, signed_area(a, q, c) / area, signed_area(a, b, q) / area);
        if (w.minCoeff() > best_min) {
          best_min = w.minCoeff();
          best = t;
          best_w = w;
        }
      }
    }
  if (best < 0 || best_min < -1e-9) return {-1, best_w};
  return {best, best_w};
}

// ---------------------------------------------------------------------------
// patch

double DiskPatch::area() const {
  double s = 0.0;
  for (const auto& t : triangles) s += true_area(points, t);
  return s;
}

DiskPatch extract_disk_patch(const WeightedSurfaceSample& sample, const Vec& xi, double sigma,
                             const PatchOptions& opts) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidSpec, "patch radius must be positive");
  if (sample.intrinsic_dim() != 2) throw Error(ErrorCode::DimensionMismatch, "disk patches need a 2-dimensional sample");
  const auto ball = sample.ball_query(xi, sigma);
  if (ball.size() < 3) throw Error(ErrorCode::TooFewPoints, "fewer than three sample points in the patch ball");

  DiskPatch patch;
  patch.xi = xi;
  patch.sigma = sigma;
  patch.spacing = sample.mean_spacing();
  patch.plane = fit_plane_pca(sample.points(), ball, sample.weights(), 2).plane;

  const auto nb = static_cast<Index>(ball.size());
  PointMatrix pts(sample.ambient_dim(), nb);
  Eigen::Matrix2Xd planar(2, nb);
  for (Index k = 0; k < nb; ++k) {
    pts.col(k) = sample.point(ball[static_cast<std::size_t>(k)]);
    planar.col(k) = patch.plane.coordinates(pts.col(k));
  }

  // filter long edges and folds
  const double max_edge = opts.edge_mult * patch.spacing;
  std::vector<Triangle> tris;
  const auto all = delaunay_triangles(planar);
  for (const auto& t : all) {
    bool ok = true;
    for (int k = 0; k < 3 && ok; ++k) ok = (pts.col(t[k]) - pts.col(t[(k + 1) % 3])).norm() <= max_edge;
    const double ta = true_area(pts, t);
    if (ok) ok = ta > 0.0 && signed_area(planar.col(t[0]), planar.col(t[1]), planar.col(t[2])) >= opts.min_area_ratio * ta;
    if (ok) tris.push_back(t);
  }
  patch.dropped_triangles = static_cast<int>(all.size() - tris.size());
  if (tris.empty()) throw Error(ErrorCode::NotDiskTopology, "no admissible triangles in the patch ball");

  // component of the vertex nearest xi, cleaned of bowtie vertices
  std::vector<char> used(static_cast<std::size_t>(nb), 0);
  for (const auto& t : tris)
    for (int v : t) used[static_cast<std::size_t>(v)] = 1;
  int seed = -1;
  double seed_d = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < nb; ++k) {
    if (!used[static_cast<std::size_t>(k)]) continue;
    const double d = (pts.col(k) - xi).norm();
    if (d < seed_d) {
      seed_d = d;
      seed = static_cast<int>(k);
    }
  }
  tris = component_of(tris, seed);
  for (int guard = 0; guard < 100 && remove_bowties(tris); ++guard) tris = component_of(tris, seed);

  // compact the vertex set
  std::vector<int> remap(static_cast<std::size_t>(nb), -1);
  int next = 0;
  for (auto& t : tris)
    for (int& v : t) {
      if (remap[static_cast<std::size_t>(v)] < 0) remap[static_cast<std::size_t>(v)] = next++;
      v = remap[static_cast<std::size_t>(v)];
    }
  patch.points.resize(sample.ambient_dim(), next);
  patch.planar.resize(2, next);
  patch.source.assign(static_cast<std::size_t>(next), -1);
  for (Index k = 0; k < nb; ++k) {
    const int r = remap[static_cast<std::size_t>(k)];
    if (r < 0) continue;
    patch.points.col(r) = pts.col(k);
    patch.planar.col(r) = planar.col(k);
    patch.source[static_cast<std::size_t>(r)] = ball[static_cast<std::size_t>(k)];
  }
  patch.triangles = std::move(tris);

  // topology
  std::set<Edge> edges;
  for (const auto& t : patch.triangles)
    for (int k = 0; k < 3; ++k) edges.insert(edge_key(t[k], t[(k + 1) % 3]));
  patch.euler = next - static_cast<int>(edges.size()) + static_cast<int>(patch.triangles.size());
  const auto bnd = boundary_edges(patch.triangles);
  if (bnd.empty()) throw Error(ErrorCode::NoBoundaryCycle, "patch has no boundary");
  std::map<int, int> succ(bnd.begin(), bnd.end());
  std::vector<int> loop{succ.begin()->first};
  while (true) {
    const int v = succ.at(loop.back());
    if (v == loop.front()) break;
    loop.push_back(v);
    if (loop.size() > succ.size()) throw Error(ErrorCode::NoBoundaryCycle, "boundary edges do not close up");
  }
  if (loop.size() != succ.size() || patch.euler != 1) {
    throw Error(ErrorCode::NotDiskTopology, "patch has Euler characteristic " + std::to_string(patch.euler) + " and " +
                                                (loop.size() == succ.size() ? "one boundary loop" : "several boundary loops"));
  }
  patch.boundary = std::move(loop);
  patch.on_boundary.assign(static_cast<std::size_t>(next), 0);
  for (int v : patch.boundary) patch.on_boundary[static_cast<std::size_t>(v)] = 1;

  // sandwich defect
  std::vector<char> member(static_cast<std::size_t>(sample.size()), 0);
  for (auto s : patch.source) member[static_cast<std::size_t>(s)] = 1;
  double inner = sigma;
  for (auto i : ball) {
    if (!member[static_cast<std::size_t>(i)]) inner = std::min(inner, (sample.point(i) - xi).norm());
  }
  double rim = sigma;
  for (int v : patch.boundary) rim = std::min(rim, (patch.points.col(v) - xi).norm());
  patch.psi = std::max(0.0, 1.0 - std::min(inner, rim) / sigma);
  if (patch.psi > opts.psi_max) {
    throw Error(ErrorCode::NotDiskTopology, "sample ∩ ball is not a single disk around the center (sandwich defect " +
                                                std::to_string(patch.psi) + ")");
  }

  // boundary chord-arc behavior
  const auto& loop_v = patch.boundary;
  const std::size_t kb = loop_v.size();
  std::vector<double> arc(kb + 1, 0.0);
  for (std::size_t k = 0; k < kb; ++k) {
    arc[k + 1] = arc[k] + (patch.points.col(loop_v[(k + 1) % kb]) - patch.points.col(loop_v[k])).norm();
  }
  const double total = arc[kb];
  const std::size_t stride = std::max<std::size_t>(1, kb / static_cast<std::size_t>(std::max(1, opts.boundary_pairs)));
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (std::size_t a = 0; a < kb; a += stride)
    for (std::size_t b = a + stride; b < kb; b += stride) {
      const double chord = (patch.points.col(loop_v[a]) - patch.points.col(loop_v[b])).norm();
      const double l = std::min(arc[b] - arc[a], total - (arc[b] - arc[a]));
      if (chord <= 0.0) continue;
      patch.boundary_constant = std::max(patch.boundary_constant, l / (std::sqrt(sigma) * std::sqrt(chord)));
      const double lx = std::log(chord), ly = std::log(l);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++cnt;
    }
  const double var = cnt * sxx - sx * sx;
  patch.boundary_exponent = cnt >= 2 && var > 0.0 ? (cnt * sxy - sx * sy) / var : 1.0;
  return patch;
}

// ---------------------------------------------------------------------------
// metric

PatchMetric::PatchMetric(const DiskPatch& patch, int steiner) : vertices_(static_cast<int>(patch.vertex_count())) {
  if (steiner < 0) throw Error(ErrorCode::InvalidSpec, "Steiner count must be nonnegative");
  std::map<Edge, int> first_node;
  std::vector<Vec> pos;
  for (Index v = 0; v < patch.vertex_count(); ++v) pos.push_back(patch.points.col(v));
  auto edge_nodes = [&](int a, int b) {
    const auto key = edge_key(a, b);
    auto it = first_node.find(key);
    if (it == first_node.end()) {
      it = first_node.emplace(key, static_cast<int>(pos.size())).first;
      for (int s = 1; s <= steiner; ++s) {
        const double t = static_cast<double>(s) / (steiner + 1);
        pos.push_back((1 - t) * patch.points.col(key.first) + t * patch.points.col(key.second));
      }
    }
    std::vector<int> out;
    for (int s = 0; s < steiner; ++s) out.push_back(it->second + s);
    return out;
  };
  std::vector<std::vector<int>> per_tri;
  for (const auto& t : patch.triangles) {
    std::vector<int> nodes(t.begin(), t.end());
    for (int k = 0; k < 3; ++k) {
      const auto e = edge_nodes(t[k], t[(k + 1) % 3]);
      nodes.insert(nodes.end(), e.begin(), e.end());
    }
    per_tri.push_back(std::move(nodes));
  }
  adj_.assign(pos.size(), {});
  for (const auto& nodes : per_tri)
    for (std::size_t a = 0; a < nodes.size(); ++a)
      for (std::size_t b = a + 1; b < nodes.size(); ++b) {
        const double d = (pos[static_cast<std::size_t>(nodes[a])] - pos[static_cast<std::size_t>(nodes[b])]).norm();
        adj_[static_cast<std::size_t>(nodes[a])].emplace_back(nodes[b], d);
        adj_[static_cast<std::size_t>(nodes[b])].emplace_back(nodes[a], d);
      }
}

std::vector<double> PatchMetric::from_vertex(int v) const {
  std::vector<double> dist(adj_.size(), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[static_cast<std::size_t>(v)] = 0.0;
  heap.emplace(0.0, v);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[static_cast<std::size_t>(u)]) continue;
    for (const auto& [w, len] : adj_[static_cast<std::size_t>(u)]) {
      if (d + len < dist[static_cast<std::size_t>(w)]) {
        dist[static_cast<std::size_t>(w)] = d + len;
        heap.emplace(d + len, w);
      }
    }
  }
  dist.resize(static_cast<std::size_t>(vertices_));
  for (double d : dist) {
    if (!std::isfinite(d)) throw Error(ErrorCode::DisconnectedPatch, "patch vertex unreachable from vertex " + std::to_string(v));
  }
  return dist;
}

// ---------------------------------------------------------------------------
// cycles

double SurfaceCycle::length() const {
  double s = 0.0;
  const Index k = points.cols();
  for (Index i = 0; i < k; ++i) s += (points.col((i + 1) % k) - points.col(i)).norm();
  return s;
}

SurfaceCycle lift_cycle(const DiskPatch& patch, const std::vector<Vec2>& planar) {
  if (planar.size() < 3) throw Error(ErrorCode::NotJordan, "a cycle needs at least three points");
  const PlanarLocator loc(patch.planar, patch.triangles);
  SurfaceCycle c;
  c.planar = planar;
  c.points.resize(patch.points.rows(), static_cast<Index>(planar.size()));
  for (std::size_t k = 0; k < planar.size(); ++k) {
    const auto [t, w] = loc.locate(planar[k]);
    if (t < 0) throw Error(ErrorCode::NotJordan, "cycle leaves the patch");
    const auto& tri = patch.triangles[static_cast<std::size_t>(t)];
    c.points.col(static_cast<Index>(k)) =
        w[0] * patch.points.col(tri[0]) + w[1] * patch.points.col(tri[1]) + w[2] * patch.points.col(tri[2]);
  }
  return c;
}

SurfaceCycle circle_cycle(const DiskPatch& patch, const Vec2& center, double r, int count) {
  std::vector<Vec2> pts;
  for (int k = 0; k < count; ++k) {
    const double a = 2.0 * kPi * k / count;
    pts.push_back(center + r * Vec2(std::cos(a), std::sin(a)));
  }
  return lift_cycle(patch, pts);
}

double enclosed_area(const DiskPatch& patch, const SurfaceCycle& cycle) {
  const BPolygon poly = to_polygon(cycle.planar);
  bg::model::box<BPoint> box;
  bg::envelope(poly, box);
  double area = 0.0;
  for (const auto& t : patch.triangles) {
    std::vector<Vec2> corners;
    for (int v : t) corners.push_back(patch.planar.col(v));
    const BPolygon tri = to_polygon(corners);
    if (bg::disjoint(tri, box)) continue;
    const double planar_area = bg::area(tri);
    if (planar_area <= 0.0) continue;
    double inside;
    if (bg::within(tri, poly)) {
      inside = planar_area;
    } else {
      std::vector<BPolygon> parts;
      bg::intersection(tri, poly, parts);
      inside = 0.0;
      for (const auto& p : parts) inside += bg::area(p);
    }
    area += true_area(patch.points, t) * inside / planar_area;
  }
  return area;
}

double isoperimetric_check(const DiskPatch& patch, const SurfaceCycle& cycle) {
  if (cycle.planar.size() < 3) throw Error(ErrorCode::NotJordan, "a cycle needs at least three points");
  // is_simple on a polygon skips crossings and on a linestring is not robust
  // for finely sampled curves; ring self-intersection is both
  bg::model::ring<BPoint, false> ring;
  for (const auto& z : cycle.planar) ring.emplace_back(z.x(), z.y());
  if (!bg::equals(ring.front(), ring.back())) ring.push_back(ring.front());
  if (bg::intersects(ring)) throw Error(ErrorCode::NotJordan, "cycle intersects itself");
  const double l = cycle.length();
  return enclosed_area(patch, cycle) / (l * l);
}

double cycle_diameter_ratio(const DiskPatch& patch, const SurfaceCycle& cycle) {
  const BPolygon poly = to_polygon(cycle.planar);
  std::vector<Vec> pts;
  for (Index k = 0; k < cycle.points.cols(); ++k) pts.push_back(cycle.points.col(k));
  std::vector<Index> inside;
  for (Index v = 0; v < patch.vertex_count(); ++v) {
    if (bg::within(BPoint(patch.planar(0, v), patch.planar(1, v)), poly)) inside.push_back(v);
  }
  const std::size_t stride = std::max<std::size_t>(1, inside.size() / 400);
  for (std::size_t k = 0; k < inside.size(); k += stride) pts.push_back(patch.points.col(inside[k]));
  double diam = 0.0;
  for (std::size_t a = 0; a < pts.size(); ++a)
    for (std::size_t b = a + 1; b < pts.size(); ++b) diam = std::max(diam, (pts[a] - pts[b]).norm());
  return diam / cycle.length();
}

MetricDiagnostics intrinsic_metric_diagnostics(const DiskPatch& patch, int sources, const DiskPatch* outer) {
  MetricDiagnostics out;
  const Index nv = patch.vertex_count();
  const PatchMetric metric(patch);

  // farthest-point spread of sources, starting next to xi
  const Vec2 c = patch.plane.coordinates(patch.xi);
  std::vector<int> src;
  std::vector<double> gap(static_cast<std::size_t>(nv), std::numeric_limits<double>::infinity());
  int pick = 0;
  for (Index v = 0; v < nv; ++v) {
    if ((patch.planar.col(v) - c).norm() < (patch.planar.col(pick) - c).norm()) pick = static_cast<int>(v);
  }
  for (int s = 0; s < std::min<Index>(sources, nv); ++s) {
    src.push_back(pick);
    for (Index v = 0; v < nv; ++v) {
      gap[static_cast<std::size_t>(v)] =
          std::min(gap[static_cast<std::size_t>(v)], (patch.planar.col(v) - patch.planar.col(pick)).norm());
    }
    pick = static_cast<int>(std::max_element(gap.begin(), gap.end()) - gap.begin());
  }

  std::unique_ptr<PatchMetric> outer_metric;
  std::unordered_map<Index, int> outer_id;
  if (outer) {
    outer_metric = std::make_unique<PatchMetric>(*outer);
    for (Index v = 0; v < outer->vertex_count(); ++v) outer_id[outer->source[static_cast<std::size_t>(v)]] = static_cast<int>(v);
  }

  double sum = 0.0;
  for (int s : src) {
    const auto d = metric.from_vertex(s);
    for (Index v = 0; v < nv; ++v) {
      if (v == s) continue;
      const double chord = (patch.points.col(v) - patch.points.col(s)).norm();
      if (chord <= 0.0) continue;
      const double r = d[static_cast<std::size_t>(v)] / chord;
      out.max_ratio = std::max(out.max_ratio, r);
      sum += r;
      ++out.pairs;
    }
    if (outer_metric) {
      const auto so = outer_id.find(patch.source[static_cast<std::size_t>(s)]);
      if (so == outer_id.end()) continue;
      const auto dout = outer_metric->from_vertex(so->second);
      for (Index v = 0; v < nv; ++v) {
        const auto vo = outer_id.find(patch.source[static_cast<std::size_t>(v)]);
        if (v == s || vo == outer_id.end()) continue;
        const double base = dout[static_cast<std::size_t>(vo->second)];
        if (base > 0.0) out.max_outer_ratio = std::max(out.max_outer_ratio, d[static_cast<std::size_t>(v)] / base);
      }
    }
  }
  out.mean_ratio = out.pairs ? sum / out.pairs : 0.0;

  // circles of a quarter radius that stay well inside the patch
  const double r = 0.25 * patch.sigma;
  const double reach = (1.0 - patch.psi) * patch.sigma - 2.0 * patch.spacing;
  out.cycle_diameter_ratio_min = std::numeric_limits<double>::infinity();
  for (int s : src) {
    const Vec2 center = patch.planar.col(s);
    if ((center - c).norm() + r > reach) continue;
    try {
      const double q = cycle_diameter_ratio(patch, circle_cycle(patch, center, r));
      out.cycle_diameter_ratio_max = std::max(out.cycle_diameter_ratio_max, q);
      out.cycle_diameter_ratio_min = std::min(out.cycle_diameter_ratio_min, q);
      ++out.cycles;
    } catch (const Error&) {
    }
  }
  if (out.cycles == 0) out.cycle_diameter_ratio_min = 0.0;
  return out;
}

}  // namespace varifold
