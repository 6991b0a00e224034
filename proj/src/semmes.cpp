#include "varifold/semmes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>

#include "varifold/error.hpp"
#include "varifold/multiscale.hpp"
#include "varifold/parallel.hpp"

namespace varifold {

using Index = Eigen::Index;

namespace {

double bump(double sq, double radius) {
  const double s = 1.0 - sq / (radius * radius);
  return s > 0.0 ? s * s : 0.0;
}

std::string where(const Vec& x) {
  std::string s = "(";
  for (Index k = 0; k < x.size(); ++k) s += (k ? ", " : "") + std::to_string(x[k]);
  return s + ")";
}

// Uniform grid of buckets for incremental "is anything within h" queries.
class CoverageGrid {
 public:
  explicit CoverageGrid(double cell) : cell_(cell) {}

  void insert(const Vec& p, Index id) { cells_[key(p)].push_back({p, id}); }

  // Nearest stored point within `radius` (radius <= cell), or -1.
  std::pair<Index, double> nearest_within(const Vec& p, double radius) const {
    std::vector<long long> base = coords(p);
    std::vector<long long> probe(base.size());
    Index best = -1;
    double best_d = radius;
    const auto dims = base.size();
    std::size_t total = 1;
    for (std::size_t k = 0; k < dims; ++k) total *= 3;
    for (std::size_t code = 0; code < total; ++code) {
      std::size_t c = code;
      for (std::size_t k = 0; k < dims; ++k) {
        probe[k] = base[k] + static_cast<long long>(c % 3) - 1;
        c /= 3;
      }
      const auto it = cells_.find(hash(probe));
      if (it == cells_.end()) continue;
      for (const auto& [q, id] : it->second) {
        const double d = distance(p, q);
        if (d <= best_d && (best < 0 || d < best_d || id < best)) {
          best = id;
          best_d = d;
        }
      }
    }
    return {best, best_d};
  }

 private:
  std::vector<long long> coords(const Vec& p) const {
    std::vector<long long> c(static_cast<std::size_t>(p.size()));
    for (Index k = 0; k < p.size(); ++k) c[static_cast<std::size_t>(k)] = static_cast<long long>(std::floor(p[k] / cell_));
    return c;
  }
  static std::uint64_t hash(const std::vector<long long>& c) {
    std::uint64_t h = 1469598103934665603ull;
    for (long long v : c) {
      h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return h;
  }
  std::uint64_t key(const Vec& p) const { return hash(coords(p)); }

  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::pair<Vec, Index>>> cells_;
};

// All lattice offsets k * step with |k * step| <= radius in R^m.
std::vector<Vec> lattice_offsets(int m, double step, double radius) {
  const int reach = static_cast<int>(std::floor(radius / step));
  std::vector<Vec> out;
  std::vector<int> k(static_cast<std::size_t>(m), -reach);
  while (true) {
    Vec t(m);
    for (int a = 0; a < m; ++a) t[a] = step * k[static_cast<std::size_t>(a)];
    if (t.norm() <= radius) out.push_back(t);
    int a = 0;
    while (a < m && ++k[static_cast<std::size_t>(a)] > reach) {
      k[static_cast<std::size_t>(a)] = -reach;
      ++a;
    }
    if (a == m) break;
  }
  return out;
}

// Weighted affine least squares h(s) = a + A s over centered, scaled
// coordinates. Falls back to the weighted mean and then to zero.
struct AffineFit {
  Vec offset;
  Mat slope;
  int order = 1;  // 1 affine, 0 constant, -1 nothing
};

AffineFit fit_affine(const std::vector<Vec>& s, const std::vector<Vec>& h, const std::vector<double>& w, int m, int n) {
  AffineFit out;
  out.offset = Vec::Zero(n);
  out.slope = Mat::Zero(n, m);
  Mat g = Mat::Zero(m + 1, m + 1);
  Mat r = Mat::Zero(m + 1, n);
  Vec row(m + 1);
  int used = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (!(w[k] > 0.0)) continue;
    row[0] = 1.0;
    row.tail(m) = s[k];
    g.noalias() += w[k] * row * row.transpose();
    r.noalias() += w[k] * row * h[k].transpose();
    ++used;
  }
  if (used == 0) {
    out.order = -1;
    return out;
  }
  if (used >= m + 1) {
    const Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(g, Eigen::EigenvaluesOnly).eigenvalues();
    if (ev[0] > 1e-10 * ev[m]) {
      const Mat sol = g.ldlt().solve(r);
      out.offset = sol.row(0).transpose();
      out.slope = sol.bottomRows(m).transpose();
      return out;
    }
  }
  out.offset = r.row(0).transpose() / g(0, 0);
  out.order = 0;
  return out;
}

Mat complement_frame(const Mat& normal, int m) {
  const auto n = normal.rows();
  return grassmann_project(Mat::Identity(n, n) - normal, m).plane.basis();
}

}  // namespace

// ---------------------------------------------------------------------------
// gauge

double DeltaField::max() const {
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

namespace {

double initial_gauge(const Vec& x, const Ball& domain, double divisor) {
  const double r = distance(x, domain.center);
  if (r > domain.radius * (1.0 + 1e-12)) {
    throw Error(ErrorCode::PointOutsideDomain, "sample point " + where(x) + " lies outside the domain ball");
  }
  return std::max(0.0, domain.radius - r) / divisor;
}

}  // namespace

DeltaField make_delta0(const WeightedSurfaceSample& sample, const Ball& domain, double divisor) {
  if (!(divisor > 0.0)) throw Error(ErrorCode::InvalidSpec, "gauge divisor must be positive");
  DeltaField d;
  d.values.resize(static_cast<std::size_t>(sample.size()));
  for (Index i = 0; i < sample.size(); ++i) {
    d.values[static_cast<std::size_t>(i)] = initial_gauge(sample.point(i), domain, divisor);
  }
  return d;
}

DeltaField next_delta(const WeightedSurfaceSample& sample, const FineSet& fine, const Ball& domain, double divisor) {
  if (fine.members.empty()) throw Error(ErrorCode::EmptyFineSet, "next gauge needs a nonempty fine set");
  PointMatrix pts(sample.ambient_dim(), static_cast<Index>(fine.members.size()));
  for (std::size_t k = 0; k < fine.members.size(); ++k) pts.col(static_cast<Index>(k)) = sample.point(fine.members[k]);
  const KdTree tree(pts);
  DeltaField d = make_delta0(sample, domain, divisor);
  d.source = GaugeSource::FineSetDistance;
  parallel_for(d.size(), [&](std::size_t i) {
    const auto ii = static_cast<Index>(i);
    d.values[i] = fine.is_member[i] ? 0.0 : std::min(d.values[i], tree.nearest(sample.point(ii)).second);
  });
  return d;
}

// ---------------------------------------------------------------------------
// fine set

FineSet extract_fine_set(const WeightedSurfaceSample& sample, const DeltaField& delta, double nu, double floor) {
  if (!(nu > 0.0)) throw Error(ErrorCode::InvalidSpec, "fine-set threshold nu must be positive");
  if (static_cast<Index>(delta.size()) != sample.size()) throw Error(ErrorCode::DimensionMismatch, "gauge size");
  const auto count = delta.size();
  const int m = sample.intrinsic_dim();
  FineSet f;
  f.nu = nu;
  f.is_member.assign(count, 0);
  f.planes.resize(count);
  f.tilt.assign(count, 0.0);
  parallel_for(count, [&](std::size_t i) {
    const auto ii = static_cast<Index>(i);
    const Vec x = sample.point(ii);
    const double r = 2.0 * delta[i];
    Plane plane = sample.tangent(ii).with_basepoint(x);
    if (r > 0.0) {
      const auto idx = sample.ball_query(x, r);
      if (static_cast<int>(idx.size()) > m) {
        try {
          plane = fit_plane_pca(sample.points(), idx, sample.weights(), m).plane;
        } catch (const Error&) {
        }
      }
      if (r >= floor * (1.0 - 1e-12)) f.tilt[i] = local_maximal_tilt(sample, x, r, plane, floor);
    }
    f.planes[i] = std::move(plane);
    f.is_member[i] = delta[i] == 0.0 || f.tilt[i] <= nu;
  });
  for (std::size_t i = 0; i < count; ++i) {
    if (f.is_member[i]) {
      f.members.push_back(static_cast<Index>(i));
    } else {
      f.bad_weight += sample.weight(static_cast<Index>(i));
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// net

SeparatedNet build_separated_net(const WeightedSurfaceSample& sample, const DeltaField& delta) {
  std::vector<Index> order;
  for (Index i = 0; i < sample.size(); ++i) {
    if (delta[static_cast<std::size_t>(i)] > 0.0) order.push_back(i);
  }
  if (order.empty()) throw Error(ErrorCode::EmptySet, "gauge vanishes everywhere; nothing to cover");
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return delta[static_cast<std::size_t>(a)] > delta[static_cast<std::size_t>(b)];
  });
  const double dmax = delta[static_cast<std::size_t>(order.front())];

  // packing: reject x when an accepted y has |x - y| < 5e-4 delta(y)
  const double pack = 5e-4;
  std::vector<char> accepted(static_cast<std::size_t>(sample.size()), 0);
  SeparatedNet net;
  net.max_delta = dmax;
  std::vector<Index> near;
  for (Index x : order) {
    sample.ball_query(sample.point(x), pack * dmax, near);
    bool ok = true;
    for (Index y : near) {
      if (accepted[static_cast<std::size_t>(y)] &&
          distance(sample.point(x), sample.point(y)) < pack * delta[static_cast<std::size_t>(y)]) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    accepted[static_cast<std::size_t>(x)] = 1;
    net.centers.push_back(x);
    net.delta.push_back(delta[static_cast<std::size_t>(x)]);
  }

  const auto count = net.centers.size();
  net.points.resize(sample.ambient_dim(), static_cast<Index>(count));
  for (std::size_t k = 0; k < count; ++k) net.points.col(static_cast<Index>(k)) = sample.point(net.centers[k]);
  net.index = std::make_shared<const KdTree>(net.points);

  // coloring: same group only when |x - z| >= max(delta(x), delta(z)) / 10
  net.group.assign(count, -1);
  std::vector<char> used;
  for (std::size_t k = 0; k < count; ++k) {
    net.index->ball_query(net.points.col(static_cast<Index>(k)), dmax / 10.0, near);
    used.assign(used.size(), 0);
    for (Index j : near) {
      const auto jj = static_cast<std::size_t>(j);
      if (net.group[jj] < 0 || jj == k) continue;
      const double sep = std::max(net.delta[k], net.delta[jj]) / 10.0;
      if (distance(net.points.col(static_cast<Index>(k)), net.points.col(j)) < sep) {
        if (static_cast<std::size_t>(net.group[jj]) >= used.size()) used.resize(static_cast<std::size_t>(net.group[jj]) + 1, 0);
        used[static_cast<std::size_t>(net.group[jj])] = 1;
      }
    }
    int g = 0;
    while (static_cast<std::size_t>(g) < used.size() && used[static_cast<std::size_t>(g)]) ++g;
    net.group[k] = g;
    net.groups = std::max(net.groups, g + 1);
  }
  net.group_bound_holds = net.groups <= std::pow(10.0, 5.0 * sample.intrinsic_dim() + 1.0);
  return net;
}

std::vector<std::pair<std::size_t, double>> partition_of_unity(const SeparatedNet& net, const Vec& query) {
  std::vector<std::pair<std::size_t, double>> out;
  if (!net.index || net.centers.empty()) throw Error(ErrorCode::UncoveredQuery, "empty net covers nothing");
  double total = 0.0;
  for (Index j : net.index->ball_query(query, 0.5 * net.max_delta)) {
    const auto jj = static_cast<std::size_t>(j);
    const double b = bump(squared_distance(query, net.points.col(j)), 0.5 * net.delta[jj]);
    if (b > 0.0) {
      out.emplace_back(jj, b);
      total += b;
    }
  }
  if (!(total > 0.0)) throw Error(ErrorCode::UncoveredQuery, "no partition-of-unity bump covers " + where(query));
  for (auto& [j, t] : out) t /= total;
  return out;
}

// ---------------------------------------------------------------------------
// smoothed surface

Vec GraphPatch::position(const Vec& t) const {
  return *plane.basepoint() + plane.basis() * t + offset + slope * t;
}

WeightedSurfaceSample SmoothedSurfaceStage::as_sample() const {
  return WeightedSurfaceSample(points, weights, tangents, intrinsic_dim);
}

namespace {

GraphPatch fit_patch(const WeightedSurfaceSample& sample, const FineSet& fine, Index u, double du) {
  const int m = sample.intrinsic_dim();
  const int n = sample.ambient_dim();
  GraphPatch patch;
  patch.center = u;
  patch.plane = fine.planes[static_cast<std::size_t>(u)];
  const Vec& o = *patch.plane.basepoint();
  const Mat& b = patch.plane.basis();
  const Vec tu = b.transpose() * (sample.point(u) - o);

  // fine points of B(u, delta/2); widened to the reference ball B(u, 2 delta)
  // when the small ball holds too few of them
  AffineFit fit;
  double rad = 0.5 * du;
  for (int attempt = 0; attempt < 2; ++attempt, rad = 2.0 * du) {
    std::vector<Vec> s, h;
    std::vector<double> w;
    for (Index z : sample.ball_query(sample.point(u), rad)) {
      if (!fine.is_member[static_cast<std::size_t>(z)]) continue;
      const double wb = bump(squared_distance(sample.point(z), sample.point(u)), rad);
      if (!(wb > 0.0)) continue;
      const Vec d = sample.point(z) - o;
      const Vec t = b.transpose() * d;
      s.push_back((t - tu) / rad);
      h.push_back(d - b * t);
      w.push_back(sample.weight(z) * wb);
    }
    patch.support = static_cast<int>(w.size());
    fit = fit_affine(s, h, w, m, n);
    if (fit.order == 1) break;
  }
  patch.fallback = fit.order < 0;
  // back from scaled, centered coordinates
  patch.slope = fit.slope / rad;
  patch.offset = fit.offset - patch.slope * tu;
  patch.widened = rad > du;
  return patch;
}

// Patches glued by the partition of unity: sum_j theta_j(p) g_j(p), with
// g_j(p) the point of patch j above p. Tangent = nearest m-plane to the
// blended patch projectors.
std::pair<Vec, Plane> glued_point(const SeparatedNet& net, const std::vector<GraphPatch>& patches,
                                  const std::vector<Mat>& patch_proj, const Vec& p0, int m) {
  const auto n = p0.size();
  Vec p = Vec::Zero(n);
  Mat proj = Mat::Zero(n, n);
  for (const auto& [j, theta] : partition_of_unity(net, p0)) {
    const GraphPatch& g = patches[j];
    p += theta * g.position(g.plane.basis().transpose() * (p0 - *g.plane.basepoint()));
    proj += theta * patch_proj[j];
  }
  return {p, grassmann_project(proj, m).plane};
}

}  // namespace

SmoothedSurfaceStage build_sigma_delta(const WeightedSurfaceSample& sample, const FineSet& fine,
                                       const SeparatedNet& net, const DeltaField& delta, double nu,
                                       const StageOptions& opts) {
  const int m = sample.intrinsic_dim();
  const int n = sample.ambient_dim();
  SmoothedSurfaceStage st;
  st.ambient_dim = n;
  st.intrinsic_dim = m;
  st.step = sample.mean_spacing();
  const double step = st.step;

  std::vector<Vec> pts;
  CoverageGrid grid(step);
  for (Index i : fine.members) {
    pts.push_back(sample.point(i));
    st.weights.push_back(sample.weight(i));
    st.tangents.push_back(sample.tangent(i));
    st.delta.push_back(delta[static_cast<std::size_t>(i)]);
    st.origin.push_back(i);
    st.synthesized.push_back(0);
    grid.insert(pts.back(), static_cast<Index>(pts.size() - 1));
  }

  const auto centers = net.centers.size();
  st.patches.resize(centers);
  parallel_for(centers, [&](std::size_t k) { st.patches[k] = fit_patch(sample, fine, net.centers[k], net.delta[k]); });
  for (const auto& p : st.patches) st.fallback_patches += p.fallback;
  std::vector<Mat> patch_proj(centers);
  parallel_for(centers, [&](std::size_t k) {
    patch_proj[k] = Plane::from_basis(st.patches[k].plane.basis() + st.patches[k].slope).projector();
  });

  std::vector<std::vector<std::size_t>> by_group(static_cast<std::size_t>(net.groups));
  for (std::size_t k = 0; k < centers; ++k) by_group[static_cast<std::size_t>(net.group[k])].push_back(k);

  struct Node {
    Vec p;
    Plane tangent;
  };
  const double cell = std::pow(step, m);
  for (const auto& members : by_group) {
    std::vector<std::vector<Node>> fresh(members.size());
    std::vector<double> mismatch(members.size(), 0.0);
    parallel_for(members.size(), [&](std::size_t g) {
      const std::size_t k = members[g];
      const GraphPatch& patch = st.patches[k];
      const Vec& o = *patch.plane.basepoint();
      const Mat& b = patch.plane.basis();
      const Vec tu = b.transpose() * (sample.point(net.centers[k]) - o);
      for (const Vec& dt : lattice_offsets(m, step, 2e-3 * net.delta[k])) {
        const auto [p, tangent] = glued_point(net, st.patches, patch_proj, patch.position(tu + dt), m);
        const auto [hit, d] = grid.nearest_within(p, step);
        if (hit >= 0) {
          const Vec e = pts[static_cast<std::size_t>(hit)];
          const Vec on_graph = patch.position(b.transpose() * (e - o));
          mismatch[g] = std::max(mismatch[g], distance(e, on_graph));
          continue;
        }
        fresh[g].push_back({p, tangent});
      }
    });
    for (std::size_t g = 0; g < members.size(); ++g) {
      st.overlap_mismatch = std::max(st.overlap_mismatch, mismatch[g]);
      const std::size_t k = members[g];
      for (auto& node : fresh[g]) {
        pts.push_back(node.p);
        st.weights.push_back(cell);
        st.tangents.push_back(std::move(node.tangent));
        st.delta.push_back(net.delta[k]);
        st.origin.push_back(net.centers[k]);
        st.synthesized.push_back(1);
        grid.insert(pts.back(), static_cast<Index>(pts.size() - 1));
        ++st.synthesized_count;
      }
    }
  }

  st.points.resize(n, static_cast<Index>(pts.size()));
  for (std::size_t k = 0; k < pts.size(); ++k) st.points.col(static_cast<Index>(k)) = pts[k];
  if (pts.empty()) throw Error(ErrorCode::EmptySet, "smoothed stage has no points");
  st.index = std::make_shared<const KdTree>(st.points);

  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (st.synthesized[k]) st.synthesis_distance = std::max(st.synthesis_distance, sample.nearest(pts[k]).second);
  }

  // graph test over each center's reference plane on B(u, delta(u)/2)
  std::vector<double> worst(centers, 0.0);
  std::vector<char> tested(centers, 0);
  parallel_for(centers, [&](std::size_t k) {
    const double rad = 0.5 * net.delta[k];
    if (rad < 2.0 * step) return;
    const auto idx = st.index->ball_query(net.points.col(static_cast<Index>(k)), rad);
    if (idx.size() < 8) return;
    tested[k] = 1;
    const Plane& plane = st.patches[k].plane;
    const Mat& b = plane.basis();
    const std::size_t stride = std::max<std::size_t>(1, idx.size() / static_cast<std::size_t>(opts.graph_test_points));
    std::vector<Vec> t, h;
    for (std::size_t a = 0; a < idx.size(); a += stride) {
      const Vec d = st.points.col(idx[a]) - *plane.basepoint();
      t.push_back(b.transpose() * d);
      h.push_back(d - b * t.back());
    }
    for (std::size_t a = 0; a < t.size(); ++a) {
      for (std::size_t c = a + 1; c < t.size(); ++c) {
        const double dt = (t[a] - t[c]).norm();
        if (dt < step) continue;
        worst[k] = std::max(worst[k], (h[a] - h[c]).norm() / dt);
      }
    }
  });
  for (std::size_t k = 0; k < centers; ++k) {
    st.graph_balls += tested[k];
    if (worst[k] > st.graph_lipschitz) {
      st.graph_lipschitz = worst[k];
      st.graph_worst_location = net.points.col(static_cast<Index>(k));
    }
  }
  if (opts.enforce_graph_test && st.graph_lipschitz > opts.graph_mult * nu) {
    throw Error(ErrorCode::GraphTestFailure, "ball at " + where(st.graph_worst_location) +
                                                 " is not a graph: measured constant " +
                                                 std::to_string(st.graph_lipschitz) + " > " +
                                                 std::to_string(opts.graph_mult * nu));
  }
  return st;
}

Mat blended_normal(const SeparatedNet& net, const FineSet& fine, const Vec& query, int intrinsic_dim) {
  const auto n = query.size();
  Mat acc = Mat::Zero(n, n);
  for (const auto& [j, theta] : partition_of_unity(net, query)) {
    acc += theta * fine.planes[static_cast<std::size_t>(net.centers[j])].normal_projector();
  }
  return grassmann_project(acc, static_cast<int>(n) - intrinsic_dim).plane.projector();
}

void normal_field(SmoothedSurfaceStage& stage, const SeparatedNet& net, const FineSet& fine, double nu) {
  const auto count = static_cast<std::size_t>(stage.size());
  const int m = stage.intrinsic_dim;
  stage.normal.assign(count, Mat());
  stage.frame.assign(count, Mat());
  std::vector<char> own(count, 0);
  parallel_for(count, [&](std::size_t i) {
    const Vec p = stage.points.col(static_cast<Index>(i));
    try {
      stage.normal[i] = blended_normal(net, fine, p, m);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UncoveredQuery || stage.delta[i] > 0.0) throw;
      stage.normal[i] = stage.tangents[i].normal_projector();
      own[i] = 1;
    }
    stage.frame[i] = complement_frame(stage.normal[i], m);
  });
  stage.zero_gauge_normals = static_cast<int>(std::count(own.begin(), own.end(), 1));

  const auto centers = net.centers.size();
  std::vector<double> quot(centers, 0.0), cst(centers, 0.0);
  parallel_for(centers, [&](std::size_t k) {
    const double rad = 0.5 * net.delta[k];
    if (rad < 2.0 * stage.step) return;
    const auto idx = stage.index->ball_query(net.points.col(static_cast<Index>(k)), rad);
    const std::size_t stride = std::max<std::size_t>(1, idx.size() / 32);
    for (std::size_t a = 0; a < idx.size(); a += stride) {
      for (std::size_t c = a + stride; c < idx.size(); c += stride) {
        const double d = distance(stage.points.col(idx[a]), stage.points.col(idx[c]));
        if (d < stage.step) continue;
        const double q = projector_distance(stage.normal[static_cast<std::size_t>(idx[a])],
                                            stage.normal[static_cast<std::size_t>(idx[c])]) / d;
        quot[k] = std::max(quot[k], q);
      }
    }
    cst[k] = quot[k] * net.delta[k] / nu;
  });
  stage.normal_lipschitz = centers ? *std::max_element(quot.begin(), quot.end()) : 0.0;
  stage.normal_constant = centers ? *std::max_element(cst.begin(), cst.end()) : 0.0;
}

// ---------------------------------------------------------------------------
// correspondence

CorrespondenceMap project_tau(const PointMatrix& source, std::span<const double> source_gauge,
                              const SmoothedSurfaceStage& target, double beta, double slack) {
  if (target.normal.size() != static_cast<std::size_t>(target.size())) {
    throw Error(ErrorCode::InvalidSpec, "target stage has no normal field");
  }
  if (static_cast<Index>(source_gauge.size()) != source.cols()) throw Error(ErrorCode::DimensionMismatch, "gauge size");
  const int m = target.intrinsic_dim;
  const auto n = source.rows();
  CorrespondenceMap map;
  map.source = source;
  map.image.resize(n, source.cols());
  map.offset.resize(n, source.cols());
  map.target.assign(static_cast<std::size_t>(source.cols()), -1);
  const double r_fit = 3.0 * target.step;
  const int k_near = static_cast<int>(std::min<Index>(8, target.size()));

  parallel_for(static_cast<std::size_t>(source.cols()), [&](std::size_t ii) {
    const auto i = static_cast<Index>(ii);
    const Vec x = source.col(i);
    const auto cands = target.index->knn(x, k_near);
    const Index first = cands.front();
    if (distance(x, target.points.col(first)) <= 1e-12 * (1.0 + x.norm())) {
      map.image.col(i) = target.points.col(first);
      map.offset.col(i).setZero();
      map.target[ii] = first;
      return;
    }
    double best_score = std::numeric_limits<double>::infinity();
    double best_violation = std::numeric_limits<double>::infinity();
    std::vector<Index> near;
    std::vector<Vec> s, h;
    std::vector<double> w;
    for (Index c : cands) {
      const auto cc = static_cast<std::size_t>(c);
      const Vec pc = target.points.col(c);
      const Mat& b = target.frame[cc];
      const Vec tq = b.transpose() * (x - pc);
      target.index->ball_query(pc, r_fit + tq.norm(), near);
      s.clear();
      h.clear();
      w.clear();
      for (Index z : near) {
        const Vec d = target.points.col(z) - pc;
        const Vec t = b.transpose() * d;
        const double wb = bump((t - tq).squaredNorm(), r_fit);
        if (!(wb > 0.0)) continue;
        s.push_back((t - tq) / r_fit);
        h.push_back(d - b * t);
        w.push_back(target.weights[static_cast<std::size_t>(z)] * wb);
      }
      const AffineFit fit = fit_affine(s, h, w, m, static_cast<int>(n));
      if (fit.order < 0) continue;
      const Vec y = pc + b * tq + fit.offset;
      const Vec v = x - y;
      const double bound = beta * std::max(target.delta[cc], source_gauge[ii]) + slack;
      if (v.norm() > bound) {
        best_violation = std::min(best_violation, v.norm() - bound);
        continue;
      }
      if (tq.norm() < best_score) {
        best_score = tq.norm();
        map.image.col(i) = y;
        map.offset.col(i) = v;
        map.target[ii] = c;
      }
    }
    if (map.target[ii] < 0) {
      throw Error(ErrorCode::NoValidPreimage, "no chart near " + where(x) + " admits a normal preimage (excess " +
                                                  std::to_string(best_violation) + ")");
    }
  });
  for (Index i = 0; i < source.cols(); ++i) {
    map.max_displacement = std::max(map.max_displacement, map.offset.col(i).norm());
  }
  return map;
}

// ---------------------------------------------------------------------------
// distortion

DistortionReport distortion_report(const PointMatrix& source, const PointMatrix& target,
                                   std::span<const double> weights, const DistortionOptions& opts) {
  const Index count = source.cols();
  if (target.cols() != count || static_cast<Index>(weights.size()) != count) {
    throw Error(ErrorCode::DimensionMismatch, "map source, target and weights differ in size");
  }
  if (count < 2) throw Error(ErrorCode::TooFewPoints, "distortion needs at least two points");
  if (source.rows() != target.rows()) throw Error(ErrorCode::DimensionMismatch, "source and target dimensions");
  DistortionReport rep;
  rep.p = opts.p;
  rep.all_pairs = count <= opts.all_pairs_limit;
  const auto uc = static_cast<std::size_t>(count);
  rep.upper.assign(uc, 0.0);
  rep.lower.assign(uc, std::numeric_limits<double>::infinity());
  rep.id_upper.assign(uc, 0.0);
  // per-point regression sums: n, sum a, sum b, sum ab, sum aa
  std::vector<std::array<double, 5>> reg(uc, {0, 0, 0, 0, 0});

  std::unique_ptr<KdTree> tree;
  if (!rep.all_pairs) tree = std::make_unique<KdTree>(source);

  parallel_for(uc, [&](std::size_t ii) {
    const auto i = static_cast<Index>(ii);
    auto visit = [&](Index j) {
      if (j == i) return;
      const double dx = distance(source.col(i), source.col(j));
      if (!(dx > 0.0)) return;
      const double df = distance(target.col(i), target.col(j));
      const double q = df / dx;
      rep.upper[ii] = std::max(rep.upper[ii], q);
      rep.lower[ii] = std::min(rep.lower[ii], q);
      const double did = ((target.col(i) - source.col(i)) - (target.col(j) - source.col(j))).norm() / dx;
      rep.id_upper[ii] = std::max(rep.id_upper[ii], did);
      if (df > 0.0) {
        const double a = std::log(dx), b = std::log(df);
        auto& r = reg[ii];
        r[0] += 1;
        r[1] += a;
        r[2] += b;
        r[3] += a * b;
        r[4] += a * a;
      }
    };
    if (rep.all_pairs) {
      for (Index j = 0; j < count; ++j) visit(j);
      return;
    }
    for (Index j : tree->knn(source.col(i), opts.nearest + 1)) visit(j);
    std::mt19937_64 rng(opts.seed * 0x9e3779b97f4a7c15ull + ii);
    const int strata = std::max(1, opts.strata);
    for (int s = 0; s < strata; ++s) {
      const Index lo = count * s / strata, hi = count * (s + 1) / strata;
      if (hi <= lo) continue;
      std::uniform_int_distribution<Index> pick(lo, hi - 1);
      visit(pick(rng));
    }
  });

  rep.max_upper = 0.0;
  rep.min_lower = std::numeric_limits<double>::infinity();
  std::array<double, 5> tot{0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < uc; ++i) {
    if (!std::isfinite(rep.lower[i])) rep.lower[i] = rep.upper[i];
    const double w = weights[i];
    rep.lp_upper += w * std::pow(rep.upper[i], opts.p);
    rep.lp_lower += rep.lower[i] > 0.0 ? w * std::pow(rep.lower[i], -opts.p) : std::numeric_limits<double>::infinity();
    rep.lp_id += w * std::pow(rep.id_upper[i], opts.p);
    rep.max_upper = std::max(rep.max_upper, rep.upper[i]);
    rep.min_lower = std::min(rep.min_lower, rep.lower[i]);
    for (int k = 0; k < 5; ++k) tot[static_cast<std::size_t>(k)] += reg[i][static_cast<std::size_t>(k)];
  }
  rep.spread = rep.min_lower > 0.0 ? rep.max_upper / rep.min_lower : std::numeric_limits<double>::infinity();
  const double var = tot[0] * tot[4] - tot[1] * tot[1];
  if (tot[0] >= 2 && var > 1e-300) rep.holder_exponent = (tot[0] * tot[3] - tot[1] * tot[2]) / var;
  return rep;
}

// ---------------------------------------------------------------------------
// iteration

Ball enclosing_ball(const WeightedSurfaceSample& sample) {
  if (sample.size() == 0) throw Error(ErrorCode::EmptyInput, "empty sample");
  Vec c = Vec::Zero(sample.ambient_dim());
  for (Index i = 0; i < sample.size(); ++i) c += sample.weight(i) * sample.point(i);
  c /= sample.total_weight();
  double r = 0.0;
  for (Index i = 0; i < sample.size(); ++i) r = std::max(r, distance(sample.point(i), c));
  return Ball(c, r * (1.0 + 1e-9));
}

namespace {

struct Level {
  DeltaField delta;
  FineSet fine;
  SeparatedNet net;
  SmoothedSurfaceStage stage;
};

Level build_level(const WeightedSurfaceSample& sample, DeltaField delta, double nu, double floor,
                  const StageOptions& opts, int index) {
  Level lv;
  lv.delta = std::move(delta);
  lv.fine = extract_fine_set(sample, lv.delta, nu, floor);
  if (lv.delta.max() > 0.0) {
    lv.net = build_separated_net(sample, lv.delta);
  } else {
    lv.net.points.resize(sample.ambient_dim(), 0);
  }
  lv.stage = build_sigma_delta(sample, lv.fine, lv.net, lv.delta, nu, opts);
  lv.stage.level = index;
  normal_field(lv.stage, lv.net, lv.fine, nu);
  return lv;
}

StageSummary summarize(const Level& lv, int index) {
  StageSummary s;
  s.index = index;
  s.points = lv.stage.size();
  s.synthesized = lv.stage.synthesized_count;
  s.fine = static_cast<Index>(lv.fine.members.size());
  s.bad_weight = lv.fine.bad_weight;
  s.net_size = static_cast<int>(lv.net.centers.size());
  s.groups = lv.net.groups;
  s.max_delta = lv.delta.max();
  s.graph_lipschitz = lv.stage.graph_lipschitz;
  s.normal_constant = lv.stage.normal_constant;
  s.overlap_mismatch = lv.stage.overlap_mismatch;
  s.fallback_patches = lv.stage.fallback_patches;
  return s;
}

}  // namespace

SemmesResult iterate_parameterization(const WeightedSurfaceSample& sample, const SemmesOptions& opts) {
  SemmesResult res;
  if (opts.nu > 0.0) {
    res.nu = opts.nu;
  } else if (opts.gamma > 0.0) {
    res.nu = std::sqrt(opts.gamma);
  } else {
    throw Error(ErrorCode::InvalidSpec, "the iteration needs the certified gamma or an explicit nu");
  }
  res.beta = opts.beta > 0.0 ? opts.beta : std::sqrt(res.nu);
  if (opts.depth < 1) throw Error(ErrorCode::InvalidSpec, "depth must be at least 1");
  res.domain = opts.domain ? *opts.domain : enclosing_ball(sample);
  const double floor = resolution_floor(sample, opts.floor_mult);
  const double step = sample.mean_spacing();
  const int m = sample.intrinsic_dim();

  res.base_plane = fit_plane_pca(sample.points(), sample.weights(), m).plane;

  Level cur = build_level(sample, make_delta0(sample, res.domain, opts.divisor), res.nu, floor, opts.stage, 0);
  res.stages.push_back(summarize(cur, 0));
  res.stage0 = cur.stage;

  PointMatrix pos = cur.stage.points;
  std::vector<double> gauge = cur.stage.delta;
  res.chains.assign(static_cast<std::size_t>(pos.cols()), {});
  int slow = 0;

  for (int j = 0; j < opts.depth; ++j) {
    if (cur.fine.members.empty()) throw Error(ErrorCode::EmptyFineSet, "fine set is empty at stage " + std::to_string(j));
    // distances to F_j for the displacement constant
    PointMatrix fpts(sample.ambient_dim(), static_cast<Index>(cur.fine.members.size()));
    for (std::size_t k = 0; k < cur.fine.members.size(); ++k) {
      fpts.col(static_cast<Index>(k)) = sample.point(cur.fine.members[k]);
    }
    const KdTree ftree(fpts);

    Level next = build_level(sample, next_delta(sample, cur.fine, res.domain, opts.divisor), res.nu, floor,
                             opts.stage, j + 1);
    res.stages.push_back(summarize(next, j + 1));

    CorrespondenceMap step_map = project_tau(pos, gauge, next.stage, res.beta, step);
    double cmax = 0.0;
    for (Index i = 0; i < pos.cols(); ++i) {
      const double d = ftree.nearest(pos.col(i)).second;
      if (d > step) cmax = std::max(cmax, step_map.offset.col(i).norm() / (std::sqrt(res.nu) * d));
    }
    res.step_constants.push_back(cmax);
    res.displacements.push_back(step_map.max_displacement);
    for (std::size_t i = 0; i < res.chains.size(); ++i) {
      res.chains[i].push_back(step_map.target[i]);
      gauge[i] = next.stage.delta[static_cast<std::size_t>(step_map.target[i])];
    }
    pos = step_map.image;
    res.steps.push_back(std::move(step_map));
    cur = std::move(next);
    res.exit_step = j + 1;

    const auto k = res.displacements.size();
    if (opts.early_exit && res.displacements.back() < step) break;
    // displacements at round-off level say nothing about contraction
    const bool resolved = res.displacements.back() > 1e-9 * step;
    if (opts.check_contraction && k >= 2 && resolved && res.displacements[k - 1] > 0.5 * res.displacements[k - 2]) {
      if (++slow >= 2) {
        throw Error(ErrorCode::NonContraction, "displacement failed to halve on two consecutive steps (step " +
                                                   std::to_string(j) + ")");
      }
    } else {
      slow = 0;
    }
  }
  res.last_stage = cur.stage;

  res.composed.source = res.stage0.points;
  res.composed.image = pos;
  res.composed.offset = res.stage0.points - pos;
  res.composed.depth = static_cast<int>(res.steps.size());
  res.composed.target = res.steps.empty() ? std::vector<Index>{} : res.steps.back().target;
  for (Index i = 0; i < pos.cols(); ++i) {
    res.composed.max_displacement = std::max(res.composed.max_displacement, res.composed.offset.col(i).norm());
  }

  // geometric tail from the observed contraction
  const auto& d = res.displacements;
  res.tail_bound = d.empty() ? 0.0 : d.back();
  if (d.size() >= 2 && d[d.size() - 2] > 0.0) {
    const double r = d.back() / d[d.size() - 2];
    if (r < 1.0) res.tail_bound = d.back() * r / (1.0 - r);
  }
  if (!d.empty() && d.back() == 0.0) res.tail_bound = 0.0;

  // parameter points: Sigma_0 projected onto the base plane
  const Vec& o = *res.base_plane.basepoint();
  const Mat& p = res.base_plane.projector();
  PointMatrix param(sample.ambient_dim(), res.stage0.size());
  for (Index i = 0; i < res.stage0.size(); ++i) param.col(i) = o + p * (res.stage0.points.col(i) - o);
  res.distortion = distortion_report(param, pos, res.stage0.weights, opts.distortion);
  return res;
}

}  // namespace varifold
