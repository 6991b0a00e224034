#include "varifold/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "varifold/error.hpp"

namespace varifold {

using cd = std::complex<double>;
using Sparse = Eigen::SparseMatrix<double>;

namespace {

cd to_c(const Vec2& z) { return {z.x(), z.y()}; }
Vec2 to_v(cd z) { return {z.real(), z.imag()}; }

double cot_at(const Vec& apex, const Vec& a, const Vec& b) {
  const Vec u = a - apex, v = b - apex;
  const double d = u.dot(v);
  const double c = std::sqrt(std::max(0.0, u.squaredNorm() * v.squaredNorm() - d * d));
  return c > 0.0 ? d / c : 0.0;
}

// Symmetric cotangent weights w_ij = (cot a + cot b) / 2, keyed by (min, max).
std::map<std::pair<int, int>, double> cotangent_weights(const Mat& p, const std::vector<Triangle>& tris) {
  std::map<std::pair<int, int>, double> w;
  for (const auto& t : tris) {
    for (int k = 0; k < 3; ++k) {
      const int i = t[(k + 1) % 3], j = t[(k + 2) % 3];
      const double c = 0.5 * cot_at(p.col(t[k]), p.col(i), p.col(j));
      w[{std::min(i, j), std::max(i, j)}] += c;
    }
  }
  return w;
}

std::map<std::pair<int, int>, double> uniform_weights(const std::vector<Triangle>& tris) {
  std::map<std::pair<int, int>, double> w;
  for (const auto& t : tris)
    for (int k = 0; k < 3; ++k) {
      const int i = t[(k + 1) % 3], j = t[(k + 2) % 3];
      w[{std::min(i, j), std::max(i, j)}] = 1.0;
    }
  return w;
}

// Solves the Dirichlet problem sum_j w_ij (u_j - u_i) = 0 at interior vertices.
Eigen::Matrix2Xd harmonic_extension(Eigen::Index nv, const std::map<std::pair<int, int>, double>& w,
                                    const std::vector<char>& fixed, const Eigen::Matrix2Xd& values) {
  std::vector<int> slot(static_cast<std::size_t>(nv), -1);
  int ni = 0;
  for (Eigen::Index v = 0; v < nv; ++v)
    if (!fixed[static_cast<std::size_t>(v)]) slot[static_cast<std::size_t>(v)] = ni++;
  Eigen::Matrix2Xd out = values;
  if (ni == 0) return out;

  std::vector<Eigen::Triplet<double>> trip;
  Eigen::MatrixX2d rhs = Eigen::MatrixX2d::Zero(ni, 2);
  for (const auto& [e, wij] : w) {
    const int a = slot[static_cast<std::size_t>(e.first)], b = slot[static_cast<std::size_t>(e.second)];
    if (a >= 0) trip.emplace_back(a, a, wij);
    if (b >= 0) trip.emplace_back(b, b, wij);
    if (a >= 0 && b >= 0) {
      trip.emplace_back(a, b, -wij);
      trip.emplace_back(b, a, -wij);
    } else if (a >= 0) {
      rhs.row(a) += wij * values.col(e.second).transpose();
    } else if (b >= 0) {
      rhs.row(b) += wij * values.col(e.first).transpose();
    }
  }
  Sparse A(ni, ni);
  A.setFromTriplets(trip.begin(), trip.end());

  Eigen::MatrixX2d sol;
  Eigen::SimplicialLDLT<Sparse> ldlt(A);
  bool ok = ldlt.info() == Eigen::Success;
  if (ok) {
    sol = ldlt.solve(rhs);
    ok = ldlt.info() == Eigen::Success && sol.allFinite();
  }
  if (!ok) {
    Eigen::SparseLU<Sparse> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw Error(ErrorCode::SolverSingular, "harmonic system is singular");
    sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !sol.allFinite())
      throw Error(ErrorCode::SolverSingular, "harmonic solve failed");
  }
  for (Eigen::Index v = 0; v < nv; ++v) {
    const int s = slot[static_cast<std::size_t>(v)];
    if (s >= 0) out.col(v) = sol.row(s).transpose();
  }
  return out;
}

// sum_ij w_ij |u_i - u_j|^2, the Dirichlet energy of a PL map when w are cotangent weights.
double dirichlet_energy(const std::map<std::pair<int, int>, double>& w, const Eigen::Matrix2Xd& u) {
  double e = 0.0;
  for (const auto& [k, wij] : w) e += wij * (u.col(k.first) - u.col(k.second)).squaredNorm();
  return e;
}

std::vector<int> boundary_loop(const std::vector<Triangle>& tris, Eigen::Index nv, std::vector<char>& flag) {
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : tris)
    for (int k = 0; k < 3; ++k) directed[{t[k], t[(k + 1) % 3]}]++;
  std::map<int, int> succ;
  for (const auto& [e, c] : directed)
    if (!directed.count({e.second, e.first})) succ[e.first] = e.second;
  flag.assign(static_cast<std::size_t>(nv), 0);
  for (const auto& [a, b] : succ) flag[static_cast<std::size_t>(a)] = flag[static_cast<std::size_t>(b)] = 1;
  std::vector<int> loop;
  if (succ.empty()) return loop;
  loop.push_back(succ.begin()->first);
  while (loop.size() <= succ.size()) {
    auto it = succ.find(loop.back());
    if (it == succ.end() || it->second == loop.front()) break;
    loop.push_back(it->second);
  }
  return loop;
}

// Per-vertex mass (one third of incident disk area) and cotangent Laplacian on the disk.
struct DiskLaplacian {
  std::vector<double> mass;
  std::map<std::pair<int, int>, double> w;

  template <class Get>
  auto apply(int v, Get&& value, const std::vector<std::vector<std::pair<int, double>>>& nbr) const {
    using T = std::decay_t<decltype(value(v))>;
    T acc = value(v) * 0.0;
    for (const auto& [j, wij] : nbr[static_cast<std::size_t>(v)]) acc += wij * (value(j) - value(v));
    return T(acc / mass[static_cast<std::size_t>(v)]);
  }
};

Vec2 centroid(const DiskParameterization& p, const Triangle& t) {
  return (p.disk.col(t[0]) + p.disk.col(t[1]) + p.disk.col(t[2])) / 3.0;
}

}  // namespace

// ---------------------------------------------------------------------------

Vec2 Mobius::operator()(const Vec2& z) const { return to_v((*this)(to_c(z))); }

Mobius Mobius::from_three(const std::array<cd, 3>& z, const std::array<cd, 3>& x) {
  // S_z maps z0, z1, z2 to 0, inf, 1; the answer is S_x^{-1} S_z.
  auto cross = [](const std::array<cd, 3>& p) {
    Mobius m;
    m.a = p[2] - p[1];
    m.b = -p[0] * (p[2] - p[1]);
    m.c = p[2] - p[0];
    m.d = -p[1] * (p[2] - p[0]);
    return m;
  };
  const Mobius s = cross(z), t = cross(x);
  // inverse of t: (d w - b) / (-c w + a)
  const cd ia = t.d, ib = -t.b, ic = -t.c, id = t.a;
  Mobius r;
  r.a = ia * s.a + ib * s.c;
  r.b = ia * s.b + ib * s.d;
  r.c = ic * s.a + id * s.c;
  r.d = ic * s.b + id * s.d;
  const cd n = std::sqrt(r.a * r.d - r.b * r.c);
  r.a /= n, r.b /= n, r.c /= n, r.d /= n;
  return r;
}

Mobius Mobius::disk(cd p, double theta) {
  const cd rot = std::polar(1.0, theta);
  Mobius m;
  m.a = rot;
  m.b = -rot * p;
  m.c = -std::conj(p);
  m.d = 1.0;
  return m;
}

std::optional<Vec> DiskParameterization::evaluate(const Vec2& z) const {
  const auto [t, bary] = locator.locate(z);
  if (t < 0) return std::nullopt;
  const auto& tri = triangles[static_cast<std::size_t>(t)];
  return Vec(bary[0] * image.col(tri[0]) + bary[1] * image.col(tri[1]) + bary[2] * image.col(tri[2]));
}

std::vector<double> DiskParameterization::vertex_area() const {
  std::vector<double> a(static_cast<std::size_t>(vertex_count()), 0.0);
  for (std::size_t t = 0; t < triangles.size(); ++t)
    for (int v : triangles[t]) a[static_cast<std::size_t>(v)] += std::abs(disk_area[t]) / 3.0;
  return a;
}

double DiskParameterization::max_dilatation() const {
  double m = 1.0;
  for (double d : dilatation) m = std::max(m, d);
  return m;
}

DiskParameterization make_parameterization(Eigen::Matrix2Xd disk, PointMatrix image, std::vector<Triangle> triangles) {
  if (disk.cols() != image.cols()) throw Error(ErrorCode::DimensionMismatch, "disk and image vertex counts differ");
  if (triangles.empty()) throw Error(ErrorCode::EmptyInput, "no triangles");
  DiskParameterization p;
  p.disk = std::move(disk);
  p.image = std::move(image);
  p.triangles = std::move(triangles);
  p.boundary = boundary_loop(p.triangles, p.disk.cols(), p.on_boundary);

  const std::size_t nt = p.triangles.size();
  p.jacobian.resize(nt);
  p.disk_area.resize(nt);
  p.area_factor.resize(nt);
  p.w.resize(nt);
  p.dilatation.resize(nt);
  p.stretch.resize(nt);
  p.angle_deviation.resize(nt);
  p.e1.resize(nt);
  p.e2.resize(nt);
  for (std::size_t k = 0; k < nt; ++k) {
    const auto& t = p.triangles[k];
    Eigen::Matrix2d P;
    P.col(0) = p.disk.col(t[1]) - p.disk.col(t[0]);
    P.col(1) = p.disk.col(t[2]) - p.disk.col(t[0]);
    const double det = P.determinant();
    const double scale = P.squaredNorm();
    if (!(std::abs(det) > 1e-14 * scale) || scale == 0.0)
      throw Error(ErrorCode::DegenerateTriangle, "degenerate disk triangle " + std::to_string(k));
    p.disk_area[k] = 0.5 * det;
    if (det <= 0.0) ++p.folded;
    Mat Q(p.image.rows(), 2);
    Q.col(0) = p.image.col(t[1]) - p.image.col(t[0]);
    Q.col(1) = p.image.col(t[2]) - p.image.col(t[0]);
    const Mat A = Q * P.inverse();
    const Eigen::Matrix2d G = A.transpose() * A;
    const double J = std::sqrt(std::max(0.0, G.determinant()));
    if (!(J > 1e-14 * G.trace()) || G.trace() == 0.0)
      throw Error(ErrorCode::DegenerateTriangle, "degenerate image triangle " + std::to_string(k));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(G);
    const double smin = std::sqrt(std::max(0.0, es.eigenvalues()[0]));
    const double smax = std::sqrt(std::max(0.0, es.eigenvalues()[1]));
    p.jacobian[k] = A;
    p.area_factor[k] = J;
    p.w[k] = 0.5 * std::log(J);
    p.dilatation[k] = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    const double n1 = A.col(0).norm(), n2 = A.col(1).norm();
    p.stretch[k] = n1 / n2;
    p.angle_deviation[k] = std::abs(A.col(0).dot(A.col(1))) / (n1 * n2);
    p.e1[k] = A.col(0) / n1;
    p.e2[k] = A.col(1) / n2;
    const double area = std::abs(p.disk_area[k]);
    p.energy += A.squaredNorm() * area;
    p.conformal_area += J * area;
  }
  p.locator = PlanarLocator(p.disk, p.triangles);
  return p;
}

DiskParameterization reparameterize(const DiskParameterization& param, const Mobius& m) {
  Eigen::Matrix2Xd z(2, param.disk.cols());
  for (Eigen::Index v = 0; v < z.cols(); ++v) z.col(v) = m(Vec2(param.disk.col(v)));
  DiskParameterization out = make_parameterization(std::move(z), param.image, param.triangles);
  out.source = param.source;
  out.patch_energy = param.patch_energy;
  out.tutte_energy = param.tutte_energy;
  out.lambda = param.lambda;
  out.pins = param.pins;
  out.pin_error = param.pin_error;
  out.pin_bound = param.pin_bound;
  return out;
}

DiskParameterization harmonic_disk_param(const DiskPatch& patch, const ConformalOptions& opts) {
  const Eigen::Index nv = patch.vertex_count();
  if (patch.boundary.size() < 3) throw Error(ErrorCode::NoBoundaryCycle, "patch boundary has fewer than 3 vertices");

  // arc-length boundary values, starting near planar angle 0
  const Vec2 c = patch.plane.coordinates(patch.xi);
  auto angle_of = [&](int v) {
    const Vec2 d = patch.planar.col(v) - c;
    return std::atan2(d.y(), d.x());
  };
  const auto& loop = patch.boundary;
  const std::size_t kb = loop.size();
  std::size_t start = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < kb; ++k) {
    const double a = std::abs(angle_of(loop[k]));
    if (a < best) best = a, start = k;
  }
  std::vector<double> arc(kb + 1, 0.0);
  for (std::size_t k = 0; k < kb; ++k) {
    const int a = loop[(start + k) % kb], b = loop[(start + k + 1) % kb];
    arc[k + 1] = arc[k] + (patch.points.col(b) - patch.points.col(a)).norm();
  }
  Eigen::Matrix2Xd values = Eigen::Matrix2Xd::Zero(2, nv);
  std::vector<char> fixed(static_cast<std::size_t>(nv), 0);
  for (std::size_t k = 0; k < kb; ++k) {
    const int v = loop[(start + k) % kb];
    const double th = 2.0 * kPi * arc[k] / arc[kb];
    values.col(v) = Vec2(std::cos(th), std::sin(th));
    fixed[static_cast<std::size_t>(v)] = 1;
  }

  const auto wc = cotangent_weights(patch.points, patch.triangles);
  const Eigen::Matrix2Xd phi = harmonic_extension(nv, wc, fixed, values);
  const Eigen::Matrix2Xd tutte = harmonic_extension(nv, uniform_weights(patch.triangles), fixed, values);

  Eigen::Matrix2Xd disk = phi;
  std::array<int, 3> pins{-1, -1, -1};
  const std::array<cd, 3> targets{std::polar(1.0, 0.0), std::polar(1.0, 2.0 * kPi / 3.0),
                                  std::polar(1.0, 4.0 * kPi / 3.0)};
  if (opts.pin) {
    for (int j = 0; j < 3; ++j) {
      double bd = std::numeric_limits<double>::infinity();
      for (int v : loop) {
        double d = std::abs(std::remainder(angle_of(v) - 2.0 * kPi * j / 3.0, 2.0 * kPi));
        if (d < bd) bd = d, pins[static_cast<std::size_t>(j)] = v;
      }
    }
    if (pins[0] == pins[1] || pins[1] == pins[2] || pins[0] == pins[2])
      throw Error(ErrorCode::NoBoundaryCycle, "boundary too short to place three pins");
    const Mobius m = Mobius::from_three(
        {to_c(phi.col(pins[0])), to_c(phi.col(pins[1])), to_c(phi.col(pins[2]))}, targets);
    for (Eigen::Index v = 0; v < nv; ++v) disk.col(v) = m(Vec2(phi.col(v)));
  }

  // folds are checked before the per-triangle data can throw on them
  int folded = 0;
  for (const auto& t : patch.triangles) {
    Eigen::Matrix2d P;
    P.col(0) = disk.col(t[1]) - disk.col(t[0]);
    P.col(1) = disk.col(t[2]) - disk.col(t[0]);
    if (P.determinant() <= 0.0) ++folded;
  }
  if (folded > 0) throw Error(ErrorCode::FoldedTriangles, std::to_string(folded) + " folded triangles in the disk map");

  DiskParameterization p = make_parameterization(std::move(disk), patch.points, patch.triangles);
  p.source = patch.source;
  p.patch_energy = dirichlet_energy(wc, phi);
  p.tutte_energy = dirichlet_energy(wc, tutte);
  p.lambda = patch.sigma;
  p.pins = pins;
  const Mat B = patch.plane.basis();
  if (opts.pin_bound > 0.0) {
    p.pin_bound = opts.pin_bound;
  } else {
    // the targets sit in the plane through xi, the pins on a possibly curved rim
    double lift = 0.0;
    for (int v : loop) {
      const Vec d = patch.points.col(v) - patch.xi;
      lift = std::max(lift, (d - B * (B.transpose() * d)).norm());
    }
    p.pin_bound = patch.psi * patch.sigma + 2.0 * patch.spacing + patch.sigma / 8.0 + lift;
  }
  if (opts.pin) {
    for (int j = 0; j < 3; ++j) {
      const Vec target = patch.xi + patch.sigma * B * to_v(targets[static_cast<std::size_t>(j)]);
      p.pin_error = std::max(p.pin_error, (patch.points.col(pins[static_cast<std::size_t>(j)]) - target).norm());
    }
  }
  return p;
}

ConformalFactor conformal_factor(const DiskParameterization& param) {
  return {param.w, param.dilatation, param.stretch, param.angle_deviation};
}

// ---------------------------------------------------------------------------

std::vector<QuasiSymmetryEntry> quasisymmetry_table(const DiskParameterization& param, const std::vector<Vec2>& centers,
                                                    const std::vector<double>& scales, int samples) {
  std::vector<QuasiSymmetryEntry> out;
  for (const auto& z : centers) {
    const auto fz = param.evaluate(z);
    if (!fz) continue;
    for (double s : scales) {
      if (s <= 0.0) continue;
      QuasiSymmetryEntry e{z, s, 0.0, std::numeric_limits<double>::infinity(), 0.0};
      bool ok = true;
      for (int k = 0; k < samples && ok; ++k) {
        const double th = 2.0 * kPi * k / samples;
        const auto fy = param.evaluate(z + s * Vec2(std::cos(th), std::sin(th)));
        if (!fy) {
          ok = false;
          break;
        }
        const double d = (*fy - *fz).norm();
        e.big = std::max(e.big, d);
        e.small = std::min(e.small, d);
      }
      if (!ok || !(e.small > 0.0)) continue;
      e.ratio = e.big / e.small;
      out.push_back(e);
    }
  }
  return out;
}

AffineApproximation semmes_affine_fit(const DiskParameterization& param, const Vec2& x, double r) {
  const auto mass = param.vertex_area();
  std::vector<int> idx;
  for (Eigen::Index v = 0; v < param.vertex_count(); ++v)
    if ((param.disk.col(v) - x).norm() <= r) idx.push_back(static_cast<int>(v));
  if (idx.size() < 3) throw Error(ErrorCode::RankDeficient, "fewer than three vertices in the disk");

  const Eigen::Index n = param.image.rows();
  double wsum = 0.0;
  Vec2 ybar = Vec2::Zero();
  Vec fbar = Vec::Zero(n);
  for (int v : idx) {
    const double w = mass[static_cast<std::size_t>(v)];
    wsum += w;
    ybar += w * param.disk.col(v);
    fbar += w * param.image.col(v);
  }
  ybar /= wsum;
  fbar /= wsum;
  Mat M = Mat::Zero(n, 2);
  double yy = 0.0;
  for (int v : idx) {
    const double w = mass[static_cast<std::size_t>(v)];
    const Vec2 y = param.disk.col(v) - ybar;
    M += w * (param.image.col(v) - fbar) * y.transpose();
    yy += w * y.squaredNorm();
  }
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto s = svd.singularValues();
  if (yy <= 0.0 || s.size() < 2 || !(s[1] > 1e-12 * std::max(1e-300, s[0])))
    throw Error(ErrorCode::RankDeficient, "vertex images do not span a plane");

  AffineApproximation out;
  out.rotation = svd.matrixU() * svd.matrixV().transpose();
  out.a = s.sum() / yy;
  out.shift = fbar - out.a * out.rotation * ybar;
  out.vertices = static_cast<int>(idx.size());
  for (int v : idx) {
    const Vec pred = out.a * out.rotation * param.disk.col(v) + out.shift;
    out.sup_deviation = std::max(out.sup_deviation, (param.image.col(v) - pred).norm() / (out.a * r));
  }
  double e = 0.0, area = 0.0, img = 0.0;
  for (std::size_t t = 0; t < param.triangles.size(); ++t) {
    if ((centroid(param, param.triangles[t]) - x).norm() > r) continue;
    const double ar = std::abs(param.disk_area[t]);
    e += (param.jacobian[t] - out.a * out.rotation).squaredNorm() * ar;
    area += ar;
    img += param.area_factor[t] * ar;
  }
  if (area > 0.0) {
    out.energy_deviation = std::sqrt(e / area) / out.a;
    out.area_deviation = std::abs(img - out.a * out.a * area) / (out.a * out.a * area);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<DyadicSquare> dyadic_squares(const DiskParameterization& param, int max_depth, int min_triangles,
                                         double radius) {
  std::vector<Vec2> cen(param.triangles.size());
  for (std::size_t t = 0; t < cen.size(); ++t) cen[t] = centroid(param, param.triangles[t]);
  std::vector<DyadicSquare> out;
  for (int d = 1; d <= max_depth; ++d) {
    const int k = 1 << d;
    const double side = 2.0 / k;
    std::map<std::pair<int, int>, std::vector<int>> cells;
    for (std::size_t t = 0; t < cen.size(); ++t) {
      const int i = static_cast<int>(std::floor((cen[t].x() + 1.0) / side));
      const int j = static_cast<int>(std::floor((cen[t].y() + 1.0) / side));
      if (i < 0 || j < 0 || i >= k || j >= k) continue;
      cells[{i, j}].push_back(static_cast<int>(t));
    }
    bool any = false;
    for (auto& [ij, tris] : cells) {
      DyadicSquare q;
      q.lo = Vec2(-1.0 + ij.first * side, -1.0 + ij.second * side);
      q.side = side;
      q.depth = d;
      bool inside = true;
      for (int c = 0; c < 4; ++c) {
        const Vec2 corner = q.lo + side * Vec2(c & 1, c >> 1);
        if (corner.norm() > radius) inside = false;
      }
      if (!inside || static_cast<int>(tris.size()) < min_triangles) continue;
      q.triangles = std::move(tris);
      for (int t : q.triangles) q.area += std::abs(param.disk_area[static_cast<std::size_t>(t)]);
      out.push_back(std::move(q));
      any = true;
    }
    if (!any && d > 2) break;
  }
  return out;
}

double square_mean(const DiskParameterization& param, const DyadicSquare& q, std::span<const double> field) {
  double s = 0.0, a = 0.0;
  for (int t : q.triangles) {
    const double ar = std::abs(param.disk_area[static_cast<std::size_t>(t)]);
    s += field[static_cast<std::size_t>(t)] * ar;
    a += ar;
  }
  return a > 0.0 ? s / a : 0.0;
}

double inverse_holder_check(const DiskParameterization& param, const DyadicSquare& q) {
  double j = 0.0, h = 0.0, a = 0.0;
  for (int t : q.triangles) {
    const double ar = std::abs(param.disk_area[static_cast<std::size_t>(t)]);
    const double J = param.area_factor[static_cast<std::size_t>(t)];
    j += J * ar;
    h += std::sqrt(J) * ar;
    a += ar;
  }
  return a > 0.0 && h > 0.0 ? (j / a) / ((h / a) * (h / a)) : 1.0;
}

double bmo_norm(const DiskParameterization& param, std::span<const double> field, int max_depth) {
  if (field.size() != param.triangles.size()) throw Error(ErrorCode::DimensionMismatch, "field is not per triangle");
  double sup = 0.0;
  for (const auto& q : dyadic_squares(param, max_depth)) {
    const double m = square_mean(param, q, field);
    double dev = 0.0, a = 0.0;
    for (int t : q.triangles) {
      const double ar = std::abs(param.disk_area[static_cast<std::size_t>(t)]);
      dev += std::abs(field[static_cast<std::size_t>(t)] - m) * ar;
      a += ar;
    }
    if (a > 0.0) sup = std::max(sup, dev / a);
  }
  return sup;
}

double a2_constant(const DiskParameterization& param, std::span<const double> w, int max_depth) {
  if (w.size() != param.triangles.size()) throw Error(ErrorCode::DimensionMismatch, "field is not per triangle");
  double sup = 1.0;
  for (const auto& q : dyadic_squares(param, max_depth)) {
    double p = 0.0, m = 0.0, a = 0.0;
    for (int t : q.triangles) {
      const double ar = std::abs(param.disk_area[static_cast<std::size_t>(t)]);
      p += std::exp(2.0 * w[static_cast<std::size_t>(t)]) * ar;
      m += std::exp(-2.0 * w[static_cast<std::size_t>(t)]) * ar;
      a += ar;
    }
    if (a > 0.0) sup = std::max(sup, (p / a) * (m / a));
  }
  return sup;
}

std::vector<double> log_gradient(const DiskParameterization& param) {
  std::vector<double> g(param.triangles.size());
  for (std::size_t t = 0; t < g.size(); ++t) g[t] = std::log(param.jacobian[t].norm() / std::sqrt(2.0));
  return g;
}

// ---------------------------------------------------------------------------

std::vector<Vec> vertex_curvature(const DiskParameterization& param, std::span<const Vec> per_sample) {
  if (param.source.empty()) throw Error(ErrorCode::MissingCurvature, "parameterization has no sample indices");
  std::vector<Vec> h(static_cast<std::size_t>(param.vertex_count()));
  for (std::size_t v = 0; v < h.size(); ++v) {
    const auto s = static_cast<std::size_t>(param.source[v]);
    if (s >= per_sample.size() || per_sample[s].size() != param.image.rows())
      throw Error(ErrorCode::MissingCurvature, "curvature missing for sample " + std::to_string(s));
    h[v] = per_sample[s];
  }
  return h;
}

CurvatureResiduals curvature_equation_residuals(const DiskParameterization& param, std::span<const Vec> h,
                                                double margin, double rho) {
  const auto nv = static_cast<std::size_t>(param.vertex_count());
  if (h.size() != nv) throw Error(ErrorCode::MissingCurvature, "no curvature per vertex");
  const Eigen::Index n = param.image.rows();

  DiskLaplacian lap;
  lap.mass = param.vertex_area();
  lap.w = cotangent_weights(param.disk, param.triangles);
  std::vector<std::vector<std::pair<int, double>>> nbr(nv);
  for (const auto& [e, wij] : lap.w) {
    nbr[static_cast<std::size_t>(e.first)].emplace_back(e.second, wij);
    nbr[static_cast<std::size_t>(e.second)].emplace_back(e.first, wij);
  }

  // e^{2w} per vertex is the plain area average; w and the frames are
  // mollified at radius rho since the Gauss side differentiates them twice
  std::vector<double> e2w(nv, 0.0), wv(nv, 0.0), wedge(nv, 0.0), acc(nv, 0.0);
  std::vector<Vec> f1(nv, Vec::Zero(n)), f2(nv, Vec::Zero(n));
  for (std::size_t t = 0; t < param.triangles.size(); ++t) {
    const double ar = std::abs(param.disk_area[t]);
    for (int v : param.triangles[t]) {
      e2w[static_cast<std::size_t>(v)] += param.area_factor[t] * ar;
      acc[static_cast<std::size_t>(v)] += ar;
    }
  }
  for (std::size_t v = 0; v < nv; ++v) e2w[v] /= acc[v];

  const std::size_t nt = param.triangles.size();
  std::vector<Vec2> cen(nt);
  for (std::size_t t = 0; t < nt; ++t) cen[t] = centroid(param, param.triangles[t]);
  std::map<std::pair<int, int>, std::vector<int>> cells;
  auto cell_of = [&](const Vec2& z) {
    return std::pair<int, int>{static_cast<int>(std::floor(z.x() / rho)), static_cast<int>(std::floor(z.y() / rho))};
  };
  for (std::size_t t = 0; t < nt; ++t) cells[cell_of(cen[t])].push_back(static_cast<int>(t));
  for (std::size_t v = 0; v < nv; ++v) {
    const Vec2 z = param.disk.col(static_cast<Eigen::Index>(v));
    const auto [cx, cy] = cell_of(z);
    double sw = 0.0, sum_w = 0.0;
    for (int i = cx - 1; i <= cx + 1; ++i)
      for (int j = cy - 1; j <= cy + 1; ++j) {
        auto it = cells.find({i, j});
        if (it == cells.end()) continue;
        for (int t : it->second) {
          const auto u = static_cast<std::size_t>(t);
          const double q = (cen[u] - z).squaredNorm() / (rho * rho);
          if (q >= 1.0) continue;
          const double k = (1.0 - q) * (1.0 - q) * std::abs(param.disk_area[u]);
          sw += k;
          sum_w += k * param.w[u];
          f1[v] += k * param.e1[u];
          f2[v] += k * param.e2[u];
        }
      }
    wv[v] = sum_w / sw;
    f1[v].normalize();
    f2[v].normalize();
  }

  CurvatureResiduals out;
  std::vector<double> tri_wedge(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto& tri = param.triangles[t];
    Eigen::Matrix2d P;
    P.col(0) = param.disk.col(tri[1]) - param.disk.col(tri[0]);
    P.col(1) = param.disk.col(tri[2]) - param.disk.col(tri[0]);
    const Eigen::Matrix2d Pi = P.inverse();
    Mat E1(n, 2), E2(n, 2);
    E1.col(0) = f1[static_cast<std::size_t>(tri[1])] - f1[static_cast<std::size_t>(tri[0])];
    E1.col(1) = f1[static_cast<std::size_t>(tri[2])] - f1[static_cast<std::size_t>(tri[0])];
    E2.col(0) = f2[static_cast<std::size_t>(tri[1])] - f2[static_cast<std::size_t>(tri[0])];
    E2.col(1) = f2[static_cast<std::size_t>(tri[2])] - f2[static_cast<std::size_t>(tri[0])];
    const Mat D1 = E1 * Pi, D2 = E2 * Pi;
    tri_wedge[t] = D1.col(0).dot(D2.col(1)) - D1.col(1).dot(D2.col(0));
    if (cen[t].norm() <= 1.0 - margin)
      out.frame_energy += (D1.squaredNorm() + D2.squaredNorm()) * std::abs(param.disk_area[t]);
    const double ar = std::abs(param.disk_area[t]);
    for (int v : tri) wedge[static_cast<std::size_t>(v)] += tri_wedge[t] * ar;
  }
  for (std::size_t v = 0; v < nv; ++v) wedge[v] /= acc[v];

  for (std::size_t v = 0; v < nv; ++v) {
    if (param.on_boundary[v] || param.disk.col(static_cast<Eigen::Index>(v)).norm() > 1.0 - margin) continue;
    // a vertex whose neighbors touch the boundary still has a full star, so it is kept
    const int iv = static_cast<int>(v);
    const Vec lf = lap.apply(iv, [&](int j) -> Vec { return param.image.col(j); }, nbr);
    const Vec target = h[v] * e2w[v];
    out.mc_residual += (lf - target).norm() * lap.mass[v];
    out.mc_reference += target.norm() * lap.mass[v];
    const double lw = lap.apply(iv, [&](int j) { return wv[static_cast<std::size_t>(j)]; }, nbr);
    out.gauss_residual += std::abs(-lw - wedge[v]) * lap.mass[v];
    out.gauss_reference += std::abs(wedge[v]) * lap.mass[v];
    ++out.interior;
  }
  out.mc_relative = out.mc_reference > 0.0 ? out.mc_residual / out.mc_reference : out.mc_residual;
  return out;
}

// ---------------------------------------------------------------------------

LipschitzPieces large_lipschitz_pieces(const DiskParameterization& param, const DyadicSquare& q, double t,
                                       double qexp) {
  const Vec2 x = q.center();
  const double r = q.side / 2.0;
  LipschitzPieces out;
  out.a = semmes_affine_fit(param, x, r).a;
  out.bound_rhs = std::pow(t, -qexp) * r * r;

  const std::size_t nt = param.triangles.size();
  std::vector<Vec2> cen(nt);
  std::vector<double> g(nt), ginv(nt);
  for (std::size_t k = 0; k < nt; ++k) {
    cen[k] = centroid(param, param.triangles[k]);
    const Mat& A = param.jacobian[k];
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(A.transpose() * A);
    g[k] = A.norm() / std::sqrt(2.0);
    ginv[k] = 1.0 / std::sqrt(std::max(1e-300, es.eigenvalues()[0]));
  }
  std::vector<int> in_q;
  for (Eigen::Index v = 0; v < param.vertex_count(); ++v) {
    const Vec2 z = param.disk.col(v);
    if (z.x() >= q.lo.x() && z.y() >= q.lo.y() && z.x() < q.lo.x() + q.side && z.y() < q.lo.y() + q.side)
      in_q.push_back(static_cast<int>(v));
  }
  out.vertices = static_cast<int>(in_q.size());
  // triangles near Q, the only ones a maximal function over radii <= side can see
  std::vector<int> near;
  for (std::size_t k = 0; k < nt; ++k)
    if ((cen[k] - x).lpNorm<Eigen::Infinity>() <= r + q.side) near.push_back(static_cast<int>(k));

  std::vector<std::vector<int>> incident(static_cast<std::size_t>(param.vertex_count()));
  for (std::size_t k = 0; k < nt; ++k)
    for (int v : param.triangles[k]) incident[static_cast<std::size_t>(v)].push_back(static_cast<int>(k));

  const auto mass = param.vertex_area();
  std::vector<char> bad(static_cast<std::size_t>(param.vertex_count()), 0);
  for (int v : in_q) {
    const Vec2 z = param.disk.col(v);
    // the star of v, then balls of doubling radius up to the side of Q
    double mg = 0.0, mi = 0.0, a = 0.0, rho = 0.0;
    for (int k : incident[static_cast<std::size_t>(v)]) {
      const auto u = static_cast<std::size_t>(k);
      const double ar = std::abs(param.disk_area[u]);
      mg += g[u] * ar;
      mi += ginv[u] * ar;
      a += ar;
      rho = std::max(rho, (cen[u] - z).norm());
    }
    if (a > 0.0) mg /= a, mi /= a;
    for (rho *= 2.0; rho > 0.0 && rho <= q.side; rho *= 2.0) {
      double sg = 0.0, si = 0.0, sa = 0.0;
      for (int k : near) {
        const auto u = static_cast<std::size_t>(k);
        if ((cen[u] - z).norm() > rho) continue;
        const double ar = std::abs(param.disk_area[u]);
        sg += g[u] * ar;
        si += ginv[u] * ar;
        sa += ar;
      }
      if (sa > 0.0) {
        mg = std::max(mg, sg / sa);
        mi = std::max(mi, si / sa);
      }
    }
    if (mg > t * out.a || mi > t / out.a) {
      bad[static_cast<std::size_t>(v)] = 1;
      out.exceptional.push_back(v);
      out.exceptional_area += mass[static_cast<std::size_t>(v)];
    }
  }
  for (int v : out.exceptional) {
    double s = 0.0;
    for (int k : incident[static_cast<std::size_t>(v)])
      s += param.area_factor[static_cast<std::size_t>(k)] * std::abs(param.disk_area[static_cast<std::size_t>(k)]) / 3.0;
    out.image_area += s;
  }
  out.bound_lhs = out.exceptional_area + out.image_area / (out.a * out.a);

  std::vector<int> good;
  for (int v : in_q)
    if (!bad[static_cast<std::size_t>(v)]) good.push_back(v);
  const std::size_t stride = std::max<std::size_t>(1, good.size() / 1500);
  for (std::size_t i = 0; i < good.size(); i += stride)
    for (std::size_t j = i + stride; j < good.size(); j += stride) {
      const double dz = (param.disk.col(good[i]) - param.disk.col(good[j])).norm();
      if (dz <= 0.0) continue;
      out.lipschitz = std::max(out.lipschitz, (param.image.col(good[i]) - param.image.col(good[j])).norm() / dz);
    }
  out.normalized = out.lipschitz / out.a;
  return out;
}

// ---------------------------------------------------------------------------

ConformalSummary summarize(const DiskParameterization& param, std::span<const Vec> h, int max_depth, double margin) {
  ConformalSummary s;
  s.energy = param.energy;
  s.conformal_area = param.conformal_area;
  s.energy_gap_relative = param.conformal_area > 0.0 ? param.energy_gap() / (2.0 * param.conformal_area) : 0.0;
  s.max_dilatation = param.max_dilatation();
  const double ll = std::log(param.lambda);
  for (std::size_t t = 0; t < param.w.size(); ++t)
    if (centroid(param, param.triangles[t]).norm() <= 1.0 - margin) s.w_sup = std::max(s.w_sup, std::abs(param.w[t] - ll));
  const auto lg = log_gradient(param);
  s.bmo = bmo_norm(param, lg, max_depth);
  s.a2 = a2_constant(param, param.w, max_depth);
  const auto squares = dyadic_squares(param, max_depth);
  s.squares = static_cast<int>(squares.size());
  for (const auto& q : squares) s.inverse_holder_max = std::max(s.inverse_holder_max, inverse_holder_check(param, q));

  std::vector<Vec2> centers;
  for (const auto& q : squares)
    if (q.depth == 2 || q.depth == 3) centers.push_back(q.center());
  for (const auto& e : quasisymmetry_table(param, centers, {0.05, 0.1, 0.2}))
    s.quasisymmetry_max = std::max(s.quasisymmetry_max, e.ratio);
  s.pin_error = param.pin_error;
  if (!h.empty()) {
    s.has_curvature = true;
    s.residuals = curvature_equation_residuals(param, h, margin);
  }
  return s;
}

}  // namespace varifold
