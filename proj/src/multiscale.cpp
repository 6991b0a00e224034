#include "varifold/multiscale.hpp"

#include <algorithm>
#include <cmath>

#include "varifold/error.hpp"
#include "varifold/parallel.hpp"

namespace varifold {

using Index = Eigen::Index;

double resolution_floor(const WeightedSurfaceSample& sample, double floor_mult) {
  return floor_mult * sample.mean_spacing();
}

// ---------------------------------------------------------------------------
// scale family

ScaleFamily ScaleFamily::dyadic(const WeightedSurfaceSample& sample, const Ball& domain, double sigma_max,
                                double floor, double center_separation) {
  if (!(floor > 0.0)) throw Error(ErrorCode::InvalidSpec, "resolution floor must be positive");
  if (sigma_max < floor) {
    throw Error(ErrorCode::BallBelowResolution, "largest radius is below the resolution floor");
  }
  ScaleFamily f;
  f.domain = domain;
  f.floor = floor;
  for (double s = sigma_max; s >= floor * (1.0 - 1e-12); s *= 0.5) f.radii.push_back(s);

  const double sep = center_separation > 0.0 ? center_separation : floor;
  for (Index i : sample.ball_query(domain.center, domain.radius)) {
    bool far = true;
    for (Index c : f.centers) {
      if (distance(sample.point(i), sample.point(c)) < sep) {
        far = false;
        break;
      }
    }
    if (far) f.centers.push_back(i);
  }
  return f;
}

void ScaleFamily::validate() const {
  if (radii.empty()) throw Error(ErrorCode::InvalidSpec, "scale family has no radii");
  if (!(floor > 0.0)) throw Error(ErrorCode::InvalidSpec, "resolution floor must be positive");
  for (std::size_t k = 1; k < radii.size(); ++k) {
    if (!(radii[k] < radii[k - 1])) throw Error(ErrorCode::InvalidSpec, "radii must strictly decrease");
  }
  if (radii.back() < floor * (1.0 - 1e-12)) {
    throw Error(ErrorCode::BallBelowResolution, "family radius below the resolution floor");
  }
}

std::vector<Ball> ScaleFamily::balls(const WeightedSurfaceSample& sample) const {
  std::vector<Ball> out;
  for (double r : radii) {
    for (Index c : centers) {
      Ball b(sample.point(c), r);
      if (b.inside(domain)) out.push_back(std::move(b));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// density

double density_ratio(const WeightedSurfaceSample& sample, const Ball& ball, double floor) {
  if (ball.radius < floor * (1.0 - 1e-12)) {
    throw Error(ErrorCode::BallBelowResolution, "ball radius is below the resolution floor");
  }
  const int m = sample.intrinsic_dim();
  return sample.measure(ball) / (unit_ball_volume(m) * std::pow(ball.radius, m));
}

// ---------------------------------------------------------------------------
// Reifenberg flatness

namespace {

class FlatnessProblem {
 public:
  FlatnessProblem(const WeightedSurfaceSample& sample, const Ball& ball)
      : sample_(sample), center_(ball.center), sigma_(ball.radius), m_(sample.intrinsic_dim()) {
    idx_ = sample.ball_query(ball.center, ball.radius);
    if (static_cast<int>(idx_.size()) < m_ + 1) {
      throw Error(ErrorCode::TooFewPoints, "ball holds fewer than m+1 sample points");
    }
    local_.resize(sample.ambient_dim(), static_cast<Index>(idx_.size()));
    radius_.resize(idx_.size());
    const double omega = unit_ball_volume(m_);
    for (std::size_t k = 0; k < idx_.size(); ++k) {
      local_.col(static_cast<Index>(k)) = sample.point(idx_[k]) - center_;
      radius_[k] = std::pow(sample.weight(idx_[k]) / omega, 1.0 / m_);
      max_radius_ = std::max(max_radius_, radius_[k]);
    }
    tree_ = KdTree(local_);
    spacing_ = sample.mean_spacing();
  }

  const std::vector<Index>& indices() const { return idx_; }
  const PointMatrix& local() const { return local_; }
  double spacing() const { return spacing_; }

  double evaluate(const Mat& frame) const {
    const auto basis = frame.leftCols(m_);
    double sample_side = 0.0;
    for (Index k = 0; k < local_.cols(); ++k) {
      const Vec t = basis.transpose() * local_.col(k);
      const double d2 = std::max(0.0, local_.col(k).squaredNorm() - t.squaredNorm());
      const double over = std::max(0.0, t.norm() - sigma_);
      sample_side = std::max(sample_side, std::sqrt(d2 + over * over));
    }

    double disk_side = 0.0;
    const int reach = static_cast<int>(std::floor(sigma_ / spacing_));
    std::vector<int> a(static_cast<std::size_t>(m_), -reach);
    std::vector<Index> near;
    Vec coords(m_);
    for (;;) {
      double r2 = 0.0;
      for (int j = 0; j < m_; ++j) {
        coords[j] = a[static_cast<std::size_t>(j)] * spacing_;
        r2 += coords[j] * coords[j];
      }
      if (r2 <= sigma_ * sigma_) {
        const Vec g = basis * coords;
        const auto [nearest_k, d0] = tree_.nearest(g);
        (void)nearest_k;
        tree_.ball_query(g, d0 + max_radius_, near);
        double best = d0;
        for (Index k : near) best = std::min(best, patch_distance(g, k));
        disk_side = std::max(disk_side, best);
      }
      int j = 0;
      while (j < m_ && ++a[static_cast<std::size_t>(j)] > reach) a[static_cast<std::size_t>(j++)] = -reach;
      if (j == m_) break;
    }
    return std::max(sample_side, disk_side) / sigma_;
  }

 private:
  // distance from g to the tangent disk of atom k
  double patch_distance(const Vec& g, Index k) const {
    const Vec v = g - local_.col(k);
    const Vec t = sample_.tangent(idx_[static_cast<std::size_t>(k)]).projector() * v;
    const double tn = t.norm();
    const double perp2 = std::max(0.0, v.squaredNorm() - tn * tn);
    const double over = std::max(0.0, tn - radius_[static_cast<std::size_t>(k)]);
    return std::sqrt(perp2 + over * over);
  }

  const WeightedSurfaceSample& sample_;
  Vec center_;
  double sigma_;
  int m_;
  std::vector<Index> idx_;
  PointMatrix local_;
  std::vector<double> radius_;
  double max_radius_ = 0.0;
  double spacing_ = 0.0;
  KdTree tree_;
};

// Rotates frame columns i (tangent) and j (normal) by angle a.
Mat rotated(const Mat& frame, Index i, Index j, double a) {
  Mat out = frame;
  out.col(i) = std::cos(a) * frame.col(i) + std::sin(a) * frame.col(j);
  out.col(j) = -std::sin(a) * frame.col(i) + std::cos(a) * frame.col(j);
  return out;
}

}  // namespace

Flatness reifenberg_flatness(const WeightedSurfaceSample& sample, const Ball& ball, int refinements) {
  FlatnessProblem problem(sample, ball);
  const int n = sample.ambient_dim();
  const int m = sample.intrinsic_dim();
  const auto& idx = problem.indices();

  const PlaneFit fit = fit_plane_pca(sample.points(), idx, sample.weights(), m, &ball.center);
  const Mat b0 = fit.eigenvectors.leftCols(m);

  // Lattice orientation from the data: toward the lowest-index point with a
  // substantial in-plane offset. Keeps the result equivariant under rigid motions.
  Mat spanning(n, m + 1);
  spanning.col(0) = b0.col(0);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Vec t = b0.transpose() * problem.local().col(static_cast<Index>(k));
    if (t.norm() >= 0.25 * ball.radius) {
      spanning.col(0) = b0 * t / t.norm();
      break;
    }
  }
  spanning.rightCols(m) = b0;
  Mat tangent(n, m);
  int filled = 0;
  for (Index c = 0; c <= m && filled < m; ++c) {
    Vec v = spanning.col(c);
    for (int j = 0; j < filled; ++j) v -= tangent.col(j).dot(v) * tangent.col(j);
    const double nv = v.norm();
    if (nv > 1e-8) tangent.col(filled++) = v / nv;
  }

  Mat frame(n, n);
  frame.leftCols(m) = tangent;
  frame.rightCols(n - m) = fit.eigenvectors.rightCols(n - m);

  Flatness out;
  out.pca_plane = Plane::from_basis(frame.leftCols(m), ball.center);
  double best = problem.evaluate(frame);
  out.pca_value = best;
  int evals = 1;

  // steepest descent over single-pair rotations, halving the step on stalls
  double angle = std::clamp(best, 1e-3, 0.2);
  int halvings = 0;
  while (halvings < refinements && evals < 400) {
    double cand_best = best;
    Mat cand_frame;
    for (Index i = 0; i < m; ++i) {
      for (Index j = m; j < n; ++j) {
        for (double sgn : {1.0, -1.0}) {
          Mat f = rotated(frame, i, j, sgn * angle);
          const double v = problem.evaluate(f);
          ++evals;
          if (v < cand_best) {
            cand_best = v;
            cand_frame = std::move(f);
          }
        }
      }
    }
    if (cand_best < best) {
      best = cand_best;
      frame = std::move(cand_frame);
    } else {
      angle *= 0.5;
      ++halvings;
    }
  }

  out.value = best;
  out.plane = Plane::from_basis(frame.leftCols(m), ball.center);
  out.error_bar = problem.spacing() / ball.radius;
  out.evaluations = evals;
  return out;
}

// ---------------------------------------------------------------------------
// tilt and Caccioppoli

double tilt_excess(const WeightedSurfaceSample& sample, const Ball& ball, const Plane& plane) {
  if (plane.ambient_dim() != sample.ambient_dim()) throw Error(ErrorCode::DimensionMismatch, "plane dimension");
  const auto idx = sample.ball_query(ball.center, ball.radius);
  const int m = sample.intrinsic_dim();
  if (static_cast<int>(idx.size()) < m + 1) throw Error(ErrorCode::TooFewPoints, "ball holds too few points");
  double s = 0.0;
  for (Index i : idx) {
    const double d = projector_distance(sample.tangent(i).projector(), plane.projector());
    s += sample.weight(i) * d * d;
  }
  return s / std::pow(ball.radius, m);
}

CaccioppoliTerms caccioppoli_bound_check(const WeightedSurfaceSample& sample, const Ball& ball, double alpha,
                                         std::span<const Vec> h, const Plane* plane) {
  if (static_cast<Index>(h.size()) != sample.size()) {
    throw Error(ErrorCode::MissingCurvature, "mean curvature is required at every sample point");
  }
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidSpec, "alpha must be positive");
  CaccioppoliTerms out;
  out.plane = plane ? *plane : reifenberg_flatness(sample, ball).plane;
  out.lhs = tilt_excess(sample, ball, out.plane);

  const double sigma = ball.radius;
  const Mat perp = out.plane.normal_projector();
  double curv = 0.0, height = 0.0;
  for (Index i : sample.ball_query(ball.center, (1.0 + alpha) * sigma)) {
    const double w = sample.weight(i);
    curv += w * h[static_cast<std::size_t>(i)].squaredNorm();
    const double d = (perp * (sample.point(i) - ball.center)).norm() / sigma;
    height += w * d * d;
  }
  const double k = 1.0 + 1.0 / alpha;
  out.curvature_term = curv;
  out.height_term = k * k * height / (sigma * sigma);
  out.rhs = out.curvature_term + out.height_term;
  return out;
}

// ---------------------------------------------------------------------------
// beta numbers

double jones_beta(const WeightedSurfaceSample& sample, const Vec& center, double s) {
  if (!(s > 0.0)) throw Error(ErrorCode::InvalidSpec, "scale must be positive");
  const auto idx = sample.ball_query(center, s);
  const int m = sample.intrinsic_dim();
  const int n = sample.ambient_dim();
  if (static_cast<int>(idx.size()) < m + 1) throw Error(ErrorCode::TooFewPoints, "ball holds too few points");
  double wsum = 0.0;
  Vec c = Vec::Zero(n);
  for (Index i : idx) {
    wsum += sample.weight(i);
    c += sample.weight(i) * sample.point(i);
  }
  c /= wsum;
  Mat scatter = Mat::Zero(n, n);
  Vec d(n);
  for (Index i : idx) {
    d = sample.point(i) - c;
    scatter.noalias() += sample.weight(i) * d * d.transpose();
  }
  // residual of the best m-plane through the centroid = the n-m smallest eigenvalues
  const Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(scatter, Eigen::EigenvaluesOnly).eigenvalues();
  const double residual = std::max(0.0, ev.head(n - m).sum());
  return residual / std::pow(s, m + 2);
}

CarlesonSum carleson_sum(const WeightedSurfaceSample& sample, const Vec& xi, double sigma, double floor,
                         int per_octave) {
  if (sigma < 4.0 * floor) throw Error(ErrorCode::BallBelowResolution, "Carleson radius must be at least 4x the floor");
  if (per_octave < 1) throw Error(ErrorCode::InvalidSpec, "per_octave must be >= 1");
  CarlesonSum out;
  for (int k = 0;; ++k) {
    const double s = sigma * std::pow(2.0, -(k + 0.5) / per_octave);
    if (s < floor) break;
    out.scales.push_back(s);
  }
  const double dlog = std::log(2.0) / per_octave;
  const auto ys = sample.ball_query(xi, sigma);
  std::vector<double> contrib(ys.size(), 0.0);
  parallel_for(ys.size(), [&](std::size_t k) {
    const Vec y = sample.point(ys[k]);
    double acc = 0.0;
    for (double s : out.scales) acc += jones_beta(sample, y, s);
    contrib[k] = sample.weight(ys[k]) * acc * dlog;
  });
  for (double c : contrib) out.value += c;
  out.normalized = out.value / (kPi * sigma * sigma);
  return out;
}

double carleson_dperp_bound(const WeightedSurfaceSample& sample, const Vec& xi, double sigma) {
  const auto zs = sample.ball_query(xi, 2.0 * sigma);
  std::vector<double> contrib(zs.size(), 0.0);
  parallel_for(zs.size(), [&](std::size_t k) {
    const Index z = zs[k];
    const Vec pz = sample.point(z);
    double acc = 0.0;
    Vec v(pz.size());
    for (Index y : sample.ball_query(pz, sigma)) {
      if (y == z) continue;
      v = sample.point(y) - pz;
      const double r2 = v.squaredNorm();
      if (r2 == 0.0) continue;
      const Mat& b = sample.tangent(y).basis();
      double along = 0.0;
      for (Index j = 0; j < b.cols(); ++j) {
        const double c = b.col(j).dot(v);
        along += c * c;
      }
      acc += sample.weight(y) * std::max(0.0, r2 - along) / (r2 * r2);
    }
    contrib[k] = sample.weight(z) * acc;
  });
  double s = 0.0;
  for (double c : contrib) s += c;
  return 2.0 * s;
}

BetaProfile beta_profile(const WeightedSurfaceSample& sample, const Vec& y, double s_max, double floor) {
  if (s_max < floor) throw Error(ErrorCode::BallBelowResolution, "profile scale below the floor");
  BetaProfile out;
  out.center = y;
  for (double s = s_max; s >= floor * (1.0 - 1e-12); s *= 0.5) {
    out.scales.push_back(s);
    out.beta_sq.push_back(jones_beta(sample, y, s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// certification

double BallRecord::gamma() const {
  return std::max({std::abs(density - 1.0), flatness, std::sqrt(std::max(0.0, tilt))});
}

ChordArcReport certify_chord_arc(const WeightedSurfaceSample& sample, const ScaleFamily& family, int refinements) {
  family.validate();
  const auto balls = family.balls(sample);
  ChordArcReport report;
  report.floor = family.floor;
  report.domain = family.domain;
  report.balls.resize(balls.size());
  parallel_for(balls.size(), [&](std::size_t k) {
    BallRecord& rec = report.balls[k];
    rec.center = balls[k].center;
    rec.radius = balls[k].radius;
    try {
      rec.density = density_ratio(sample, balls[k], family.floor);
      Flatness fl = reifenberg_flatness(sample, balls[k], refinements);
      rec.flatness = fl.value;
      rec.flatness_error = fl.error_bar;
      rec.tilt = tilt_excess(sample, balls[k], fl.plane);
      rec.pca_tilt = tilt_excess(sample, balls[k], fl.pca_plane);
      rec.plane = std::move(fl.plane);
      rec.pca_plane = std::move(fl.pca_plane);
    } catch (const Error& e) {
      rec.error = std::string(to_string(e.code())) + ": " + e.what();
    }
  });
  for (const auto& rec : report.balls) {
    if (rec.error) {
      ++report.failed;
      continue;
    }
    report.gamma = std::max(report.gamma, rec.gamma());
  }
  return report;
}

// ---------------------------------------------------------------------------
// maximal tilt

std::vector<std::pair<double, double>> tilt_profile(const WeightedSurfaceSample& sample, const Vec& y,
                                                    double r_max, const Plane& reference, double floor) {
  if (r_max < floor * (1.0 - 1e-12)) throw Error(ErrorCode::BallBelowResolution, "r_max below the floor");
  std::vector<std::pair<double, double>> out;
  std::vector<Index> idx;
  for (double s = r_max; s >= floor * (1.0 - 1e-12); s *= 0.5) {
    sample.ball_query(y, s, idx);
    if (idx.empty()) continue;
    double num = 0.0, den = 0.0;
    for (Index i : idx) {
      num += sample.weight(i) * projector_distance(sample.tangent(i).projector(), reference.projector());
      den += sample.weight(i);
    }
    out.emplace_back(s, num / den);
  }
  return out;
}

double local_maximal_tilt(const WeightedSurfaceSample& sample, const Vec& y, double r_max, const Plane& reference,
                          double floor) {
  double best = 0.0;
  for (const auto& [s, v] : tilt_profile(sample, y, r_max, reference, floor)) best = std::max(best, v);
  return best;
}

// ---------------------------------------------------------------------------
// no-hole projection

NoHoleResult projection_no_hole_check(const WeightedSurfaceSample& sample, const Vec& xi, double sigma) {
  if (sample.intrinsic_dim() != 2) throw Error(ErrorCode::DimensionMismatch, "no-hole check rasterizes 2-planes");
  NoHoleResult out;
  out.plane = reifenberg_flatness(sample, Ball(xi, sigma)).plane;
  const Mat& basis = out.plane.basis();
  const double h = sample.mean_spacing();

  std::vector<Vec2> projected;
  for (Index i : sample.ball_query(xi, std::sqrt(2.0) * sigma)) {
    const Vec d = sample.point(i) - xi;
    const Vec2 t = basis.transpose() * d;
    const double normal = std::sqrt(std::max(0.0, d.squaredNorm() - t.squaredNorm()));
    if (t.norm() <= sigma && normal <= sigma) projected.push_back(t);
  }
  PointMatrix pts(2, static_cast<Index>(projected.size()));
  for (std::size_t k = 0; k < projected.size(); ++k) pts.col(static_cast<Index>(k)) = projected[k];

  const int reach = static_cast<int>(std::floor(sigma / h));
  const KdTree tree = projected.empty() ? KdTree() : KdTree(pts);
  for (int a = -reach; a <= reach; ++a) {
    for (int b = -reach; b <= reach; ++b) {
      const Vec2 c(a * h, b * h);
      if (c.norm() > sigma) continue;
      ++out.cells;
      const bool covered = !projected.empty() && tree.nearest(c).second <= h;
      if (!covered) {
        out.gap_cells.push_back(c);
        out.gap_points.push_back(xi + basis * c);
      }
    }
  }
  out.pass = out.gap_cells.empty();
  return out;
}

}  // namespace varifold
