#include "varifold/curvature.hpp"

#include <cmath>

#include "varifold/error.hpp"
#include "varifold/parallel.hpp"

namespace varifold {

using Index = Eigen::Index;

namespace {

// Tangent frame at x. The first axis points at the lowest-index neighbor with a
// clear tangential offset, which makes the test-field layout follow the data
// under rigid motions.
Mat tangent_frame(const WeightedSurfaceSample& sample, const Vec& x, double radius, const std::vector<Index>& idx) {
  const int m = sample.intrinsic_dim();
  const auto [j, dist] = sample.nearest(x);
  Mat basis;
  if (dist <= 1e-12 * radius) {
    basis = sample.tangent(j).basis();
  } else {
    basis = fit_plane_pca(sample.points(), idx, sample.weights(), m, &x).plane.basis();
  }
  Mat spanning(basis.rows(), m + 1);
  spanning.col(0) = basis.col(0);
  for (Index i : idx) {
    const Vec t = basis.transpose() * (sample.point(i) - x);
    if (t.norm() >= 0.25 * radius) {
      spanning.col(0) = basis * t / t.norm();
      break;
    }
  }
  spanning.rightCols(m) = basis;
  Mat frame(basis.rows(), m);
  int filled = 0;
  for (Index c = 0; c <= m && filled < m; ++c) {
    Vec v = spanning.col(c);
    for (int k = 0; k < filled; ++k) v -= frame.col(k).dot(v) * frame.col(k);
    if (v.norm() > 1e-8) {
      frame.col(filled) = v / v.norm();
      ++filled;
    }
  }
  return frame;
}

}  // namespace

CurvatureEstimate estimate_mean_curvature(const WeightedSurfaceSample& sample, const Vec& x, double radius) {
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidSpec, "estimation radius must be positive");
  const int n = sample.ambient_dim();
  const int m = sample.intrinsic_dim();
  const auto idx = sample.ball_query(x, radius);
  if (idx.size() < 10) throw Error(ErrorCode::TooFewPoints, "curvature estimation needs at least 10 points in the ball");

  const Mat frame = tangent_frame(sample, x, radius, idx);

  std::vector<Vec> centers{x};
  if (m == 2) {
    for (int j = 0; j < 3; ++j) {
      const double a = 2.0 * kPi * j / 3.0;
      centers.push_back(x + 0.5 * radius * (std::cos(a) * frame.col(0) + std::sin(a) * frame.col(1)));
    }
  } else {
    for (int a = 0; a < m; ++a)
      for (double s : {1.0, -1.0}) centers.push_back(x + 0.5 * s * radius * frame.col(a));
  }

  const auto rows = static_cast<Index>(centers.size());
  Mat coef = Mat::Zero(rows, m + 1);  // [sum w phi, sum w phi u_a]
  Mat rhs = Mat::Zero(rows, n);       // sum w P_y grad phi
  const double r2max = radius * radius;
  std::vector<Index> q;
  Vec d(n), grad(n), u(m), along(m);
  for (Index c = 0; c < rows; ++c) {
    sample.ball_query(centers[static_cast<std::size_t>(c)], radius, q);
    for (Index i : q) {
      d = sample.point(i) - centers[static_cast<std::size_t>(c)];
      const double s = 1.0 - d.squaredNorm() / r2max;
      if (s <= 0.0) continue;
      const double w = sample.weight(i);
      const double phi = s * s;
      grad = (-4.0 * s / r2max) * d;
      const Mat& b = sample.tangent(i).basis();
      along.noalias() = b.transpose() * grad;
      rhs.row(c).noalias() += w * (b * along).transpose();
      u.noalias() = frame.transpose() * (sample.point(i) - x) / radius;
      coef(c, 0) += w * phi;
      coef.row(c).tail(m) += w * phi * u.transpose();
    }
  }

  const Mat normal = coef.transpose() * coef;
  const Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(normal, Eigen::EigenvaluesOnly).eigenvalues();
  CurvatureEstimate out;
  out.support = static_cast<int>(idx.size());
  out.condition = ev[0] > 0.0 ? ev[ev.size() - 1] / ev[0] : std::numeric_limits<double>::infinity();
  if (!(out.condition <= 1e8)) {
    throw Error(ErrorCode::IllConditioned, "first-variation normal equations are ill conditioned");
  }
  const Mat sol = normal.ldlt().solve(coef.transpose() * (-rhs));
  out.h = sol.row(0).transpose();
  const double scale = rhs.norm();
  out.residual = scale > 0.0 ? (coef * sol + rhs).norm() / scale : 0.0;
  return out;
}

double normal_angle(const Vec& h, const Plane& tangent) {
  const double hn = h.norm();
  if (hn == 0.0) return 0.0;
  const double along = (tangent.basis().transpose() * h).norm();
  return std::asin(std::min(1.0, along / hn));
}

CurvatureField estimate_curvature_field(const WeightedSurfaceSample& sample, const CurvatureOptions& opts) {
  CurvatureField f;
  const auto count = static_cast<std::size_t>(sample.size());
  f.radius = opts.radius_mult * sample.mean_spacing();
  f.h.assign(count, Vec::Zero(sample.ambient_dim()));
  f.residual.assign(count, 0.0);
  f.perpendicular.assign(count, 1);
  std::vector<char> failed(count, 0);
  parallel_for(count, [&](std::size_t i) {
    const auto ii = static_cast<Index>(i);
    try {
      const auto est = estimate_mean_curvature(sample, sample.point(ii), f.radius);
      f.h[i] = est.h;
      f.residual[i] = est.residual;
    } catch (const Error&) {
      failed[i] = 1;
      return;
    }
    const Plane& t = sample.tangent(ii);
    f.perpendicular[i] = normal_angle(f.h[i], t) <= opts.angle_tolerance;
    if (opts.project_normal) f.h[i] -= t.basis() * (t.basis().transpose() * f.h[i]);
  });
  for (std::size_t i = 0; i < count; ++i) {
    f.failed += failed[i];
    f.flagged += !f.perpendicular[i];
  }
  return f;
}

double willmore_energy(const WeightedSurfaceSample& sample, const Ball& region, std::span<const Vec> h) {
  if (static_cast<Index>(h.size()) != sample.size()) throw Error(ErrorCode::MissingCurvature, "curvature field size");
  double s = 0.0;
  for (Index i : sample.ball_query(region.center, region.radius)) {
    s += sample.weight(i) * h[static_cast<std::size_t>(i)].squaredNorm();
  }
  return s;
}

MonotonicityLedger monotonicity_identity(const WeightedSurfaceSample& sample, const Vec& x, double sigma, double rho,
                                         std::span<const Vec> h, double floor) {
  if (static_cast<Index>(h.size()) != sample.size()) throw Error(ErrorCode::MissingCurvature, "curvature field size");
  if (!(sigma < rho)) throw Error(ErrorCode::InvalidSpec, "monotonicity needs sigma < rho");
  if (sigma < floor * (1.0 - 1e-12)) throw Error(ErrorCode::BallBelowResolution, "sigma below the resolution floor");

  MonotonicityLedger l;
  l.x = x;
  l.sigma = sigma;
  l.rho = rho;
  Vec d(x.size()), perp(x.size());
  for (Index i : sample.ball_query(x, rho)) {
    const double w = sample.weight(i);
    const Vec& hi = h[static_cast<std::size_t>(i)];
    d = sample.point(i) - x;
    const double r = d.norm();
    const Mat& b = sample.tangent(i).basis();
    perp = d - b * (b.transpose() * d);  // r grad^perp r
    const double pairing = perp.dot(hi);  // r <grad^perp r, H>
    const bool inner = r <= sigma;
    l.density_rho += w;
    l.pairing_rho += w * pairing;
    if (inner) {
      l.density_sigma += w;
      l.pairing_sigma += w * pairing;
    } else {
      l.willmore_annulus += w * hi.squaredNorm();
      l.normal_annulus += w * (perp / (r * r) + 0.25 * hi).squaredNorm();
    }
  }
  l.density_sigma /= sigma * sigma;
  l.density_rho /= rho * rho;
  l.willmore_annulus /= 16.0;
  l.pairing_rho /= 2.0 * rho * rho;
  l.pairing_sigma /= 2.0 * sigma * sigma;
  l.lhs = l.density_sigma;
  l.rhs = l.density_rho + l.willmore_annulus - l.normal_annulus + l.pairing_rho - l.pairing_sigma;
  l.residual = l.lhs - l.rhs;
  l.relative_residual = l.lhs != 0.0 ? l.residual / l.lhs : 0.0;
  return l;
}

MonotonicityInequality monotonicity_inequality(const WeightedSurfaceSample& sample, const Vec& x, double sigma,
                                               double rho, double delta, std::span<const Vec> h, double floor) {
  if (!(delta > 0.0 && delta <= 1.0)) throw Error(ErrorCode::InvalidSpec, "delta must lie in (0, 1]");
  if (static_cast<Index>(h.size()) != sample.size()) throw Error(ErrorCode::MissingCurvature, "curvature field size");
  if (!(sigma < rho)) throw Error(ErrorCode::InvalidSpec, "monotonicity needs sigma < rho");
  if (sigma < floor * (1.0 - 1e-12)) throw Error(ErrorCode::BallBelowResolution, "sigma below the resolution floor");
  MonotonicityInequality out;
  out.lhs = sample.measure(Ball(x, sigma)) / (sigma * sigma);
  out.rhs = (1.0 + delta) * sample.measure(Ball(x, rho)) / (rho * rho) +
            willmore_energy(sample, Ball(x, rho), h) / (2.0 * delta);
  out.holds = out.lhs <= out.rhs;
  return out;
}

}  // namespace varifold
