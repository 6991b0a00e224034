#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "varifold/error.hpp"
#include "varifold/geometry.hpp"
#include "varifold/sample.hpp"

using namespace varifold;

namespace {

PointMatrix random_cloud(int n, int count, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointMatrix p(n, count);
  for (int j = 0; j < count; ++j)
    for (int i = 0; i < n; ++i) p(i, j) = u(rng);
  return p;
}

Plane plane_at_angle(double alpha) {
  Mat b(3, 2);
  b << 1, 0, 0, std::cos(alpha), 0, std::sin(alpha);
  return Plane::from_basis(b);
}

}  // namespace

TEST_CASE("plane invariants hold for arbitrary spanning sets") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    Mat span(5, 2);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 2; ++j) span(i, j) = g(rng);
    const Plane p = Plane::from_basis(span);
    CHECK(p.satisfies_invariants(1e-10));
    CHECK(std::abs(p.projector().trace() - 2.0) < 1e-10);
  }
  CHECK_THROWS_AS(Plane::from_basis(Mat::Zero(3, 2)), Error);
}

TEST_CASE("fit_plane_pca: exact planarity") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointMatrix p = PointMatrix::Zero(3, 100);
  for (int j = 0; j < 100; ++j) {
    p(0, j) = u(rng);
    p(1, j) = u(rng);
  }
  std::vector<double> w(100, 1.0);
  const auto fit = fit_plane_pca(p, w, 2);
  Mat expected = Mat::Zero(3, 3);
  expected(0, 0) = expected(1, 1) = 1.0;
  CHECK((fit.plane.projector() - expected).norm() < 1e-12);
  CHECK(fit.residual == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fit_plane_pca: sphere cap near the pole approximates the tangent plane") {
  // unit sphere, points within chord radius 0.1 of the north pole
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec> keep;
  const Vec pole = Vec3(0, 0, 1);
  while (keep.size() < 400) {
    Vec3 v(u(rng), u(rng), u(rng));
    if (v.norm() < 1e-3 || v.norm() > 1) continue;
    v.normalize();
    if ((v - Vec3(0, 0, 1)).norm() <= 0.1) keep.push_back(v);
  }
  PointMatrix p(3, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) p.col(static_cast<Eigen::Index>(j)) = keep[j];
  std::vector<double> w(keep.size(), 1.0);
  const auto fit = fit_plane_pca(p, w, 2);
  // curvature * radius bound: normal tilt at chord 0.1 is at most ~0.1 rad,
  // the best fit averages it out
  CHECK(projector_distance(fit.plane, Plane::coordinate(3, 2)) < 0.02);
  (void)pole;
}

TEST_CASE("fit_plane_pca: rank deficiency and empty input") {
  PointMatrix p(3, 2);
  p << 0, 1, 0, 0, 0, 0;
  std::vector<double> w{1.0, 1.0};
  CHECK_THROWS_AS(fit_plane_pca(p, w, 2), Error);
  try {
    fit_plane_pca(p, w, 2);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateCloud);
  }
  std::vector<Eigen::Index> none;
  try {
    fit_plane_pca(p, none, w, 2);
    FAIL("expected EmptyInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyInput);
  }
}

TEST_CASE("fit_plane_pca residual beats random planes through the centroid") {
  std::mt19937_64 rng(3);
  auto pts = random_cloud(3, 80, rng);
  pts.row(2) *= 0.2;
  std::vector<double> w(80);
  std::uniform_real_distribution<double> uw(0.5, 2.0);
  for (auto& x : w) x = uw(rng);
  const auto fit = fit_plane_pca(pts, w, 2);
  const Mat best_normal = fit.plane.normal_projector();
  const double best = oracle::plane_sq_residual(pts, w, fit.centroid, best_normal);
  CHECK(best == doctest::Approx(fit.residual).epsilon(1e-9));
  std::normal_distribution<double> g;
  for (int t = 0; t < 1000; ++t) {
    Vec3 nrm(g(rng), g(rng), g(rng));
    nrm.normalize();
    const Mat np = nrm * nrm.transpose();
    CHECK(best <= oracle::plane_sq_residual(pts, w, fit.centroid, np) + 1e-12);
  }
}

TEST_CASE("fit_plane_pca pinned through a point") {
  PointMatrix p(3, 4);
  p << 1, -1, 0, 0,  //
      0, 0, 1, -1,   //
      1, 1, 1, 1;
  std::vector<double> w(4, 1.0);
  const Vec pin = Vec3(0, 0, 1);
  const auto fit = fit_plane_pca(p, w, 2, &pin);
  CHECK(fit.plane.basepoint().has_value());
  CHECK((*fit.plane.basepoint() - pin).norm() == 0.0);
  CHECK(fit.residual < 1e-12);
}

TEST_CASE("projector_distance closed forms") {
  const Plane e12 = Plane::coordinate(3, 2);
  CHECK(projector_distance(e12, e12) == 0.0);
  CHECK(projector_distance(e12, plane_at_angle(0.1)) ==
        doctest::Approx(std::sqrt(2.0) * std::sin(0.1)).epsilon(1e-12));
  CHECK(projector_distance(plane_at_angle(0.1), e12) == doctest::Approx(0.141186).epsilon(1e-5));
  const Plane a = Plane::coordinate(4, 2, 0);
  const Plane b = Plane::coordinate(4, 2, 2);
  CHECK(projector_distance(a, b) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(projector_distance(Plane::coordinate(3, 2), Plane::coordinate(4, 2)), Error);
}

TEST_CASE("projector_distance triangle inequality on random triples") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  auto random_plane = [&] {
    Mat s(4, 2);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 2; ++j) s(i, j) = g(rng);
    return Plane::from_basis(s);
  };
  for (int t = 0; t < 500; ++t) {
    const Plane p = random_plane(), q = random_plane(), r = random_plane();
    CHECK(projector_distance(p, r) <= projector_distance(p, q) + projector_distance(q, r) + 1e-10);
    CHECK(projector_distance(p, q) == doctest::Approx(projector_distance(q, p)).epsilon(1e-14));
  }
}

TEST_CASE("hausdorff_distance basics") {
  PointMatrix a(1, 1), b(1, 2);
  a << 0.0;
  b << 0.0, 1.0;
  CHECK(hausdorff_distance(a, a) == 0.0);
  CHECK(hausdorff_distance(a, b) == 1.0);
  CHECK(directed_hausdorff(a, b) == 0.0);
  CHECK(directed_hausdorff(b, a) == 1.0);
  PointMatrix empty(1, 0);
  CHECK_THROWS_AS(hausdorff_distance(a, empty), Error);
}

TEST_CASE("hausdorff_distance equals the brute-force oracle") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_cloud(3, 200, rng);
    const auto b = random_cloud(3, 150 + trial, rng);
    CHECK(hausdorff_distance(a, b) == oracle::hausdorff(a, b));
  }
  // zero iff equal as sets: permutation of the same set
  const auto a = random_cloud(3, 50, rng);
  PointMatrix perm = a.rowwise().reverse().eval();
  perm = a;
  std::swap_ranges(perm.col(0).data(), perm.col(0).data() + 3, perm.col(7).data());
  CHECK(hausdorff_distance(a, perm) == 0.0);
  PointMatrix moved = a;
  moved(0, 3) += 1e-6;
  CHECK(hausdorff_distance(a, moved) > 0.0);
}

TEST_CASE("kd-tree ball query matches linear scan") {
  std::mt19937_64 rng(9);
  const auto p = random_cloud(4, 300, rng);
  const KdTree tree(p, 5);
  std::uniform_real_distribution<double> u(-1.0, 1.0), ur(0.0, 1.2);
  for (int t = 0; t < 200; ++t) {
    Vec x(4);
    for (int k = 0; k < 4; ++k) x[k] = u(rng);
    const double r = ur(rng);
    CHECK(tree.ball_query(x, r) == oracle::ball_scan(p, x, r));
    const auto [idx, d] = tree.nearest(x);
    double best = 1e300;
    Eigen::Index arg = -1;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double dj = oracle::plain_distance(p.col(j), x);
      if (dj < best) {
        best = dj;
        arg = j;
      }
    }
    CHECK(idx == arg);
    CHECK(d == best);
    const auto k5 = tree.knn(x, 5);
    CHECK(k5.size() == 5);
    CHECK(k5.front() == arg);
  }
}

TEST_CASE("grassmann_project fixed point and idempotence") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g;
  for (int t = 0; t < 50; ++t) {
    Mat s(5, 3);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 3; ++j) s(i, j) = g(rng);
    const Plane p = Plane::from_basis(s);
    const auto once = grassmann_project(p.projector(), 3);
    CHECK((once.plane.projector() - p.projector()).norm() < 1e-10);
    const auto twice = grassmann_project(once.plane.projector(), 3);
    CHECK((twice.plane.projector() - once.plane.projector()).norm() < 1e-10);
    CHECK(twice.plane.satisfies_invariants(1e-10));
  }
}

TEST_CASE("grassmann_project is optimal against a dense plane grid") {
  const auto grid = oracle::plane_grid_r3(120);
  auto check_optimal = [&](const Mat& m) {
    const Mat sym = 0.5 * (m + m.transpose());
    const auto res = grassmann_project(m, 2);
    const double got = (res.plane.projector() - sym).norm();
    double best = 1e300;
    for (const auto& q : grid) best = std::min(best, (q - sym).norm());
    CHECK(got <= best + 1e-12);
    CHECK(got >= best - 1e-3);
  };
  Mat d = Mat::Zero(3, 3);
  d.diagonal() << 0.9, 0.8, 0.1;
  check_optimal(d);
  const auto res = grassmann_project(d, 2);
  Mat e12 = Mat::Zero(3, 3);
  e12(0, 0) = e12(1, 1) = 1;
  CHECK((res.plane.projector() - e12).norm() < 1e-12);
  CHECK_FALSE(res.eigengap_tie);

  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    Mat m(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = g(rng);
    check_optimal(m);
  }
}

TEST_CASE("grassmann_project bisects a convex combination of two projectors") {
  const Plane p1 = plane_at_angle(0.0);
  const Plane p2 = plane_at_angle(0.2);
  const Mat mix = 0.5 * p1.projector() + 0.5 * p2.projector();
  const auto res = grassmann_project(mix, 2);
  const double to_mix = (res.plane.projector() - mix).norm();
  CHECK(to_mix <= (p1.projector() - mix).norm() + 1e-12);
  CHECK(to_mix <= (p2.projector() - mix).norm() + 1e-12);
  // the bisecting plane sits at angle 0.1
  CHECK(projector_distance(res.plane, plane_at_angle(0.1)) < 1e-10);
}

TEST_CASE("grassmann_project flags eigengap ties") {
  Mat m = Mat::Identity(3, 3);
  const auto res = grassmann_project(m, 2);
  CHECK(res.eigengap_tie);
  CHECK(res.plane.satisfies_invariants(1e-10));
  CHECK_THROWS_AS(grassmann_project(Mat::Identity(3, 3), 3), Error);
}

TEST_CASE("sample estimates tangent planes when none supplied") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointMatrix p = PointMatrix::Zero(3, 400);
  for (int j = 0; j < 400; ++j) {
    p(0, j) = u(rng);
    p(1, j) = u(rng);
  }
  WeightedSurfaceSample s(p, std::vector<double>(400, 4.0 / 400), {});
  CHECK(s.mean_spacing() == doctest::Approx(0.1));
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    CHECK(projector_distance(s.tangent(i), Plane::coordinate(3, 2)) < 1e-9);
  }
  CHECK_THROWS_AS(WeightedSurfaceSample(p, std::vector<double>(400, -1.0), {}), Error);
}
