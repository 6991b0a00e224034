#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "varifold/error.hpp"
#include "varifold/multiscale.hpp"
#include "varifold/semmes.hpp"

using namespace varifold;

namespace {

/// Unit-weight sample in R^3 with horizontal tangents.
WeightedSurfaceSample horizontal(const PointMatrix& pts) {
  std::vector<Plane> t(static_cast<std::size_t>(pts.cols()), Plane::coordinate(3, 2));
  return WeightedSurfaceSample(pts, std::vector<double>(static_cast<std::size_t>(pts.cols()), 1.0), t, 2);
}

DeltaField constant_delta(Eigen::Index n, double d) {
  DeltaField f;
  f.values.assign(static_cast<std::size_t>(n), d);
  return f;
}

Ball unit_ball() { return Ball(Vec::Zero(3), 1.0); }

// saddles rise slightly above the unit sphere at the rim
Ball saddle_ball() { return Ball(Vec::Zero(3), 1.01); }

// grid of (2k+1)^2 points with spacing h in the plane z = 0
PointMatrix grid(int k, double h) {
  PointMatrix p(3, (2 * k + 1) * (2 * k + 1));
  int c = 0;
  for (int a = -k; a <= k; ++a)
    for (int b = -k; b <= k; ++b) p.col(c++) = Vec3(a * h, b * h, 0.0);
  return p;
}

WeightedSurfaceSample bump_disk(double height, double width, int n) {
  SyntheticSpec s;
  s.kind = SurfaceKind::PerturbedDisk;
  s.bump_height = height;
  s.bump_width = width;
  s.n_points = n;
  return generate(s).sample;
}

// Weighted PCA projector from an explicit covariance.
Mat pca_projector(const WeightedSurfaceSample& s, const std::vector<Eigen::Index>& idx) {
  Vec c = Vec::Zero(3);
  double w = 0.0;
  for (auto i : idx) {
    c += s.weight(i) * s.point(i);
    w += s.weight(i);
  }
  c /= w;
  Mat cov = Mat::Zero(3, 3);
  for (auto i : idx) cov += s.weight(i) * (s.point(i) - c) * (s.point(i) - c).transpose();
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  const Mat b = es.eigenvectors().rightCols(2);
  return b * b.transpose();
}

double frob(const Mat& a) { return std::sqrt((a.array() * a.array()).sum()); }

// Brute force: sup over halving radii >= floor of the weighted mean tilt.
double brute_tilt(const WeightedSurfaceSample& s, const Vec& x, double r, const Mat& ref, double floor) {
  double best = 0.0;
  for (double q = r; q >= floor * (1.0 - 1e-12); q *= 0.5) {
    double num = 0.0, den = 0.0;
    for (auto i : oracle::ball_scan(s.points(), x, q)) {
      num += s.weight(i) * frob(s.tangent(i).projector() - ref);
      den += s.weight(i);
    }
    if (den > 0.0) best = std::max(best, num / den);
  }
  return best;
}

struct Prepared {
  DeltaField delta;
  FineSet fine;
  SeparatedNet net;
  SmoothedSurfaceStage stage;
};

Prepared prepare(const WeightedSurfaceSample& s, DeltaField delta, double nu, StageOptions opts = {}) {
  Prepared p;
  p.delta = std::move(delta);
  p.fine = extract_fine_set(s, p.delta, nu, resolution_floor(s, 8.0));
  p.net = build_separated_net(s, p.delta);
  p.stage = build_sigma_delta(s, p.fine, p.net, p.delta, nu, opts);
  normal_field(p.stage, p.net, p.fine, nu);
  return p;
}

double certified_gamma(const WeightedSurfaceSample& s) {
  const Ball dom(Vec::Zero(3), 1.0);
  const double floor = resolution_floor(s, 8.0);
  return certify_chord_arc(s, ScaleFamily::dyadic(s, dom, 0.5, floor)).gamma;
}

}  // namespace

// ---------------------------------------------------------------------------
// gauge

TEST_CASE("initial gauge is the scaled distance to the domain boundary") {
  PointMatrix p(3, 3);
  p.col(0) = Vec3(0, 0, 0);
  p.col(1) = Vec3(1, 0, 0);
  p.col(2) = Vec3(0, 0.5, 0);
  const auto d = make_delta0(horizontal(p), unit_ball());
  CHECK(d[0] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(d[1] == doctest::Approx(0.0));
  CHECK(d[2] == doctest::Approx(0.005).epsilon(1e-12));

  PointMatrix out(3, 1);
  out.col(0) = Vec3(1.5, 0, 0);
  CHECK_THROWS_AS(make_delta0(horizontal(out), unit_ball()), Error);
  try {
    make_delta0(horizontal(out), unit_ball());
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PointOutsideDomain);
  }
}

TEST_CASE("next gauge is min(d(x, F), boundary term) and 1-Lipschitz") {
  PointMatrix p(3, 2);
  p.col(0) = Vec3(0, 0, 0);
  p.col(1) = Vec3(0.1, 0, 0);
  const auto s = horizontal(p);
  FineSet f;
  f.members = {0};
  f.is_member = {1, 0};
  const auto d = next_delta(s, f, unit_ball());
  CHECK(d[0] == 0.0);
  CHECK(d[1] == doctest::Approx(0.009).epsilon(1e-12));
  CHECK(d.source == GaugeSource::FineSetDistance);

  FineSet empty;
  empty.is_member = {0, 0};
  try {
    next_delta(s, empty, unit_ball());
    FAIL("expected EmptyFineSet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyFineSet);
  }

  // a bumpy disk gives a nontrivial fine set; check every pair
  const auto bumpy = bump_disk(0.05, 0.1, 1500);
  const auto d0 = make_delta0(bumpy, unit_ball(), 4.0);
  const auto fine = extract_fine_set(bumpy, d0, 0.1, resolution_floor(bumpy, 4.0));
  REQUIRE(!fine.members.empty());
  REQUIRE(fine.members.size() < static_cast<std::size_t>(bumpy.size()));
  for (double divisor : {100.0, 4.0}) {
    const auto d1 = next_delta(bumpy, fine, unit_ball(), divisor);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < bumpy.size(); ++i) {
      CHECK(d1[static_cast<std::size_t>(i)] <= (1.0 - bumpy.point(i).norm()) / divisor + 1e-12);
      for (Eigen::Index j = i + 1; j < bumpy.size(); ++j) {
        const double q = std::abs(d1[static_cast<std::size_t>(i)] - d1[static_cast<std::size_t>(j)]) /
                         oracle::plain_distance(bumpy.point(i), bumpy.point(j));
        worst = std::max(worst, q);
      }
    }
    CHECK(worst <= 1.0 + 1e-9);
  }
}

// ---------------------------------------------------------------------------
// fine set

TEST_CASE("flat disk: every resolved point is fine") {
  const auto flat = fixture::flat_disk(3000);
  const auto d0 = make_delta0(flat, unit_ball(), 4.0);
  for (double nu : {1e-6, 0.01, 0.3}) {
    const auto f = extract_fine_set(flat, d0, nu, resolution_floor(flat, 8.0));
    CHECK(f.members.size() == static_cast<std::size_t>(flat.size()));
    CHECK(f.bad_weight == 0.0);
  }
  CHECK_THROWS_AS(extract_fine_set(flat, d0, 0.0, 0.1), Error);
}

TEST_CASE("bump: fine set drops the bump and matches a brute-force scan") {
  // max slope of h exp(-r^2 / 2w^2) is (h / w) e^{-1/2} = 0.3
  const double w = 0.1, h = 0.3 * w * std::exp(0.5);
  const auto s = bump_disk(h, w, 8000);
  const auto d0 = make_delta0(s, unit_ball(), 4.0);
  const double floor = resolution_floor(s, 4.0);
  const double nu = 0.1;
  const auto f = extract_fine_set(s, d0, nu, floor);

  // zero-gauge points are always members
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (d0[static_cast<std::size_t>(i)] == 0.0) CHECK(f.is_member[static_cast<std::size_t>(i)]);
  }
  // the bump's steep ring is excluded
  int ring = 0, ring_bad = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double r = s.point(i).head(2).norm();
    if (r > 0.05 && r < 0.15) {
      ++ring;
      ring_bad += !f.is_member[static_cast<std::size_t>(i)];
    }
  }
  REQUIRE(ring > 0);
  CHECK(ring_bad == ring);
  CHECK(f.bad_weight > 0.0);

  // membership against an independent scan on every 8th point
  int compared = 0, disagree = 0;
  for (Eigen::Index i = 0; i < s.size(); i += 8) {
    const double r = 2.0 * d0[static_cast<std::size_t>(i)];
    if (r < floor) continue;
    const auto idx = oracle::ball_scan(s.points(), s.point(i), r);
    const double t = brute_tilt(s, s.point(i), r, pca_projector(s, idx), floor);
    if (std::abs(t - nu) < 1e-6) continue;
    ++compared;
    CHECK(f.tilt[static_cast<std::size_t>(i)] == doctest::Approx(t).epsilon(1e-6));
    disagree += (t <= nu) != static_cast<bool>(f.is_member[static_cast<std::size_t>(i)]);
  }
  CHECK(compared > 200);
  CHECK(disagree == 0);

  // monotone in nu
  const auto tighter = extract_fine_set(s, d0, 0.05, floor);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (tighter.is_member[static_cast<std::size_t>(i)]) CHECK(f.is_member[static_cast<std::size_t>(i)]);
  }
  CHECK(tighter.members.size() < f.members.size());
}

// ---------------------------------------------------------------------------
// net

TEST_CASE("net: nearby points collapse once the packing radius exceeds their distance") {
  const double d = 1e-3;
  PointMatrix p(3, 2);
  p.col(0) = Vec3(0, 0, 0);
  p.col(1) = Vec3(d, 0, 0);
  const auto s = horizontal(p);
  // separation is (1/2) 1e-3 delta: two centers at delta = 1000 d, one beyond 2000 d
  CHECK(build_separated_net(s, constant_delta(2, 1000 * d)).centers.size() == 2);
  CHECK(build_separated_net(s, constant_delta(2, 2100 * d)).centers.size() == 1);

  try {
    build_separated_net(s, constant_delta(2, 0.0));
    FAIL("expected EmptySet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySet);
  }
}

TEST_CASE("net on a uniform grid: separated, covering, bounded groups") {
  const double h = 0.01;
  const auto s = horizontal(grid(20, h));
  const double delta = 3.0 * h / 1e-3;  // covering radius 3h, separation 1.5h
  const auto net = build_separated_net(s, constant_delta(s.size(), delta));
  const double sep = 0.5e-3 * delta, cover = 1e-3 * delta;

  for (std::size_t a = 0; a < net.centers.size(); ++a) {
    double nearest = 1e300;
    for (std::size_t b = 0; b < net.centers.size(); ++b) {
      if (a == b) continue;
      const double dist = oracle::plain_distance(net.points.col(a), net.points.col(b));
      CHECK(dist >= sep - 1e-12);
      nearest = std::min(nearest, dist);
    }
    CHECK(nearest <= cover + 1e-12);
  }
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    double best = 1e300;
    for (std::size_t b = 0; b < net.centers.size(); ++b) {
      best = std::min(best, oracle::plain_distance(s.point(i), net.points.col(b)));
    }
    CHECK(best <= cover + 1e-12);
  }
  // group members are delta / 10 apart
  for (std::size_t a = 0; a < net.centers.size(); ++a)
    for (std::size_t b = a + 1; b < net.centers.size(); ++b)
      if (net.group[a] == net.group[b]) {
        CHECK(oracle::plain_distance(net.points.col(a), net.points.col(b)) >= delta / 10.0 - 1e-12);
      }
  // delta / 10 exceeds the grid, so every center needs its own group
  CHECK(net.groups == static_cast<int>(net.centers.size()));
  CHECK(net.group_bound_holds);
}

TEST_CASE("net group counts stay small on synthetic surfaces") {
  for (double eps : {0.0, 0.05}) {
    const auto s = fixture::saddle(eps, 5000);
    for (double divisor : {100.0, 4.0}) {
      const auto net = build_separated_net(s, make_delta0(s, saddle_ball(), divisor));
      CHECK(net.groups <= 200);
      CHECK(!net.centers.empty());
    }
  }
}

// ---------------------------------------------------------------------------
// partition of unity

TEST_CASE("partition of unity sums to one with bounded gradient") {
  const auto s = fixture::flat_disk(2000);
  const auto net = build_separated_net(s, make_delta0(s, unit_ball(), 4.0));
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> pick(0, net.centers.size() - 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst_sum = 0.0, worst_grad = 0.0;
  for (int q = 0; q < 1000; ++q) {
    const std::size_t j = pick(rng);
    const double dj = net.delta[j];
    if (dj < 1e-3) continue;
    const Vec dir = Vec3(u(rng), u(rng), 0.0).normalized();
    const Vec x = net.points.col(static_cast<Eigen::Index>(j)) + 0.1 * dj * std::abs(u(rng)) * dir;
    const auto theta = partition_of_unity(net, x);
    double sum = 0.0;
    for (const auto& [k, t] : theta) sum += t;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));

    // central differences of each theta_k along a random direction
    const double e = 1e-6 * dj;
    const Vec v = Vec3(u(rng), u(rng), 0.0).normalized();
    const auto plus = partition_of_unity(net, x + e * v), minus = partition_of_unity(net, x - e * v);
    auto value = [](const auto& list, std::size_t k) {
      for (const auto& [i, t] : list)
        if (i == k) return t;
      return 0.0;
    };
    for (const auto& [k, t] : theta) {
      const double g = std::abs(value(plus, k) - value(minus, k)) / (2.0 * e);
      worst_grad = std::max(worst_grad, g * dj);
    }
  }
  CHECK(worst_sum < 1e-12);
  CHECK(worst_grad <= 20.0);

  // isolated center: theta = 1
  PointMatrix one(3, 1);
  one.col(0) = Vec3(0, 0, 0);
  const auto lone = build_separated_net(horizontal(one), constant_delta(1, 1.0));
  const auto t = partition_of_unity(lone, Vec3(0.1, 0, 0));
  REQUIRE(t.size() == 1);
  CHECK(t[0].second == doctest::Approx(1.0));
  try {
    partition_of_unity(lone, Vec3(2, 0, 0));
    FAIL("expected UncoveredQuery");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UncoveredQuery);
  }
  try {
    partition_of_unity(SeparatedNet{}, Vec3(0, 0, 0));
    FAIL("expected UncoveredQuery");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UncoveredQuery);
  }
}

// ---------------------------------------------------------------------------
// smoothed stage

TEST_CASE("flat stage reproduces the sample") {
  const auto s = fixture::flat_disk(3000);
  const auto p = prepare(s, make_delta0(s, unit_ball(), 4.0), 0.1);
  CHECK(p.stage.synthesized_count == 0);
  REQUIRE(p.stage.size() == s.size());
  CHECK((p.stage.points - s.points()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.stage.graph_lipschitz < 1e-12);
  CHECK(p.stage.graph_balls > 0);
}

TEST_CASE("stage fills a punched hole with points on the plane") {
  SyntheticSpec spec;
  spec.kind = SurfaceKind::PunchedDisk;
  spec.n_points = 2000;
  spec.hole_diameter = 0.3;
  const auto s = generate(spec).sample;
  const double delta = 100.0;  // lattice radius 2e-3 delta covers the hole
  // clipped near the rim so no patch reaches past the disk edge
  auto clipped = [&](const WeightedSurfaceSample& x) {
    DeltaField d;
    for (Eigen::Index i = 0; i < x.size(); ++i) d.values.push_back(std::min(delta, (1.0 - x.point(i).norm()) / 2e-3));
    return d;
  };
  const auto p = prepare(s, clipped(s), 0.1);
  CHECK(p.stage.synthesized_count > 0);
  double off_plane = 0.0;
  for (Eigen::Index i = 0; i < p.stage.size(); ++i) {
    if (p.stage.synthesized[static_cast<std::size_t>(i)]) off_plane = std::max(off_plane, std::abs(p.stage.points(2, i)));
  }
  CHECK(off_plane <= 1e-3 * delta);
  CHECK(off_plane < 1e-9);
  // every lattice site inside the hole is near a stage point
  const double step = p.stage.step;
  double worst = 0.0;
  for (double x = -0.14; x <= 0.14; x += 0.01)
    for (double y = -0.14; y <= 0.14; y += 0.01) {
      if (std::hypot(x, y) > 0.14) continue;
      worst = std::max(worst, p.stage.index->nearest(Vec3(x, y, 0)).second);
    }
  CHECK(worst <= 2.0 * step);

  // rerunning on the stage adds next to nothing, and only next to old points
  const auto again = p.stage.as_sample();
  const auto q = prepare(again, clipped(again), 0.1);
  CHECK(q.stage.synthesized_count <= again.size() / 100);
  CHECK(q.stage.synthesis_distance <= 1.5 * step);
}

TEST_CASE("stage on a saddle passes the graph test and is idempotent") {
  const auto s = fixture::saddle(0.05, 5000);
  const double nu = std::sqrt(certified_gamma(s));
  const auto p = prepare(s, make_delta0(s, saddle_ball(), 4.0), nu);
  CHECK(p.stage.graph_lipschitz <= 0.5);
  CHECK(p.stage.graph_lipschitz <= 10.0 * nu);
  CHECK(p.stage.normal_constant <= 50.0);

  // stressed threshold: the synthesized patches replace the bad points
  const double tight = 0.005;
  StageOptions opts;
  const auto g = fixture::saddle(0.02, 5000);
  const auto pt = prepare(g, make_delta0(g, saddle_ball(), 4.0), tight, opts);
  CHECK(pt.fine.bad_weight > 0.0);
  CHECK(pt.stage.synthesized_count > 0);
  CHECK(pt.stage.graph_lipschitz <= 10.0 * tight);
  CHECK(pt.stage.normal_constant <= 50.0);
  // synthesized points sit on the surface z = eps (x^2 - y^2) / 2
  double off = 0.0;
  for (Eigen::Index i = 0; i < pt.stage.size(); ++i) {
    const Vec x = pt.stage.points.col(i);
    off = std::max(off, std::abs(x[2] - 0.01 * (x[0] * x[0] - x[1] * x[1])));
  }
  CHECK(off <= 10.0 * tight * pt.delta.max());

  // rerun on the stage with its own gauge: new points only refill what the
  // rerun dropped
  const auto again = pt.stage.as_sample();
  DeltaField d;
  d.values = pt.stage.delta;
  const auto q = prepare(again, d, tight, opts);
  CHECK(q.stage.synthesis_distance <= 1.5 * pt.stage.step);
  double gap = 0.0;
  for (Eigen::Index i = 0; i < again.size(); ++i) gap = std::max(gap, q.stage.index->nearest(again.point(i)).second);
  CHECK(gap <= 1.5 * pt.stage.step);
}

// ---------------------------------------------------------------------------
// normal field

TEST_CASE("normal field: constant planes give a constant field") {
  const auto s = fixture::tilted_disk(0.3, 2000);
  const auto p = prepare(s, make_delta0(s, unit_ball(), 4.0), 0.1);
  const Mat want = Mat::Identity(3, 3) - s.tangent(0).projector();
  double worst = 0.0;
  for (const auto& n : p.stage.normal) worst = std::max(worst, frob(n - want));
  CHECK(worst < 1e-9);
  CHECK(p.stage.normal_lipschitz < 1e-6);
}

TEST_CASE("normal field blends two planes toward the bisector") {
  PointMatrix pts(3, 2);
  pts.col(0) = Vec3(-0.001, 0, 0);
  pts.col(1) = Vec3(0.001, 0, 0);
  const auto s = horizontal(pts);
  const auto delta = constant_delta(2, 1.0);
  const auto net = build_separated_net(s, delta);
  REQUIRE(net.centers.size() == 2);
  const double a = 0.1;
  FineSet f;
  f.is_member = {1, 1};
  f.members = {0, 1};
  f.nu = 0.1;
  Mat tilted(3, 2);
  tilted << 1, 0, 0, std::cos(a), 0, std::sin(a);
  f.planes = {Plane::coordinate(3, 2).with_basepoint(pts.col(0)), Plane::from_basis(tilted, Vec(pts.col(1)))};
  const Mat n0 = Mat::Identity(3, 3) - f.planes[0].projector();
  const Mat n1 = Mat::Identity(3, 3) - f.planes[1].projector();

  const Mat mid = blended_normal(net, f, Vec3(0, 0, 0), 2);
  const double bound = std::sqrt(2.0) * std::sin(a / 2) + 1e-3;
  CHECK(frob(mid - n0) <= bound);
  CHECK(frob(mid - n1) <= bound);

  // nearest rank-one projector to the average by grid search over unit vectors
  const Mat avg = 0.5 * (n0 + n1);
  double best = 1e300;
  for (const Mat& p : oracle::plane_grid_r3(400)) best = std::min(best, frob(Mat::Identity(3, 3) - p - avg));
  CHECK(frob(mid - avg) <= best + 1e-3);
}

// ---------------------------------------------------------------------------
// correspondence

TEST_CASE("tau is the identity on stage points and a normal foot point off them") {
  const auto s = fixture::flat_disk(3000);
  const auto p = prepare(s, make_delta0(s, unit_ball(), 4.0), 0.1);
  const std::vector<double> gauge(static_cast<std::size_t>(s.size()), 0.0);
  const auto id = project_tau(s.points(), gauge, p.stage, 0.3, 0.0);
  CHECK(id.max_displacement == 0.0);
  CHECK((id.image - s.points()).cwiseAbs().maxCoeff() == 0.0);

  PointMatrix lifted = s.points().leftCols(200);
  lifted.row(2).array() += 0.001;
  const std::vector<double> g2(200, 0.01);
  const auto up = project_tau(lifted, g2, p.stage, 0.3, 0.0);
  for (Eigen::Index i = 0; i < lifted.cols(); ++i) {
    CHECK(up.offset.col(i).norm() == doctest::Approx(0.001).epsilon(1e-6));
    CHECK(std::abs(up.image(2, i)) < 1e-9);
    CHECK((up.image.col(i) + up.offset.col(i) - lifted.col(i)).norm() <= 1e-9);
  }

  // too far for the admissible bound
  PointMatrix far = s.points().leftCols(1);
  far(2, 0) += 0.5;
  try {
    project_tau(far, std::vector<double>{0.0}, p.stage, 0.3, 0.0);
    FAIL("expected NoValidPreimage");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoValidPreimage);
  }
}

// ---------------------------------------------------------------------------
// distortion

TEST_CASE("distortion of the identity and of a dilation") {
  const auto s = fixture::flat_disk(800);
  const auto w = s.weights();
  const auto id = distortion_report(s.points(), s.points(), w);
  CHECK(id.all_pairs);
  CHECK(id.max_upper == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(id.min_lower == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(id.spread == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(id.lp_id == 0.0);
  CHECK(id.holder_exponent == doctest::Approx(1.0).epsilon(1e-9));

  const PointMatrix twice = 2.0 * s.points();
  const auto dil = distortion_report(s.points(), twice, w);
  CHECK(dil.max_upper == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(dil.min_lower == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(dil.spread == doctest::Approx(1.0).epsilon(1e-12));
  double total = 0.0;
  for (double x : w) total += x;
  CHECK(dil.lp_upper == doctest::Approx(4.0 * total).epsilon(1e-9));
}

TEST_CASE("subsampled distortion agrees with the all-pairs oracle") {
  const auto s = fixture::flat_disk(500);
  PointMatrix img(3, s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const Vec x = s.point(i);
    // a smooth map with varying local stretch
    img.col(i) = Vec3(x[0] + 0.2 * x[0] * x[0], x[1] + 0.1 * x[0] * x[1], 0.3 * x[0] * x[0]);
  }
  const auto w = s.weights();
  // oracle
  std::vector<double> up(500, 0.0), lo(500, 1e300);
  for (Eigen::Index i = 0; i < s.size(); ++i)
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      if (i == j) continue;
      const double q = oracle::plain_distance(img.col(i), img.col(j)) / oracle::plain_distance(s.point(i), s.point(j));
      up[static_cast<std::size_t>(i)] = std::max(up[static_cast<std::size_t>(i)], q);
      lo[static_cast<std::size_t>(i)] = std::min(lo[static_cast<std::size_t>(i)], q);
    }
  double lp_up = 0.0, lp_lo = 0.0;
  for (std::size_t i = 0; i < 500; ++i) {
    lp_up += w[i] * up[i] * up[i];
    lp_lo += w[i] / (lo[i] * lo[i]);
  }
  const double spread = *std::max_element(up.begin(), up.end()) / *std::min_element(lo.begin(), lo.end());

  const auto full = distortion_report(s.points(), img, w);
  CHECK(full.all_pairs);
  CHECK(full.lp_upper == doctest::Approx(lp_up).epsilon(1e-12));
  CHECK(full.lp_lower == doctest::Approx(lp_lo).epsilon(1e-12));

  DistortionOptions sub;
  sub.all_pairs_limit = 100;
  const auto est = distortion_report(s.points(), img, w, sub);
  CHECK(!est.all_pairs);
  CHECK(est.lp_upper == doctest::Approx(lp_up).epsilon(0.05));
  CHECK(est.lp_lower == doctest::Approx(lp_lo).epsilon(0.05));
  CHECK(est.spread == doctest::Approx(spread).epsilon(0.05));
}

// ---------------------------------------------------------------------------
// iteration

TEST_CASE("pipeline on a flat disk is the identity after one step") {
  const auto s = fixture::flat_disk(5000);
  SemmesOptions o;
  o.gamma = certified_gamma(s);
  o.domain = unit_ball();
  const auto r = iterate_parameterization(s, o);
  CHECK(r.exit_step == 1);
  CHECK(r.composed.max_displacement == 0.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < r.distortion.upper.size(); ++i) {
    worst = std::max({worst, std::abs(r.distortion.upper[i] - 1.0), std::abs(r.distortion.lower[i] - 1.0)});
  }
  CHECK(worst <= 0.01);
  CHECK(r.distortion.spread <= 1.02);
}

TEST_CASE("pipeline spread grows with the saddle amplitude") {
  double last = 0.0;
  for (double eps : {0.0, 0.02, 0.05, 0.1}) {
    const auto s = fixture::saddle(eps, 5000);
    SemmesOptions o;
    o.gamma = certified_gamma(s);
    o.domain = saddle_ball();
    const auto r = iterate_parameterization(s, o);
    CHECK(r.distortion.spread <= 1.3);
    for (double c : r.step_constants) CHECK(c <= 10.0);
    if (eps > 0.0) CHECK(r.distortion.spread > last);
    last = r.distortion.spread;
  }
}

TEST_CASE("pipeline with a tight threshold contracts geometrically") {
  const auto s = fixture::saddle(0.02, 5000);
  SemmesOptions o;
  o.nu = 0.005;
  o.domain = saddle_ball();
  o.early_exit = false;
  o.depth = 6;
  const auto r = iterate_parameterization(s, o);
  REQUIRE(r.displacements.size() >= 3);
  CHECK(r.displacements[0] > 0.0);
  for (std::size_t j = 2; j < r.displacements.size(); ++j) {
    CHECK(r.displacements[j] <= 0.5 * r.displacements[j - 1] + 1e-12);
  }
  for (const auto& st : r.stages) CHECK(st.graph_lipschitz <= 10.0 * o.nu);
  CHECK(r.stages.back().bad_weight < r.stages.front().bad_weight);
  for (double c : r.step_constants) CHECK(c <= 10.0);

  // composition bookkeeping
  REQUIRE(r.steps.size() == r.displacements.size());
  CHECK((r.steps.front().source - r.stage0.points).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t j = 1; j < r.steps.size(); ++j) {
    CHECK((r.steps[j].source - r.steps[j - 1].image).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK((r.composed.image - r.steps.back().image).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t i = 0; i < r.chains.size(); ++i) {
    REQUIRE(r.chains[i].size() == r.steps.size());
    for (std::size_t j = 0; j < r.steps.size(); ++j) CHECK(r.chains[i][j] == r.steps[j].target[i]);
  }
  double total = 0.0;
  for (double d : r.displacements) total += d;
  CHECK(r.composed.max_displacement <= total + 1e-12);
}

TEST_CASE("bad weight halves per stage once nu is three tenths of the slope") {
  for (double eps : {0.02, 0.05}) {
    const auto s = fixture::saddle(eps, 5000);
    SemmesOptions o;
    o.nu = 0.3 * eps;
    o.domain = saddle_ball();
    o.early_exit = false;
    o.depth = 6;
    const auto r = iterate_parameterization(s, o);
    CHECK(r.stages.front().bad_weight > 0.1);
    for (std::size_t j = 1; j < r.stages.size(); ++j)
      CHECK(r.stages[j].bad_weight <= 0.5 * r.stages[j - 1].bad_weight);
    // ratios are taken until the displacement reaches round-off
    for (std::size_t j = 1; j < r.displacements.size(); ++j)
      if (r.displacements[j] > 1e-9 * s.mean_spacing()) CHECK(r.displacements[j] <= 0.5 * r.displacements[j - 1]);
  }
}

TEST_CASE("pipeline is equivariant under rigid motions") {
  const auto s = fixture::saddle(0.02, 3000);
  std::mt19937_64 rng(3);
  const Mat rot = oracle::random_rotation(3, rng);
  const Vec shift = Vec3(0.3, -1.0, 2.0);
  const auto moved = s.transformed(rot, shift);

  SemmesOptions o;
  o.nu = 0.005;
  o.early_exit = false;
  o.depth = 3;
  o.domain = saddle_ball();
  const auto a = iterate_parameterization(s, o);
  o.domain = Ball(shift, 1.01);
  const auto b = iterate_parameterization(moved, o);

  REQUIRE(a.stage0.size() == b.stage0.size());
  REQUIRE(a.composed.image.cols() == b.composed.image.cols());
  // match points by position (ties in the gauge can reorder synthesized points)
  const KdTree tree(b.stage0.points);
  double worst_src = 0.0, worst_img = 0.0;
  for (Eigen::Index i = 0; i < a.stage0.size(); ++i) {
    const Vec x = rot * a.stage0.points.col(i) + shift;
    const auto [j, d] = tree.nearest(x);
    worst_src = std::max(worst_src, d);
    worst_img = std::max(worst_img, (rot * a.composed.image.col(i) + shift - b.composed.image.col(j)).norm());
  }
  CHECK(worst_src <= 1e-6);
  CHECK(worst_img <= 1e-6);
  CHECK(a.distortion.spread == doctest::Approx(b.distortion.spread).epsilon(1e-6));
}

TEST_CASE("pipeline input errors") {
  const auto s = fixture::flat_disk(500);
  SemmesOptions o;
  try {
    iterate_parameterization(s, o);
    FAIL("expected InvalidSpec");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidSpec);
  }
  o.nu = 0.1;
  o.domain = Ball(Vec::Zero(3), 0.5);
  try {
    iterate_parameterization(s, o);
    FAIL("expected PointOutsideDomain");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PointOutsideDomain);
  }
}
