// Acceptance run: one PASS/FAIL line per criterion, key measurements inline.
// `acceptance -v` also lists every sub-check.

#include <chrono>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "varifold/conformal.hpp"
#include "varifold/curvature.hpp"
#include "varifold/error.hpp"
#include "varifold/multiscale.hpp"
#include "varifold/report.hpp"
#include "varifold/semmes.hpp"

using namespace varifold;
using cd = std::complex<double>;

namespace {

bool verbose = false;

struct Criterion {
  int id;
  std::string title;
  bool ok = true;
  std::vector<std::string> lines;
  std::vector<std::string> summary;

  void expect(bool cond, const std::string& what) {
    ok = ok && cond;
    lines.push_back(std::string(cond ? "ok   " : "FAIL ") + what);
  }
  void note(const std::string& what) { lines.push_back("     " + what); }
  void key(const std::string& what) { summary.push_back(what); }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string g(double v) { return fmt("%.4g", v); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

Vec nearest_point(const WeightedSurfaceSample& s, const Vec& x) { return s.point(s.nearest(x).first); }

// ---------------------------------------------------------------------------

void flat_certification(Criterion& c) {
  setenv("VARIFOLD_THREADS", "1", 1);
  const auto t0 = std::chrono::steady_clock::now();
  const auto flat = fixture::flat_disk(5000);
  const double floor = resolution_floor(flat, 8.0);
  const auto fam = ScaleFamily::dyadic(flat, Ball(Vec::Zero(3), 1.0), 0.5, floor);
  const auto rep = certify_chord_arc(flat, fam);
  const double secs = seconds_since(t0);
  unsetenv("VARIFOLD_THREADS");
  c.expect(fam.radii.front() == 0.5 && fam.radii.back() >= floor,
           "scales " + g(fam.radii.back()) + " .. " + g(fam.radii.front()) + " above floor " + g(floor));
  c.expect(rep.failed == 0 && !rep.balls.empty(), std::to_string(rep.balls.size()) + " balls, none refused");
  c.expect(rep.gamma <= 0.05, "gamma " + g(rep.gamma) + " <= 0.05");
  c.expect(secs <= 60.0, "single-threaded runtime " + fmt("%.2f", secs) + " s <= 60 s");
  c.key("gamma " + g(rep.gamma));
  c.key(fmt("%.1f s", secs));
}

void sphere_density(Criterion& c) {
  // the lattice quadrature error falls like (spacing / r)^2, so every radius
  // here spans at least 20 spacings
  const auto cap = fixture::cap(10.0, 2.0, 80000).sample;
  const double floor = resolution_floor(cap);
  double worst = 0.0;
  int balls = 0;
  for (double r : {0.25, 0.5, 1.0})
    for (int k = 0; k < 20; ++k) {
      const Eigen::Index i = (k * 37) % 8000;  // centers within ~0.6 of the pole
      worst = std::max(worst, std::abs(density_ratio(cap, Ball(cap.point(i), r), floor) - 1.0));
      ++balls;
    }
  c.expect(worst <= 0.01, "max |ratio - 1| " + g(worst) + " <= 0.01 over " + std::to_string(balls) + " balls");
  c.key("max |ratio-1| " + g(worst));
}

void mean_curvature(Criterion& c) {
  const auto cap = fixture::cap(10.0, 3.0, 20000).sample;
  double worst_s = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto est = estimate_mean_curvature(cap, cap.point(k * 97), 10 * cap.mean_spacing());
    worst_s = std::max(worst_s, std::abs(est.h.norm() / 0.2 - 1.0));
  }
  c.expect(worst_s <= 0.05, "sphere R=10: max | |H| R/2 - 1 | " + g(worst_s) + " <= 0.05");

  const auto cyl = fixture::cylinder(2.0, 2.0, 20000).sample;
  double worst_c = 0.0;
  int tested = 0;
  for (Eigen::Index i = 0; i < cyl.size(); i += 211) {
    if (std::abs(cyl.point(i)[0]) > 0.4) continue;  // away from the band ends
    const auto est = estimate_mean_curvature(cyl, cyl.point(i), 10 * cyl.mean_spacing());
    worst_c = std::max(worst_c, std::abs(est.h.norm() / 0.5 - 1.0));
    ++tested;
  }
  c.expect(tested > 10 && worst_c <= 0.05,
           "cylinder r=2: max | |H| r - 1 | " + g(worst_c) + " <= 0.05 at " + std::to_string(tested) + " points");

  const auto cap2 = fixture::cap(10.0, 2.0, 20000).sample;
  const auto f = estimate_curvature_field(cap2);
  const double w = willmore_energy(cap2, Ball(nearest_point(cap2, Vec::Zero(3)), 1.0), f.h);
  const double target = 0.04 * kPi;
  c.expect(rel(w, target) <= 0.05, "Willmore of the sigma=1 cap " + g(w) + " vs 0.04 pi = " + g(target));
  c.key("sphere " + g(worst_s));
  c.key("cylinder " + g(worst_c));
  c.key("Willmore err " + g(rel(w, target)));
}

void monotonicity(Criterion& c) {
  const auto cap = fixture::cap(10.0, 1.5, 20000).sample;
  const double floor = resolution_floor(cap);
  const Vec x = nearest_point(cap, Vec::Zero(3));
  const auto f = estimate_curvature_field(cap);
  const auto sphere = monotonicity_identity(cap, x, 0.3, 0.6, f.h, floor);
  c.expect(std::abs(sphere.residual) <= 0.02 * kPi,
           "sphere (0.3, 0.6): |LHS - RHS| " + g(std::abs(sphere.residual)) + " <= 0.02 pi");

  const auto flat = fixture::flat_disk(20000);
  const auto ff = estimate_curvature_field(flat);
  const auto fl = monotonicity_identity(flat, Vec::Zero(3), 0.3, 0.6, ff.h, resolution_floor(flat));
  c.expect(std::abs(fl.residual) <= 0.01 * kPi, "flat residual " + g(std::abs(fl.residual)) + " <= 0.01 pi");

  int violations = 0, cases = 0;
  for (double delta : {0.25, 0.5, 1.0})
    for (double sigma : {0.2, 0.25, 0.3})
      for (double rho : {0.4, 0.5, 0.6}) {
        violations += !monotonicity_inequality(cap, x, sigma, rho, delta, f.h, floor).holds;
        ++cases;
      }
  c.expect(violations == 0, "inequality: " + std::to_string(violations) + " violations on " + std::to_string(cases) +
                                " (delta, sigma, rho)");
  c.key("sphere " + g(std::abs(sphere.residual) / kPi) + " pi");
  c.key("flat " + g(std::abs(fl.residual) / kPi) + " pi");
  c.key(std::to_string(violations) + " violations");
}

// best weighted plane residual by normal search: grid then pattern search
double beta_oracle(const PointMatrix& p, const std::vector<double>& w, double scale, const std::vector<Mat>& grid) {
  const auto count = p.cols();
  auto residual = [&](const Eigen::Vector3d& nrm) {
    double ws = 0.0, mean = 0.0;
    for (Eigen::Index j = 0; j < count; ++j) {
      ws += w[static_cast<std::size_t>(j)];
      mean += w[static_cast<std::size_t>(j)] * nrm.dot(p.col(j).head<3>());
    }
    mean /= ws;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < count; ++j) {
      const double d = nrm.dot(p.col(j).head<3>()) - mean;
      acc += w[static_cast<std::size_t>(j)] * d * d;
    }
    return acc;
  };
  Eigen::Vector3d best_n(0, 0, 1);
  double best = 1e300;
  for (const auto& q : grid) {
    Eigen::SelfAdjointEigenSolver<Mat> es(Mat::Identity(3, 3) - q);
    const Eigen::Vector3d nrm = es.eigenvectors().col(2);
    if (const double v = residual(nrm); v < best) best = v, best_n = nrm;
  }
  for (double step = 0.02; step > 1e-9; step *= 0.5) {
    for (bool moved = true; moved;) {
      moved = false;
      for (int axis = 0; axis < 3; ++axis)
        for (double sg : {1.0, -1.0}) {
          Eigen::Vector3d cand = best_n;
          cand[axis] += sg * step;
          cand.normalize();
          if (const double v = residual(cand); v < best) best = v, best_n = cand, moved = true;
        }
    }
  }
  return best / std::pow(scale, 4);
}

void beta_machinery(Criterion& c) {
  const auto flat = fixture::flat_disk(5000);
  const auto prof = beta_profile(flat, Vec::Zero(3), 0.5, resolution_floor(flat));
  double worst = 0.0;
  for (double b : prof.beta_sq) worst = std::max(worst, b);
  c.expect(!prof.beta_sq.empty() && worst <= 1e-6,
           "flat beta^2 max " + g(worst) + " <= 1e-6 over " + std::to_string(prof.scales.size()) + " scales");

  double prev = 1e300;
  bool decreasing = true, bounded = true;
  std::string carleson;
  for (double r : {5.0, 10.0, 20.0}) {
    const auto cap = fixture::cap(r, 1.6, 41000).sample;
    const Vec xi = nearest_point(cap, Vec::Zero(3));
    const auto sum = carleson_sum(cap, xi, 0.5, resolution_floor(cap));
    const double bound = carleson_dperp_bound(cap, xi, 0.5);
    decreasing = decreasing && sum.value < prev;
    bounded = bounded && sum.value <= 2.0 * bound * 1.1;
    prev = sum.value;
    carleson += " R=" + g(r) + ": " + g(sum.value) + " (bound " + g(bound) + ")";
  }
  c.expect(decreasing, "Carleson sum at sigma 0.5 strictly decreasing in R:" + carleson);
  c.expect(bounded, "Carleson sum <= 2 x double-sum bound with 10% slack");

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0), uw(0.2, 1.0);
  const auto grid = oracle::plane_grid_r3(40);
  double worst_rel = 0.0;
  int instances = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const int count = 20 + (10 * trial) % 281;
    PointMatrix p(3, count);
    std::vector<double> w(static_cast<std::size_t>(count));
    const double thick = 0.05 + 0.02 * trial;
    for (int j = 0; j < count; ++j) {
      p(0, j) = u(rng);
      p(1, j) = u(rng);
      p(2, j) = thick * u(rng) + 0.3 * p(0, j) * p(1, j);
      w[static_cast<std::size_t>(j)] = uw(rng);
    }
    const WeightedSurfaceSample s(p, w, std::vector<Plane>(static_cast<std::size_t>(count), Plane::coordinate(3, 2)));
    const double b = jones_beta(s, Vec::Zero(3), 2.0);
    worst_rel = std::max(worst_rel, rel(b, beta_oracle(p, w, 2.0, grid)));
    ++instances;
  }
  c.expect(worst_rel <= 1e-3, "PCA beta^2 vs plane-grid oracle: max rel " + g(worst_rel) + " <= 1e-3 on " +
                                  std::to_string(instances) + " clouds of <= 300 points");
  c.key("flat " + g(worst));
  c.key("oracle rel " + g(worst_rel));
}

void grassmann_hausdorff(Criterion& c) {
  const auto grid = oracle::plane_grid_r3(120);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gn;
  double worst_gap = 0.0, worst_inv = 0.0;
  bool optimal = true;
  for (int t = 0; t < 20; ++t) {
    Mat m(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = gn(rng);
    const Mat sym = 0.5 * (m + m.transpose());
    const auto res = grassmann_project(m, 2);
    const double got = (res.plane.projector() - sym).norm();
    double best = 1e300;
    for (const auto& q : grid) best = std::min(best, (q - sym).norm());
    optimal = optimal && got <= best + 1e-12;
    worst_gap = std::max(worst_gap, best - got);
    const Mat& pr = res.plane.projector();
    worst_inv = std::max({worst_inv, (pr * pr - pr).norm(), (pr - pr.transpose()).norm(), std::abs(pr.trace() - 2.0)});
    const auto twice = grassmann_project(pr, 2);
    worst_inv = std::max(worst_inv, (twice.plane.projector() - pr).norm());
  }
  c.expect(optimal && worst_gap <= 1e-3,
           "grassmann_project beats the dense grid, by at most " + g(worst_gap) + " <= 1e-3");
  c.expect(worst_inv <= 1e-10, "idempotence, symmetry, trace and fixed point to " + g(worst_inv) + " <= 1e-10");

  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    PointMatrix a(3, 60 + trial), b(3, 40 + 2 * trial);
    for (Eigen::Index k = 0; k < a.size(); ++k) a.data()[k] = u(rng);
    for (Eigen::Index k = 0; k < b.size(); ++k) b.data()[k] = u(rng);
    exact += hausdorff_distance(a, b) == oracle::hausdorff(a, b);
  }
  c.expect(exact == 100, "hausdorff_distance equals the O(N^2) oracle on " + std::to_string(exact) + "/100 instances");
  c.key("grid gap " + g(worst_gap));
  c.key("hausdorff " + std::to_string(exact) + "/100");
}

double certified_gamma(const WeightedSurfaceSample& s) {
  return certify_chord_arc(s, ScaleFamily::dyadic(s, Ball(Vec::Zero(3), 1.0), 0.5, resolution_floor(s, 8.0))).gamma;
}

// ratios of consecutive values, stopping at round-off
std::vector<double> ratios(const std::vector<double>& v, double negligible) {
  std::vector<double> out;
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > negligible) out.push_back(v[j] / v[j - 1]);
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ", ") + g(x);
  return "[" + s + "]";
}

void semmes_pipeline(Criterion& c) {
  {
    const auto flat = fixture::flat_disk(5000);
    SemmesOptions o;
    o.gamma = certified_gamma(flat);
    o.domain = Ball(Vec::Zero(3), 1.0);
    const auto r = iterate_parameterization(flat, o);
    c.expect(r.composed.max_displacement == 0.0, "flat: tau moves nothing (max displacement " +
                                                     g(r.composed.max_displacement) + ")");
    c.expect(r.distortion.spread <= 1.02, "flat: spread " + g(r.distortion.spread) + " <= 1.02");
    c.key("flat spread " + g(r.distortion.spread));
  }

  // default pipeline (nu = sqrt gamma) at the default depth
  std::map<double, double> spread;
  for (double eps : {0.02, 0.05, 0.1}) {
    const auto s = fixture::saddle(eps, 5000);
    SemmesOptions o;
    o.gamma = certified_gamma(s);
    o.domain = Ball(Vec::Zero(3), 1.01);
    o.depth = 12;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = iterate_parameterization(s, o);
    const double secs = seconds_since(t0);
    spread[eps] = r.distortion.spread;
    c.expect(secs <= 300.0, "eps " + g(eps) + ": K = 12 run finished in " + fmt("%.1f", secs) + " s (exit step " +
                                std::to_string(r.exit_step) + ")");
    const auto dr = ratios(r.displacements, 1e-9 * s.mean_spacing());
    bool decay = true;
    for (std::size_t j = 1; j < dr.size(); ++j) decay = decay && dr[j] <= 0.5;
    c.expect(decay, "eps " + g(eps) + " default nu " + g(r.nu) + ": displacements " + join(r.displacements) +
                        (dr.empty() ? " (no resolved step: vacuous)" : ""));
    if (eps <= 0.05) {
      bool halves = true;
      std::vector<double> bw;
      for (std::size_t j = 0; j < r.stages.size(); ++j) {
        bw.push_back(r.stages[j].bad_weight);
        if (j > 0) halves = halves && r.stages[j].bad_weight <= 0.5 * r.stages[j - 1].bad_weight;
      }
      c.expect(halves, "eps " + g(eps) + " default nu: bad weight per stage " + join(bw) +
                           (bw.front() == 0.0 ? " (empty bad set: vacuous)" : ""));
    }
  }
  {
    // all twelve steps, no early exit
    const auto s = fixture::saddle(0.05, 5000);
    SemmesOptions o;
    o.gamma = certified_gamma(s);
    o.domain = Ball(Vec::Zero(3), 1.01);
    o.depth = 12;
    o.early_exit = false;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = iterate_parameterization(s, o);
    const double secs = seconds_since(t0);
    c.expect(r.exit_step == 12 && secs <= 300.0,
             "eps 0.05 full K = 12 run: " + std::to_string(r.exit_step) + " steps in " + fmt("%.1f", secs) + " s <= 300 s");
    c.key(fmt("K=12 in %.1f s", secs));
  }
  c.expect(spread[0.05] <= 1.3, "eps 0.05: spread " + g(spread[0.05]) + " <= 1.3");
  c.expect(spread[0.02] < spread[0.05] && spread[0.05] < spread[0.1],
           "spread ordered: " + g(spread[0.02]) + " < " + g(spread[0.05]) + " < " + g(spread[0.1]));
  c.key("spread(0.05) " + g(spread[0.05]));

  // stressed runs with a nonempty bad set: nu = 0.3 eps
  for (double eps : {0.02, 0.05}) {
    const auto s = fixture::saddle(eps, 5000);
    SemmesOptions o;
    o.nu = 0.3 * eps;
    o.domain = Ball(Vec::Zero(3), 1.01);
    o.early_exit = false;
    o.depth = 6;
    const auto r = iterate_parameterization(s, o);
    std::vector<double> bw;
    bool halves = true;
    for (std::size_t j = 0; j < r.stages.size(); ++j) {
      bw.push_back(r.stages[j].bad_weight);
      if (j > 0) halves = halves && r.stages[j].bad_weight <= 0.5 * r.stages[j - 1].bad_weight;
    }
    const auto dr = ratios(r.displacements, 1e-9 * s.mean_spacing());
    bool decay = dr.size() >= 1;
    for (std::size_t j = 1; j < dr.size(); ++j) decay = decay && dr[j] <= 0.5;
    c.expect(bw.front() > 0.0 && halves, "eps " + g(eps) + " nu " + g(o.nu) + ": bad weight " + join(bw));
    c.expect(decay, "eps " + g(eps) + " nu " + g(o.nu) + ": displacement ratios " + join(dr));
    if (eps == 0.05) c.key("stressed bad weight " + join(bw));
  }
  {
    // informational: the edge of the halving regime
    const auto s = fixture::saddle(0.02, 5000);
    SemmesOptions o;
    o.nu = 0.005;
    o.domain = Ball(Vec::Zero(3), 1.01);
    o.early_exit = false;
    o.depth = 6;
    const auto r = iterate_parameterization(s, o);
    std::vector<double> bw;
    for (const auto& st : r.stages) bw.push_back(st.bad_weight);
    c.note("info: eps 0.02 nu 0.005 bad weight " + join(bw) + " (first ratio " + g(bw[1] / bw[0]) + ")");
  }
}

// ---------------------------------------------------------------------------
// conformal

cd as_c(const Vec2& z) { return {z.x(), z.y()}; }

double pinned_error(const DiskParameterization& p, const std::vector<cd>& ref) {
  const std::array<cd, 3> x{std::polar(1.0, 0.0), std::polar(1.0, 2 * kPi / 3), std::polar(1.0, 4 * kPi / 3)};
  const auto m = Mobius::from_three(
      {ref[static_cast<std::size_t>(p.pins[0])], ref[static_cast<std::size_t>(p.pins[1])],
       ref[static_cast<std::size_t>(p.pins[2])]},
      x);
  double e = 0.0;
  for (std::size_t v = 0; v < ref.size(); ++v)
    e = std::max(e, std::abs(as_c(p.disk.col(static_cast<Eigen::Index>(v))) - m(ref[v])));
  return e;
}

// stereographic map of the unit disk onto the R-sphere cap cut at chord radius sigma
cd cap_preimage(const Vec& q, const Mat& basis, double R, double sigma) {
  const double k = 2 * R * std::tan(std::asin(sigma / (2 * R)));
  const Vec3 nu = (Vec3(q) - Vec3(0, 0, -R)).normalized();
  const double th = std::acos(std::clamp(nu.z(), -1.0, 1.0));
  const Vec2 dir = basis.transpose() * Vec3(nu.x(), nu.y(), 0.0);
  if (dir.norm() == 0.0) return 0.0;
  return as_c(dir.normalized()) * (2 * R * std::tan(th / 2) / k);
}

DiskParameterization checkerboard(double cell, double scale) {
  const int cells = static_cast<int>(std::lround(1.0 / cell));
  std::vector<Vec2> z;
  std::vector<Vec3> img;
  std::vector<Triangle> tris;
  for (int i = 0; i < cells; ++i)
    for (int j = 0; j < cells; ++j) {
      const Vec2 lo(-0.5 + i * cell, -0.5 + j * cell);
      const Vec2 mid = lo + Vec2(cell / 2, cell / 2);
      const double s = (i + j) % 2 ? scale : 1.0;
      const int base = static_cast<int>(z.size());
      for (int b = 0; b <= 2; ++b)
        for (int a = 0; a <= 2; ++a) {
          const Vec2 q = lo + Vec2(a, b) * (cell / 2);
          z.push_back(q);
          const Vec2 m = mid + s * (q - mid);
          img.emplace_back(m.x(), m.y(), 0.0);
        }
      for (int b = 0; b < 2; ++b)
        for (int a = 0; a < 2; ++a) {
          const int v = base + b * 3 + a;
          tris.push_back({v, v + 1, v + 4});
          tris.push_back({v, v + 4, v + 3});
        }
    }
  Eigen::Matrix2Xd zd(2, static_cast<Eigen::Index>(z.size()));
  PointMatrix im(3, static_cast<Eigen::Index>(z.size()));
  for (std::size_t v = 0; v < z.size(); ++v) {
    zd.col(static_cast<Eigen::Index>(v)) = z[v];
    im.col(static_cast<Eigen::Index>(v)) = img[v];
  }
  return make_parameterization(std::move(zd), std::move(im), std::move(tris));
}

void conformal_lab(Criterion& c) {
  {
    const auto flat = fixture::flat_disk(80000);
    const auto patch = extract_disk_patch(flat, nearest_point(flat, Vec::Zero(3)), 0.5);
    const auto p = harmonic_disk_param(patch);
    const Vec2 ctr = patch.plane.coordinates(patch.xi);
    std::vector<cd> ident;
    for (Eigen::Index v = 0; v < patch.vertex_count(); ++v)
      ident.push_back(as_c((Vec2(patch.planar.col(v)) - ctr) / patch.sigma));
    const double err = pinned_error(p, ident);
    const auto sm = summarize(p);
    c.expect(err <= 1e-2, "flat N=80000: distance to the pinned identity " + g(err) + " <= 1e-2");
    c.expect(sm.w_sup <= 0.02, "flat: w sup " + g(sm.w_sup) + " <= 0.02");
    c.expect(sm.a2 <= 1.05, "flat: A2 " + g(sm.a2) + " <= 1.05");
    c.expect(sm.inverse_holder_max <= 1.05, "flat: inverse Holder " + g(sm.inverse_holder_max) + " <= 1.05");
    c.expect(sm.bmo <= 0.05, "flat: BMO " + g(sm.bmo) + " <= 0.05");
    c.expect(sm.quasisymmetry_max <= 1.2, "flat: H_f " + g(sm.quasisymmetry_max) + " <= 1.2");
    c.key("flat err " + g(err));
  }

  std::map<int, std::pair<DiskPatch, DiskParameterization>> caps;
  std::map<int, WeightedSurfaceSample> samples;
  for (int n : {20000, 80000}) {
    samples[n] = fixture::cap(10.0, 1.5, n).sample;
    auto patch = extract_disk_patch(samples[n], nearest_point(samples[n], Vec::Zero(3)), 1.0);
    auto param = harmonic_disk_param(patch);
    caps.emplace(n, std::make_pair(std::move(patch), std::move(param)));
  }
  {
    const auto& [patch, p] = caps.at(20000);
    std::vector<cd> ref;
    const Mat B = patch.plane.basis();
    for (Eigen::Index v = 0; v < patch.vertex_count(); ++v) ref.push_back(cap_preimage(patch.points.col(v), B, 10.0, 1.0));
    const double err = pinned_error(p, ref);
    c.expect(err <= 3e-2, "cap R=10: distance to the stereographic map " + g(err) + " <= 3e-2");
    const double gap = rel(p.energy, 2 * p.conformal_area);
    c.expect(gap <= 0.02, "cap: E vs 2 int |det grad f| rel " + g(gap) + " <= 0.02");
    c.key("cap err " + g(err));
  }
  std::map<int, double> mc;
  for (auto& [n, pp] : caps) {
    const auto h = vertex_curvature(pp.second, *samples[n].reference_curvature());
    mc[n] = curvature_equation_residuals(pp.second, h).mc_relative;
  }
  c.expect(mc[20000] <= 0.15 && mc[80000] <= 0.15,
           "mc residual relative " + g(mc[20000]) + " (N=20000), " + g(mc[80000]) + " (N=80000) <= 0.15");
  c.expect(mc[80000] <= 0.5 * mc[20000], "mc residual halves under refinement: ratio " + g(mc[80000] / mc[20000]));
  c.key("mc " + g(mc[20000]) + " -> " + g(mc[80000]));

  const auto cb = checkerboard(1.0 / 16, 2.0);
  const double a2 = a2_constant(cb, cb.w);
  const double bmo = bmo_norm(cb, cb.w);
  double ih = 0.0;
  for (const auto& q : dyadic_squares(cb, 8)) ih = std::max(ih, inverse_holder_check(cb, q));
  c.expect(std::abs(a2 - 1.5625) <= 1e-9, "two-value field: A2 " + fmt("%.10g", a2) + " = 1.5625");
  c.expect(std::abs(ih - 2.5 / 2.25) <= 1e-9, "two-value field: inverse Holder " + fmt("%.10g", ih) + " = 1.1111");
  c.expect(std::abs(bmo - 0.5 * std::log(2.0)) <= 1e-9, "two-value field: BMO " + fmt("%.10g", bmo) + " = 0.3466");
}

// ---------------------------------------------------------------------------

void no_hole(Criterion& c) {
  const auto flat = fixture::flat_disk(5000);
  const auto f = projection_no_hole_check(flat, nearest_point(flat, Vec::Zero(3)), 0.5);
  c.expect(f.pass && f.gap_cells.empty(), "flat: pass with " + std::to_string(f.gap_cells.size()) + " gaps");
  const auto cap = fixture::cap(10.0, 1.0, 5000).sample;
  const auto k = projection_no_hole_check(cap, nearest_point(cap, Vec::Zero(3)), 0.5);
  c.expect(k.pass && k.gap_cells.empty(), "cap: pass with " + std::to_string(k.gap_cells.size()) + " gaps");

  SyntheticSpec spec;
  spec.kind = SurfaceKind::PunchedDisk;
  spec.n_points = 5000;
  const double h = std::sqrt(kPi / 5000);
  spec.hole_diameter = 5 * h;
  spec.hole_center = Vec2(0.25, 0.1);
  const auto punched = generate(spec).sample;
  const auto r = projection_no_hole_check(punched, nearest_point(punched, Vec::Zero(3)), 0.5);
  double far = 0.0;
  for (const auto& gp : r.gap_points) far = std::max(far, (gp.head<2>() - spec.hole_center).norm());
  c.expect(!r.pass && !r.gap_points.empty(), "punched: fails with " + std::to_string(r.gap_points.size()) + " gaps");
  c.expect(!r.gap_points.empty() && far <= 2.5 * h,
           "punched: gaps within " + g(far) + " of the hole center (hole radius " + g(2.5 * h) + ")");
  c.key(std::to_string(r.gap_points.size()) + " gaps at the hole");
}

void invariance(Criterion& c) {
  SyntheticSpec spec;
  spec.kind = SurfaceKind::PerturbedDisk;
  spec.n_points = 5000;
  spec.bump_center = Vec2(0.1, -0.05);
  const auto s = generate(spec).sample;
  std::mt19937_64 rng(5);
  const Mat rot = oracle::random_rotation(3, rng);
  const Vec shift = Vec3(0.3, -1.2, 2.0);
  const auto t = s.transformed(rot, shift);
  const double floor = resolution_floor(s);
  const Vec x = s.point(17), tx = t.point(17);
  const Ball b(x, 0.4), tb(tx, 0.4);
  const auto fl = reifenberg_flatness(s, b);
  const auto tfl = reifenberg_flatness(t, tb);
  const Plane moved = Plane::from_basis(rot * fl.plane.basis());
  const double rigid = std::max({rel(density_ratio(s, b, floor), density_ratio(t, tb, floor)),
                                 std::abs(fl.value - tfl.value),
                                 rel(tilt_excess(s, b, fl.plane), tilt_excess(t, tb, moved)),
                                 rel(jones_beta(s, x, 0.3), jones_beta(t, tx, 0.3)),
                                 rel(carleson_sum(s, x, 0.4, 0.1).value, carleson_sum(t, tx, 0.4, 0.1).value)});
  c.expect(rigid <= 1e-6, "rigid motion: density, flatness, tilt, beta, Carleson agree to " + g(rigid) + " <= 1e-6");

  const double lambda = 3.0;
  const auto d = s.transformed(Mat::Identity(3, 3), Vec::Zero(3), lambda);
  const Vec dx = d.point(17);
  const Plane ref = Plane::coordinate(3, 2);
  const double dil = std::max(
      {rel(jones_beta(s, x, 0.3), jones_beta(d, dx, 0.3 * lambda)),
       rel(tilt_excess(s, Ball(x, 0.3), ref), tilt_excess(d, Ball(dx, 0.9), ref)),
       rel(density_ratio(s, Ball(x, 0.3), floor), density_ratio(d, Ball(dx, 0.9), resolution_floor(d))),
       rel(reifenberg_flatness(s, Ball(x, 0.3)).value, reifenberg_flatness(d, Ball(dx, 0.9)).value),
       rel(carleson_sum(s, x, 0.4, 0.1).normalized, carleson_sum(d, dx, 1.2, 0.3).normalized)});
  c.expect(dil <= 1e-8, "dilation by 3: scale-free functionals agree to " + g(dil) + " <= 1e-8");

  const auto sad = fixture::saddle(0.05, 5000);
  RunConfig cfg;
  cfg.seed = 11;
  const auto r1 = run_command(sad, cfg);
  const auto r2 = run_command(sad, cfg);
  const bool same = without_timing(r1.report).dump() == without_timing(r2.report).dump();
  c.expect(same && r1.exit_code == 0, "pipeline report identical across runs (timing excluded), exit " +
                                          std::to_string(r1.exit_code));
  c.expect(all_finite(r1.report), "every report number finite");
  c.key("rigid " + g(rigid));
  c.key("dilation " + g(dil));
  c.key(same ? "reports identical" : "reports differ");
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i)
    if (!std::strcmp(argv[i], "-v") || !std::strcmp(argv[i], "--verbose")) verbose = true;

  const std::vector<std::pair<std::string, std::function<void(Criterion&)>>> all = {
      {"flat-disk certification", flat_certification},
      {"sphere density exactness", sphere_density},
      {"mean-curvature oracle", mean_curvature},
      {"monotonicity identity and inequality", monotonicity},
      {"beta-number machinery", beta_machinery},
      {"Grassmannian and Hausdorff oracles", grassmann_hausdorff},
      {"iterated parameterization", semmes_pipeline},
      {"conformal lab", conformal_lab},
      {"no-hole check", no_hole},
      {"global invariance and determinism", invariance},
  };

  int failed = 0;
  for (std::size_t k = 0; k < all.size(); ++k) {
    Criterion c{static_cast<int>(k + 1), all[k].first};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      all[k].second(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("threw: ") + e.what());
    }
    std::string keys;
    for (const auto& s : c.summary) keys += (keys.empty() ? "" : "; ") + s;
    std::printf("[%s] %2d %s (%s) %.1fs\n", c.ok ? "PASS" : "FAIL", c.id, c.title.c_str(), keys.c_str(),
                seconds_since(t0));
    if (verbose || !c.ok)
      for (const auto& l : c.lines) std::printf("       %s\n", l.c_str());
    std::fflush(stdout);
    failed += !c.ok;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}
