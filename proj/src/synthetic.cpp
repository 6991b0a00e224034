#include "varifold/synthetic.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "varifold/error.hpp"

namespace varifold {

namespace {

constexpr double kGoldenAngle = 2.399963229728653;  // pi (3 - sqrt 5)

struct HeightField {
  std::function<double(double, double)> g;
  // gradient (gx, gy) and Hessian (gxx, gxy, gyy)
  std::function<std::array<double, 5>(double, double)> derivs;
};

HeightField saddle(double eps) {
  return {[eps](double x, double y) { return 0.5 * eps * (x * x - y * y); },
          [eps](double x, double y) { return std::array<double, 5>{eps * x, -eps * y, eps, 0.0, -eps}; }};
}

HeightField zero_field() {
  return {[](double, double) { return 0.0; },
          [](double, double) { return std::array<double, 5>{0, 0, 0, 0, 0}; }};
}

HeightField gaussian_bump(double a, double w, Vec2 c) {
  return {[=](double x, double y) {
            const double dx = x - c.x(), dy = y - c.y();
            return a * std::exp(-(dx * dx + dy * dy) / (2 * w * w));
          },
          [=](double x, double y) {
            const double dx = x - c.x(), dy = y - c.y();
            const double g = a * std::exp(-(dx * dx + dy * dy) / (2 * w * w));
            const double w2 = w * w, w4 = w2 * w2;
            return std::array<double, 5>{-dx / w2 * g, -dy / w2 * g, (dx * dx / w4 - 1 / w2) * g,
                                         dx * dy / w4 * g, (dy * dy / w4 - 1 / w2) * g};
          }};
}

Vec embed(const Vec3& p, int n) {
  Vec out = Vec::Zero(n);
  out.head<3>() = p;
  return out;
}

Plane plane_from(const Vec3& a, const Vec3& b, int n) {
  Mat basis = Mat::Zero(n, 2);
  basis.col(0).head<3>() = a;
  basis.col(1).head<3>() = b;
  return Plane::from_basis(basis);
}

struct Builder {
  int n;
  std::vector<Vec3> pts;
  std::vector<Vec3> normals;
  std::vector<std::array<Vec3, 2>> frames;
  std::vector<double> weights;
  std::vector<Vec3> curvature;

  WeightedSurfaceSample finish(double noise, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    PointMatrix m(n, static_cast<Eigen::Index>(pts.size()));
    std::vector<Plane> planes;
    std::vector<Vec> h;
    planes.reserve(pts.size());
    h.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      Vec3 p = pts[i];
      if (noise > 0.0) p += noise * gauss(rng) * normals[i];
      m.col(static_cast<Eigen::Index>(i)) = embed(p, n);
      planes.push_back(plane_from(frames[i][0], frames[i][1], n));
      h.push_back(embed(curvature[i], n));
    }
    WeightedSurfaceSample s(std::move(m), std::move(weights), std::move(planes), 2);
    s.set_reference_curvature(std::move(h));
    return s;
  }
};

void add_graph_point(Builder& b, const HeightField& f, double x, double y, double cell_area) {
  const auto d = f.derivs(x, y);
  const double gx = d[0], gy = d[1], gxx = d[2], gxy = d[3], gyy = d[4];
  const double w2 = 1 + gx * gx + gy * gy;
  const double w = std::sqrt(w2);
  const Vec3 up = Vec3(-gx, -gy, 1.0) / w;
  const double mean = ((1 + gy * gy) * gxx - 2 * gx * gy * gxy + (1 + gx * gx) * gyy) / (w2 * w);
  b.pts.emplace_back(x, y, f.g(x, y));
  b.normals.push_back(up);
  b.frames.push_back({Vec3(1, 0, gx), Vec3(0, 1, gy)});
  b.weights.push_back(w * cell_area);
  b.curvature.push_back(mean * up);
}

// sunflower points in the disk of radius a; `keep` filters parameter points
SyntheticSurface graph_over_disk(const SyntheticSpec& spec, const HeightField& f,
                                 const std::function<bool(double, double)>& keep) {
  Builder b{spec.ambient_dim, {}, {}, {}, {}, {}};
  const double a = spec.extent;
  const double cell = kPi * a * a / spec.n_points;
  for (int k = 0; k < spec.n_points; ++k) {
    const double r = a * std::sqrt((k + 0.5) / spec.n_points);
    const double phi = k * kGoldenAngle;
    const double x = r * std::cos(phi), y = r * std::sin(phi);
    if (!keep(x, y)) continue;
    add_graph_point(b, f, x, y, cell);
  }
  if (b.pts.empty()) throw Error(ErrorCode::InvalidSpec, "no points survive the spec filters");
  SyntheticSurface out{b.finish(spec.noise, spec.seed), std::numeric_limits<double>::quiet_NaN()};
  return out;
}

}  // namespace

SurfaceKind parse_surface_kind(std::string_view name) {
  if (name == "flat_disk") return SurfaceKind::FlatDisk;
  if (name == "graph") return SurfaceKind::Graph;
  if (name == "sphere_cap") return SurfaceKind::SphereCap;
  if (name == "cylinder_band") return SurfaceKind::CylinderBand;
  if (name == "perturbed_disk") return SurfaceKind::PerturbedDisk;
  if (name == "punched_disk") return SurfaceKind::PunchedDisk;
  throw Error(ErrorCode::InvalidSpec, "unknown surface kind '" + std::string(name) + "'");
}

std::string_view to_string(SurfaceKind kind) {
  switch (kind) {
    case SurfaceKind::FlatDisk: return "flat_disk";
    case SurfaceKind::Graph: return "graph";
    case SurfaceKind::SphereCap: return "sphere_cap";
    case SurfaceKind::CylinderBand: return "cylinder_band";
    case SurfaceKind::PerturbedDisk: return "perturbed_disk";
    case SurfaceKind::PunchedDisk: return "punched_disk";
  }
  return "unknown";
}

double sphere_cap_area(double sphere_radius, double base_radius) {
  const double r = sphere_radius;
  return 2 * kPi * r * (r - std::sqrt(r * r - base_radius * base_radius));
}

SyntheticSurface generate(const SyntheticSpec& spec) {
  if (spec.n_points < 3) throw Error(ErrorCode::InvalidSpec, "need at least 3 points");
  if (spec.ambient_dim < 3) throw Error(ErrorCode::InvalidSpec, "synthetic surfaces live in R^n with n >= 3");
  if (!(spec.extent > 0)) throw Error(ErrorCode::InvalidSpec, "extent must be positive");
  if (spec.noise < 0) throw Error(ErrorCode::InvalidSpec, "noise must be nonnegative");

  const double a = spec.extent;
  switch (spec.kind) {
    case SurfaceKind::FlatDisk: {
      auto s = graph_over_disk(spec, zero_field(), [](double, double) { return true; });
      s.exact_area = kPi * a * a;
      return s;
    }
    case SurfaceKind::Graph: {
      auto s = graph_over_disk(spec, saddle(spec.eps), [](double, double) { return true; });
      return s;
    }
    case SurfaceKind::PerturbedDisk: {
      if (!(spec.bump_width > 0)) throw Error(ErrorCode::InvalidSpec, "bump width must be positive");
      return graph_over_disk(spec, gaussian_bump(spec.bump_height, spec.bump_width, spec.bump_center),
                             [](double, double) { return true; });
    }
    case SurfaceKind::PunchedDisk: {
      if (!(spec.hole_diameter > 0)) throw Error(ErrorCode::InvalidSpec, "hole diameter must be positive");
      const double hr = 0.5 * spec.hole_diameter;
      const Vec2 hc = spec.hole_center;
      auto s = graph_over_disk(spec, zero_field(), [&](double x, double y) {
        return (Vec2(x, y) - hc).norm() > hr;
      });
      s.exact_area = kPi * a * a - kPi * hr * hr;
      return s;
    }
    case SurfaceKind::SphereCap: {
      const double r = spec.radius;
      if (!(r > 0)) throw Error(ErrorCode::InvalidSpec, "sphere radius must be positive");
      if (!spec.full_sphere && a > r) throw Error(ErrorCode::InvalidSpec, "cap base radius exceeds sphere radius");
      const double cos_max = spec.full_sphere ? -1.0 : std::sqrt(r * r - a * a) / r;
      const double area = 2 * kPi * r * r * (1 - cos_max);
      const Vec3 center(0, 0, -r);
      Builder b{spec.ambient_dim, {}, {}, {}, {}, {}};
      for (int k = 0; k < spec.n_points; ++k) {
        const double t = (k + 0.5) / spec.n_points;
        const double ct = 1 - t * (1 - cos_max);
        const double st = std::sqrt(std::max(0.0, 1 - ct * ct));
        const double phi = k * kGoldenAngle;
        const Vec3 nu(st * std::cos(phi), st * std::sin(phi), ct);
        b.pts.push_back(center + r * nu);
        b.normals.push_back(nu);
        // any orthonormal pair orthogonal to nu
        const Vec3 e_phi(-std::sin(phi), std::cos(phi), 0.0);
        const Vec3 e_theta = e_phi.cross(nu);
        if (st > 1e-9) {
          b.frames.push_back({e_theta, e_phi});
        } else {
          b.frames.push_back({Vec3(1, 0, 0), Vec3(0, ct > 0 ? 1 : -1, 0)});
        }
        b.weights.push_back(area / spec.n_points);
        b.curvature.push_back(-(2.0 / r) * nu);
      }
      return {b.finish(spec.noise, spec.seed), area};
    }
    case SurfaceKind::CylinderBand: {
      const double r = spec.radius;
      const double len = spec.band_length;
      if (!(r > 0) || !(len > 0)) throw Error(ErrorCode::InvalidSpec, "cylinder radius and length must be positive");
      const double area = 2 * kPi * r * len;
      Builder b{spec.ambient_dim, {}, {}, {}, {}, {}};
      const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
      for (int k = 0; k < spec.n_points; ++k) {
        const double u = (k + 0.5) / spec.n_points;
        const double v = std::fmod(k * golden, 1.0);
        const double x = (u - 0.5) * len;
        const double phi = 2 * kPi * v;
        // axis through (., 0, r); phi = 0 touches the origin
        const Vec3 p(x, r * std::sin(phi), r - r * std::cos(phi));
        const Vec3 outward(0, std::sin(phi), -std::cos(phi));
        b.pts.push_back(p);
        b.normals.push_back(outward);
        b.frames.push_back({Vec3(1, 0, 0), Vec3(0, std::cos(phi), std::sin(phi))});
        b.weights.push_back(area / spec.n_points);
        b.curvature.push_back(-(1.0 / r) * outward);
      }
      return {b.finish(spec.noise, spec.seed), area};
    }
  }
  throw Error(ErrorCode::InvalidSpec, "unhandled kind");
}

}  // namespace varifold
