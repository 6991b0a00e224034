#pragma once

#include <cmath>

#include "varifold/synthetic.hpp"

namespace fixture {

using namespace varifold;

inline WeightedSurfaceSample flat_disk(int n = 5000, double extent = 1.0) {
  SyntheticSpec s;
  s.kind = SurfaceKind::FlatDisk;
  s.n_points = n;
  s.extent = extent;
  return generate(s).sample;
}

inline WeightedSurfaceSample saddle(double eps, int n = 5000, double extent = 1.0) {
  SyntheticSpec s;
  s.kind = SurfaceKind::Graph;
  s.eps = eps;
  s.n_points = n;
  s.extent = extent;
  return generate(s).sample;
}

inline SyntheticSurface cap(double radius, double base, int n, bool full = false) {
  SyntheticSpec s;
  s.kind = SurfaceKind::SphereCap;
  s.radius = radius;
  s.extent = base;
  s.n_points = n;
  s.full_sphere = full;
  return generate(s);
}

inline SyntheticSurface cylinder(double radius, double length, int n) {
  SyntheticSpec s;
  s.kind = SurfaceKind::CylinderBand;
  s.radius = radius;
  s.band_length = length;
  s.n_points = n;
  return generate(s);
}

inline Mat rotation_x(double a) {
  Mat r = Mat::Identity(3, 3);
  r(1, 1) = std::cos(a);
  r(1, 2) = -std::sin(a);
  r(2, 1) = std::sin(a);
  r(2, 2) = std::cos(a);
  return r;
}

/// Flat disk tilted by angle a about the x axis.
inline WeightedSurfaceSample tilted_disk(double a, int n = 5000) {
  return flat_disk(n).transformed(rotation_x(a), Vec::Zero(3));
}

/// Composite Simpson rule on [a, b] with an even number of panels.
template <typename F>
double simpson(F&& f, double a, double b, int panels = 2000) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace fixture
