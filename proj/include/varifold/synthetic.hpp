#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "varifold/sample.hpp"

namespace varifold {

enum class SurfaceKind { FlatDisk, Graph, SphereCap, CylinderBand, PerturbedDisk, PunchedDisk };

SurfaceKind parse_surface_kind(std::string_view name);
std::string_view to_string(SurfaceKind kind);

/// Parameters of a synthetic test surface. Every kind is sampled
/// quasi-uniformly (sunflower / Fibonacci lattices) with per-point weight
/// equal to the exact area element times the parameter cell area.
struct SyntheticSpec {
  SurfaceKind kind = SurfaceKind::FlatDisk;
  int n_points = 5000;
  int ambient_dim = 3;

  double extent = 1.0;      ///< disk radius (flat, graph, perturbed, punched); base radius of a cap
  double eps = 0.05;        ///< graph: g = eps (x1^2 - x2^2) / 2, gradient bound eps * extent
  double radius = 10.0;     ///< sphere radius R or cylinder radius r
  bool full_sphere = false; ///< sphere_cap: sample the whole sphere
  double band_length = 2.0; ///< cylinder_band axial length

  double bump_height = 0.05;  ///< perturbed_disk: Gaussian bump amplitude
  double bump_width = 0.1;    ///< perturbed_disk: Gaussian standard deviation
  Vec2 bump_center = Vec2::Zero();

  double hole_diameter = 0.0;  ///< punched_disk
  Vec2 hole_center = Vec2::Zero();

  double noise = 0.0;  ///< normal-direction Gaussian perturbation amplitude
  std::uint64_t seed = 1;
};

struct SyntheticSurface {
  WeightedSurfaceSample sample;
  double exact_area = 0.0;  ///< analytic area of the sampled piece (NaN if none)
};

/// Deterministic for a fixed spec. Attaches exact tangent planes and the exact
/// mean curvature vector H (Laplace-Beltrami of the position, so a sphere's H
/// points to its center with |H| = 2/R).
SyntheticSurface generate(const SyntheticSpec& spec);

/// Closed-form area of the spherical cap of base radius a on a sphere of radius R.
double sphere_cap_area(double sphere_radius, double base_radius);

}  // namespace varifold
