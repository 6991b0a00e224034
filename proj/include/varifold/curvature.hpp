#pragma once

#include <span>
#include <vector>

#include "varifold/sample.hpp"

namespace varifold {

struct CurvatureEstimate {
  Vec h;                  ///< mean curvature vector at x
  double residual = 0.0;  ///< relative least-squares residual of the test-field system
  double condition = 0.0; ///< condition number of the normal equations
  int support = 0;        ///< sample points inside B(x, radius)
};

/// Weak mean curvature at x from the first variation identity
///   sum w div_T X = - sum w X . H
/// tested against X = phi_c e_k, phi_c = (1 - |y - c|^2 / r^2)_+^2, with c = x
/// and three tangent translates of x at distance r/2. H is modelled as affine
/// in the tangent coordinates around x and its value at x is returned.
CurvatureEstimate estimate_mean_curvature(const WeightedSurfaceSample& sample, const Vec& x, double radius);

struct CurvatureOptions {
  double radius_mult = 10.0;  ///< estimation radius in units of mean spacing
  bool project_normal = false;
  double angle_tolerance = 0.2;  ///< radians, for the perpendicularity flag
};

struct CurvatureField {
  std::vector<Vec> h;
  std::vector<double> residual;
  std::vector<char> perpendicular;  ///< H within angle_tolerance of the normal space
  double radius = 0.0;
  int flagged = 0;                  ///< points failing the perpendicularity check
  int failed = 0;                   ///< points where the solve was refused (H set to 0)
};

CurvatureField estimate_curvature_field(const WeightedSurfaceSample& sample, const CurvatureOptions& opts = {});

/// Angle between H and the normal space of `tangent`; 0 when H = 0.
double normal_angle(const Vec& h, const Plane& tangent);

/// sum over the region of w |H|^2.
double willmore_energy(const WeightedSurfaceSample& sample, const Ball& region, std::span<const Vec> h);

/// Every term of the monotonicity identity at (x, sigma, rho):
///   A = B + C - D + E - F
struct MonotonicityLedger {
  Vec x;
  double sigma = 0.0, rho = 0.0;
  double density_sigma = 0.0;    ///< A = mu(B_sigma) / sigma^2
  double density_rho = 0.0;      ///< B = mu(B_rho) / rho^2
  double willmore_annulus = 0.0; ///< C = 1/16 int_{ann} |H|^2
  double normal_annulus = 0.0;   ///< D = int_{ann} |grad^perp r / r + H / 4|^2
  double pairing_rho = 0.0;      ///< E = 1/(2 rho^2) int_{B_rho} r <grad^perp r, H>
  double pairing_sigma = 0.0;    ///< F = 1/(2 sigma^2) int_{B_sigma} r <grad^perp r, H>
  double lhs = 0.0, rhs = 0.0;
  double residual = 0.0;          ///< lhs - rhs
  double relative_residual = 0.0; ///< residual / lhs
};

MonotonicityLedger monotonicity_identity(const WeightedSurfaceSample& sample, const Vec& x, double sigma, double rho,
                                         std::span<const Vec> h, double floor);

struct MonotonicityInequality {
  double lhs = 0.0;  ///< mu(B_sigma) / sigma^2
  double rhs = 0.0;  ///< (1 + delta) mu(B_rho) / rho^2 + 1/(2 delta) int_{B_rho} |H|^2
  bool holds = false;
};

MonotonicityInequality monotonicity_inequality(const WeightedSurfaceSample& sample, const Vec& x, double sigma,
                                               double rho, double delta, std::span<const Vec> h, double floor);

}  // namespace varifold
