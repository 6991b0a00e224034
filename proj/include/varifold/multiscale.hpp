#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "varifold/sample.hpp"

namespace varifold {

/// Smallest admissible ball radius: `floor_mult` x mean spacing. Below this,
/// empirical ball measures stop approximating the surface measure.
double resolution_floor(const WeightedSurfaceSample& sample, double floor_mult = 8.0);

/// Dyadic ball family sigma_k = sigma_max 2^-k >= floor over a set of sample
/// centers. Only (center, radius) pairs whose ball lies in `domain` are used.
struct ScaleFamily {
  Ball domain;
  std::vector<Eigen::Index> centers;
  std::vector<double> radii;  ///< strictly decreasing
  double floor = 0.0;

  /// Centers form a greedy net (index order) of sample points inside the
  /// domain with the given separation (defaults to the floor).
  static ScaleFamily dyadic(const WeightedSurfaceSample& sample, const Ball& domain, double sigma_max,
                            double floor, double center_separation = 0.0);

  /// Throws InvalidSpec when radii are not strictly decreasing or undercut the floor.
  void validate() const;
  /// Admissible balls, radius-major then center order.
  std::vector<Ball> balls(const WeightedSurfaceSample& sample) const;
};

/// mu(B) / (omega_m r^m). BallBelowResolution when the radius undercuts `floor`.
double density_ratio(const WeightedSurfaceSample& sample, const Ball& ball, double floor);

struct Flatness {
  double value = 0.0;      ///< d_H(sample in B, plane disk) / sigma at the argmin plane
  double error_bar = 0.0;  ///< discretization scale: mean spacing / sigma
  Plane plane;             ///< argmin plane, anchored at the ball center
  Plane pca_plane;         ///< starting plane (PCA pinned at the center)
  double pca_value = 0.0;
  int evaluations = 0;
};

/// Bilateral Hausdorff flatness over planes through the ball center.
///
/// The plane disk is a lattice at mean spacing; sample atoms are treated as
/// tangent disks of their own area when measuring how well they cover the
/// plane disk, which removes the bias of a point set against a continuum.
Flatness reifenberg_flatness(const WeightedSurfaceSample& sample, const Ball& ball, int refinements = 8);

/// sigma^-m sum_{x in B} w |p_{T_x} - p_T|^2 (linear part of `plane`).
double tilt_excess(const WeightedSurfaceSample& sample, const Ball& ball, const Plane& plane);

struct CaccioppoliTerms {
  double lhs = 0.0;             ///< tilt excess on B(xi, sigma)
  double curvature_term = 0.0;  ///< int_{B(xi,(1+a)sigma)} |H|^2
  double height_term = 0.0;     ///< sigma^-2 (1 + 1/a)^2 int (d(x - xi, T)/sigma)^2
  double rhs = 0.0;             ///< sum of both, constant 1
  Plane plane;
};

/// Both sides of the Caccioppoli inequality; `h` holds one curvature vector per
/// sample point. Without `plane` the Reifenberg argmin plane of the ball is used.
CaccioppoliTerms caccioppoli_bound_check(const WeightedSurfaceSample& sample, const Ball& ball, double alpha,
                                         std::span<const Vec> h, const Plane* plane = nullptr);

/// beta^2(y, s) = s^-(m+2) min_L sum w d(z, L)^2 over affine m-planes; the
/// weighted PCA plane through the weighted centroid is the exact minimizer.
double jones_beta(const WeightedSurfaceSample& sample, const Vec& center, double s);

struct CarlesonSum {
  double value = 0.0;
  double normalized = 0.0;  ///< value / (pi sigma^2)
  std::vector<double> scales;
};

/// Discrete E~(xi, sigma): log-midpoint rule over scales in [floor, sigma]
/// with `per_octave` sub-steps per factor of two.
CarlesonSum carleson_sum(const WeightedSurfaceSample& sample, const Vec& xi, double sigma, double floor,
                         int per_octave = 1);

/// 2 sum_{z in B(xi,2 sigma)} w_z sum_{y in B(z,sigma), y != z} w_y |D^perp r_z(y)|^2 / r_z(y)^2,
/// the tangent-plane upper bound for E~(xi, sigma).
double carleson_dperp_bound(const WeightedSurfaceSample& sample, const Vec& xi, double sigma);

struct BallRecord {
  Vec center;
  double radius = 0.0;
  double density = 0.0;
  double flatness = 0.0;
  double flatness_error = 0.0;
  double tilt = 0.0;
  double pca_tilt = 0.0;
  std::optional<Plane> plane;
  std::optional<Plane> pca_plane;
  std::optional<std::string> error;

  double gamma() const;  ///< max(|density - 1|, flatness, sqrt(tilt))
};

struct ChordArcReport {
  std::vector<BallRecord> balls;
  double gamma = 0.0;
  double floor = 0.0;
  Ball domain;
  int failed = 0;
};

/// Evaluates every admissible ball of the family. Per-ball errors are
/// recorded on the ball and excluded from gamma.
ChordArcReport certify_chord_arc(const WeightedSurfaceSample& sample, const ScaleFamily& family,
                                 int refinements = 8);

/// Average first-power tilt against `reference` on B(y, s), for each dyadic
/// s = r_max 2^-k >= floor. Returns (s, value) pairs, largest scale first.
std::vector<std::pair<double, double>> tilt_profile(const WeightedSurfaceSample& sample, const Vec& y,
                                                    double r_max, const Plane& reference, double floor);

/// Supremum of tilt_profile.
double local_maximal_tilt(const WeightedSurfaceSample& sample, const Vec& y, double r_max,
                          const Plane& reference, double floor);

struct NoHoleResult {
  bool pass = true;
  int cells = 0;
  std::vector<Vec2> gap_cells;  ///< in-plane coordinates of uncovered cells
  std::vector<Vec> gap_points;  ///< the same cells in R^n
  Plane plane;
};

/// Projects the sample inside the cylinder over T_{xi,sigma} onto the plane and
/// reports lattice cells of the sigma-disk with no projected point within one
/// mean spacing.
NoHoleResult projection_no_hole_check(const WeightedSurfaceSample& sample, const Vec& xi, double sigma);

struct BetaProfile {
  Vec center;
  std::vector<double> scales;
  std::vector<double> beta_sq;
};

/// beta^2(y, s) for dyadic s = s_max 2^-k >= floor.
BetaProfile beta_profile(const WeightedSurfaceSample& sample, const Vec& y, double s_max, double floor);

}  // namespace varifold
