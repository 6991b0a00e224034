#pragma once

#include <array>
#include <complex>
#include <optional>
#include <span>
#include <vector>

#include "varifold/patch.hpp"

namespace varifold {

/// z -> (a z + b) / (c z + d).
struct Mobius {
  std::complex<double> a{1.0}, b{0.0}, c{0.0}, d{1.0};

  Vec2 operator()(const Vec2& z) const;
  std::complex<double> operator()(std::complex<double> z) const { return (a * z + b) / (c * z + d); }

  /// The Mobius map sending z_j to x_j, j = 0, 1, 2.
  static Mobius from_three(const std::array<std::complex<double>, 3>& z, const std::array<std::complex<double>, 3>& x);
  /// Disk automorphism e^{i theta} (z - p) / (1 - conj(p) z), |p| < 1.
  static Mobius disk(std::complex<double> p, double theta = 0.0);
};

/// Piecewise-linear map from a planar (unit-disk) triangulation to R^n with
/// its per-triangle derivative data.
struct DiskParameterization {
  Eigen::Matrix2Xd disk;            ///< 2 x V parameter positions
  PointMatrix image;                ///< n x V, f at the vertices
  std::vector<Triangle> triangles;  ///< counterclockwise in the disk
  std::vector<char> on_boundary;
  std::vector<int> boundary;        ///< counterclockwise loop when the mesh is a disk
  std::vector<Eigen::Index> source; ///< sample index per vertex (empty for synthetic maps)

  // per triangle
  std::vector<Mat> jacobian;        ///< n x 2, columns f_1 and f_2
  std::vector<double> disk_area;
  std::vector<double> area_factor;  ///< |det grad f| = sqrt(det(J^T J))
  std::vector<double> w;            ///< (1/2) log area_factor
  std::vector<double> dilatation;   ///< sigma_max / sigma_min
  std::vector<double> stretch;      ///< |f_1| / |f_2|
  std::vector<double> angle_deviation;  ///< |cos| of the angle between f_1 and f_2
  std::vector<Vec> e1, e2;          ///< f_1 / |f_1|, f_2 / |f_2|

  double energy = 0.0;              ///< sum |grad f|^2 area
  double conformal_area = 0.0;      ///< sum |det grad f| area
  double patch_energy = 0.0;        ///< Dirichlet energy of the inverse map (the minimized functional)
  double tutte_energy = 0.0;        ///< same for the uniform-weight initializer
  double lambda = 1.0;              ///< normalization scale (patch radius)
  std::array<int, 3> pins{-1, -1, -1};
  double pin_error = 0.0;           ///< max |f(x_j) - lambda i(x_j)|
  double pin_bound = 0.0;
  int folded = 0;                   ///< triangles with nonpositive disk area

  Eigen::Index vertex_count() const { return disk.cols(); }
  std::size_t triangle_count() const { return triangles.size(); }
  /// f at an arbitrary disk point (nullopt outside the mesh).
  std::optional<Vec> evaluate(const Vec2& z) const;
  /// Lumped (one third) disk area per vertex.
  std::vector<double> vertex_area() const;
  double energy_gap() const { return energy - 2.0 * conformal_area; }
  double max_dilatation() const;

  PlanarLocator locator;
};

/// Per-triangle data for a given disk mesh and vertex images. Throws
/// DegenerateTriangle for zero-area images or zero-area disk triangles.
DiskParameterization make_parameterization(Eigen::Matrix2Xd disk, PointMatrix image, std::vector<Triangle> triangles);

/// Post-composes the parameter domain with a Mobius map: vertex z moves to m(z).
DiskParameterization reparameterize(const DiskParameterization& param, const Mobius& m);

struct ConformalOptions {
  bool pin = true;
  double pin_bound = 0.0;   ///< 0: psi sigma + 2 spacing + sigma / 8 + rim height over the plane
};

/// Cotangent-harmonic map patch -> unit disk with arc-length boundary values,
/// inverted to a map disk -> patch and pinned by the Mobius map taking the
/// boundary vertices at planar angles 2 pi j / 3 to x_j. Throws SolverSingular
/// or FoldedTriangles.
DiskParameterization harmonic_disk_param(const DiskPatch& patch, const ConformalOptions& opts = {});

struct ConformalFactor {
  std::vector<double> w, dilatation, stretch, angle_deviation;
};

/// e^{2w} = |det grad f| per triangle.
ConformalFactor conformal_factor(const DiskParameterization& param);

// ---------------------------------------------------------------------------
// quasi-symmetry and affine approximation

struct QuasiSymmetryEntry {
  Vec2 z;
  double s = 0.0;
  double big = 0.0;    ///< L_f(z, s)
  double small = 0.0;  ///< l_f(z, s)
  double ratio = 0.0;  ///< H_f = L / l
};

/// Max and min of |f(y) - f(z)| on |y - z| = s (sampled). Circles leaving
/// the mesh are skipped.
std::vector<QuasiSymmetryEntry> quasisymmetry_table(const DiskParameterization& param, const std::vector<Vec2>& centers,
                                                    const std::vector<double>& scales, int samples = 64);

struct AffineApproximation {
  double a = 0.0;
  Mat rotation;        ///< n x 2, orthonormal columns
  Vec shift;
  double sup_deviation = 0.0;     ///< max |f - (a T y + b)| / (a r) over vertices
  double energy_deviation = 0.0;  ///< (avg |grad f - a T|^2)^(1/2) / a
  double area_deviation = 0.0;    ///< |H^2(f(D)) - a^2 |D|| / (a^2 |D|)
  int vertices = 0;
};

/// Least-squares conformal-affine fit on the disk D(x, r). Throws RankDeficient.
AffineApproximation semmes_affine_fit(const DiskParameterization& param, const Vec2& x, double r);

// ---------------------------------------------------------------------------
// dyadic squares

struct DyadicSquare {
  Vec2 lo;
  double side = 0.0;
  int depth = 0;
  std::vector<int> triangles;  ///< by centroid
  double area = 0.0;
  Vec2 center() const { return lo + Vec2(side / 2, side / 2); }
};

/// Dyadic squares of [-1, 1]^2 inside the disk of the given radius holding at
/// least `min_triangles` triangles, depths 1..max_depth.
std::vector<DyadicSquare> dyadic_squares(const DiskParameterization& param, int max_depth = 8, int min_triangles = 16,
                                         double radius = 1.0);

/// Area-weighted mean of a per-triangle field on a square.
double square_mean(const DiskParameterization& param, const DyadicSquare& q, std::span<const double> field);

/// avg |det grad f| / (avg |det grad f|^(1/2))^2 on Q (>= 1).
double inverse_holder_check(const DiskParameterization& param, const DyadicSquare& q);

/// sup over squares of the mean absolute deviation from the square mean.
double bmo_norm(const DiskParameterization& param, std::span<const double> field, int max_depth = 8);

/// sup over squares of avg e^{2w} * avg e^{-2w} (>= 1).
double a2_constant(const DiskParameterization& param, std::span<const double> w, int max_depth = 8);

/// log(|grad f|_F / sqrt 2) per triangle, which equals w for conformal maps.
std::vector<double> log_gradient(const DiskParameterization& param);

// ---------------------------------------------------------------------------
// curvature equations

struct CurvatureResiduals {
  double mc_residual = 0.0;     ///< L1 of Delta f - H e^{2w} on interior vertices
  double mc_reference = 0.0;    ///< L1 of H e^{2w}
  double mc_relative = 0.0;
  double gauss_residual = 0.0;  ///< L1 of -Delta w - *(de_1 ^ de_2)
  double gauss_reference = 0.0;
  double frame_energy = 0.0;    ///< |grad e_1|^2 + |grad e_2|^2 over |z| <= 1 - margin
  int interior = 0;
};

/// Residuals with the cotangent Laplacian of the disk mesh and lumped masses,
/// over vertices with |z| <= 1 - margin. `h` holds H per vertex. For the
/// Gauss side, w and the frames are first mollified over disk radius rho.
/// The frame energy covers triangles inside the same disk. Throws
/// MissingCurvature when h is empty or mis-sized.
CurvatureResiduals curvature_equation_residuals(const DiskParameterization& param, std::span<const Vec> h,
                                                double margin = 0.1, double rho = 0.1);

/// H per vertex from a per-sample field through param.source.
std::vector<Vec> vertex_curvature(const DiskParameterization& param, std::span<const Vec> per_sample);

// ---------------------------------------------------------------------------
// large Lipschitz pieces

struct LipschitzPieces {
  double a = 0.0;               ///< affine scale on the inscribed disk
  std::vector<int> exceptional; ///< vertices of E_t
  double exceptional_area = 0.0;
  double image_area = 0.0;      ///< H^2(f(E_t))
  double lipschitz = 0.0;       ///< of f on the complement (vertex pairs)
  double normalized = 0.0;      ///< lipschitz / a
  double bound_lhs = 0.0;       ///< |E_t| + a^{-2} |f(E_t)|
  double bound_rhs = 0.0;       ///< t^{-q} r^2
  int vertices = 0;             ///< vertices in Q
};

/// E_t = vertices of Q where the dyadic maximal function of |grad f| exceeds
/// t a or that of 1 / sigma_min exceeds t / a.
LipschitzPieces large_lipschitz_pieces(const DiskParameterization& param, const DyadicSquare& q, double t, double qexp);

// ---------------------------------------------------------------------------
// summary

struct ConformalSummary {
  double energy = 0.0;
  double conformal_area = 0.0;
  double energy_gap_relative = 0.0;
  double max_dilatation = 0.0;
  double w_sup = 0.0;            ///< sup |w - log lambda| over triangles inside |z| <= 1 - margin
  double bmo = 0.0;              ///< of log |grad f|
  double a2 = 0.0;
  double inverse_holder_max = 0.0;
  double quasisymmetry_max = 0.0;
  double pin_error = 0.0;
  int squares = 0;
  bool has_curvature = false;
  CurvatureResiduals residuals;
};

ConformalSummary summarize(const DiskParameterization& param, std::span<const Vec> h = {}, int max_depth = 8,
                           double margin = 0.1);

}  // namespace varifold
