#include "varifold/geometry.hpp"

#include <algorithm>
#include <numeric>

#include "varifold/error.hpp"
#include "varifold/kdtree.hpp"

namespace varifold {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::DegenerateCloud: return "DegenerateCloud";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BallBelowResolution: return "BallBelowResolution";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::MissingCurvature: return "MissingCurvature";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::PointOutsideDomain: return "PointOutsideDomain";
    case ErrorCode::EmptyFineSet: return "EmptyFineSet";
    case ErrorCode::UncoveredQuery: return "UncoveredQuery";
    case ErrorCode::GraphTestFailure: return "GraphTestFailure";
    case ErrorCode::NoValidPreimage: return "NoValidPreimage";
    case ErrorCode::NonContraction: return "NonContraction";
    case ErrorCode::NotDiskTopology: return "NotDiskTopology";
    case ErrorCode::NoBoundaryCycle: return "NoBoundaryCycle";
    case ErrorCode::DisconnectedPatch: return "DisconnectedPatch";
    case ErrorCode::SolverSingular: return "SolverSingular";
    case ErrorCode::FoldedTriangles: return "FoldedTriangles";
    case ErrorCode::DegenerateTriangle: return "DegenerateTriangle";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NotJordan: return "NotJordan";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NonManifoldMesh: return "NonManifoldMesh";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

// ---------------------------------------------------------------------------
// Plane

Plane::Plane(Mat basis, std::optional<Vec> basepoint)
    : basis_(std::move(basis)), basepoint_(std::move(basepoint)) {
  projector_ = basis_ * basis_.transpose();
  // exact symmetry
  projector_ = 0.5 * (projector_ + projector_.transpose()).eval();
}

Plane Plane::from_basis(const Mat& spanning, std::optional<Vec> basepoint) {
  const auto n = spanning.rows();
  const auto m = spanning.cols();
  if (m == 0 || m > n) throw Error(ErrorCode::DimensionMismatch, "plane basis must have 1..n columns");
  if (basepoint && basepoint->size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "basepoint dimension differs from basis");
  }
  // modified Gram-Schmidt, twice for stability
  Mat q = spanning;
  const double scale = std::max(1.0, spanning.cwiseAbs().maxCoeff());
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = 0; i < j; ++i) q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
      const double nrm = q.col(j).norm();
      if (nrm <= 1e-12 * scale) throw Error(ErrorCode::DegenerateCloud, "rank-deficient plane basis");
      q.col(j) /= nrm;
    }
  }
  return Plane(std::move(q), std::move(basepoint));
}

Plane Plane::from_orthonormal(const Mat& basis, double tol) {
  if (basis.cols() == 0 || basis.cols() > basis.rows())
    throw Error(ErrorCode::DimensionMismatch, "plane basis must have 1..n columns");
  const Mat gram = basis.transpose() * basis;
  if ((gram - Mat::Identity(basis.cols(), basis.cols())).cwiseAbs().maxCoeff() <= tol) return Plane(basis, std::nullopt);
  return from_basis(basis);
}

Plane Plane::coordinate(int n, int m, int first) {
  Mat b = Mat::Zero(n, m);
  for (int j = 0; j < m; ++j) b((first + j) % n, j) = 1.0;
  return Plane(std::move(b), std::nullopt);
}

Mat Plane::normal_projector() const {
  return Mat::Identity(ambient_dim(), ambient_dim()) - projector_;
}

Plane Plane::with_basepoint(const Vec& p) const {
  if (p.size() != ambient_dim()) throw Error(ErrorCode::DimensionMismatch, "basepoint dimension");
  return Plane(basis_, p);
}

Vec Plane::coordinates(const Vec& x) const {
  if (basepoint_) return basis_.transpose() * (x - *basepoint_);
  return basis_.transpose() * x;
}

double Plane::distance_to(const Vec& x) const {
  Vec d = basepoint_ ? Vec(x - *basepoint_) : x;
  return (d - projector_ * d).norm();
}

bool Plane::satisfies_invariants(double tol) const {
  const Mat& p = projector_;
  if ((p - p.transpose()).norm() > tol) return false;
  if ((p * p - p).norm() > tol) return false;
  if (std::abs(p.trace() - static_cast<double>(dim())) > tol) return false;
  return (p - basis_ * basis_.transpose()).norm() <= tol;
}

Ball::Ball(Vec c, double r) : center(std::move(c)), radius(r) {
  if (!(r > 0.0)) throw Error(ErrorCode::InvalidSpec, "ball radius must be positive");
}

bool Ball::contains(const Vec& x) const { return distance(x, center) <= radius; }

bool Ball::inside(const Ball& outer) const {
  return distance(center, outer.center) + radius <= outer.radius * (1.0 + 1e-12);
}

// ---------------------------------------------------------------------------
// PCA

namespace {

// Sorts eigenpairs descending by eigenvalue and fixes a deterministic sign per
// eigenvector (largest-magnitude component positive).
void sort_descending(Vec& values, Mat& vectors) {
  const auto n = values.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return values[a] > values[b]; });
  Vec v(n);
  Mat e(vectors.rows(), n);
  for (Eigen::Index k = 0; k < n; ++k) {
    v[k] = values[idx[static_cast<std::size_t>(k)]];
    e.col(k) = vectors.col(idx[static_cast<std::size_t>(k)]);
    Eigen::Index arg = 0;
    e.col(k).cwiseAbs().maxCoeff(&arg);
    if (e(arg, k) < 0) e.col(k) = -e.col(k);
  }
  values = v;
  vectors = e;
}

}  // namespace

PlaneFit fit_plane_pca(const PointMatrix& points, std::span<const Eigen::Index> indices,
                       std::span<const double> weights, int dim, const Vec* pin) {
  if (indices.empty()) throw Error(ErrorCode::EmptyInput, "no points to fit");
  const auto n = points.rows();
  if (dim <= 0 || dim > n) throw Error(ErrorCode::DimensionMismatch, "plane dimension out of range");
  if (pin && pin->size() != n) throw Error(ErrorCode::DimensionMismatch, "pinned center dimension");

  double wsum = 0.0;
  Vec centroid = Vec::Zero(n);
  for (auto i : indices) {
    const double w = weights[static_cast<std::size_t>(i)];
    wsum += w;
    centroid += w * points.col(i);
  }
  if (!(wsum > 0.0)) throw Error(ErrorCode::EmptyInput, "total weight must be positive");
  centroid /= wsum;
  if (static_cast<int>(indices.size()) < dim + (pin ? 0 : 1)) {
    throw Error(ErrorCode::DegenerateCloud, "fewer points than needed to span the plane");
  }

  const Vec origin = pin ? *pin : centroid;
  Mat scatter = Mat::Zero(n, n);
  Vec d(n);
  for (auto i : indices) {
    d = points.col(i) - origin;
    scatter.noalias() += weights[static_cast<std::size_t>(i)] * d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(scatter);
  Vec values = es.eigenvalues();
  Mat vectors = es.eigenvectors();
  sort_descending(values, vectors);

  const double top = std::max(values[0], 0.0);
  if (!(top > 0.0) || values[dim - 1] <= 1e-12 * top) {
    throw Error(ErrorCode::DegenerateCloud, "weighted scatter has rank below plane dimension");
  }

  PlaneFit fit;
  fit.plane = Plane::from_basis(vectors.leftCols(dim), origin);
  fit.centroid = centroid;
  fit.eigenvalues = values;
  fit.eigenvectors = vectors;
  fit.residual = std::max(0.0, values.tail(n - dim).sum());
  fit.total_weight = wsum;
  return fit;
}

PlaneFit fit_plane_pca(const PointMatrix& points, std::span<const double> weights, int dim,
                       const Vec* pin) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(points.cols()));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  return fit_plane_pca(points, all, weights, dim, pin);
}

double projector_distance(const Mat& p, const Mat& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "projectors live in different ambient spaces");
  }
  return (p - q).norm();
}

double projector_distance(const Plane& p, const Plane& q) {
  return projector_distance(p.projector(), q.projector());
}

double directed_hausdorff(const PointMatrix& a, const PointMatrix& b) {
  if (a.cols() == 0 || b.cols() == 0) throw Error(ErrorCode::EmptySet, "Hausdorff distance of an empty set");
  if (a.rows() != b.rows()) throw Error(ErrorCode::DimensionMismatch, "point sets in different spaces");
  const KdTree tree(b);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    worst = std::max(worst, tree.nearest(a.col(i)).second);
  }
  return worst;
}

double hausdorff_distance(const PointMatrix& a, const PointMatrix& b) {
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

GrassmannProjection grassmann_project(const Mat& m, int rank) {
  if (m.rows() != m.cols()) throw Error(ErrorCode::DimensionMismatch, "grassmann_project needs a square matrix");
  const auto n = m.rows();
  if (rank <= 0 || rank >= n) throw Error(ErrorCode::DimensionMismatch, "rank must satisfy 0 < k < n");
  const Mat sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  Vec values = es.eigenvalues();
  Mat vectors = es.eigenvectors();
  sort_descending(values, vectors);
  GrassmannProjection out;
  out.eigengap_tie = std::abs(values[rank - 1] - values[rank]) <= 1e-9;
  out.plane = Plane::from_basis(vectors.leftCols(rank));
  out.eigenvalues = values;
  return out;
}

Plane rotate_plane(const Plane& plane, int tangent_index, const Vec& normal_dir, double angle) {
  Mat b = plane.basis();
  const Vec t = b.col(tangent_index);
  b.col(tangent_index) = std::cos(angle) * t + std::sin(angle) * normal_dir;
  return Plane::from_basis(b, plane.basepoint());
}

}  // namespace varifold
