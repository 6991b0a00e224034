#include "varifold/sample.hpp"

#include <cmath>

#include "varifold/error.hpp"
#include "varifold/parallel.hpp"

namespace varifold {

WeightedSurfaceSample::WeightedSurfaceSample(PointMatrix points, std::vector<double> weights,
                                             std::vector<Plane> tangent_planes, int intrinsic_dim,
                                             double estimation_radius_mult)
    : points_(std::move(points)),
      weights_(std::move(weights)),
      tangents_(std::move(tangent_planes)),
      intrinsic_dim_(intrinsic_dim) {
  if (points_.cols() == 0) throw Error(ErrorCode::EmptyInput, "sample has no points");
  if (static_cast<Index>(weights_.size()) != points_.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "one weight per point required");
  }
  if (intrinsic_dim_ <= 0 || intrinsic_dim_ >= points_.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "intrinsic dimension must satisfy 0 < m < n");
  }
  for (double w : weights_) {
    if (!(w > 0.0) || !std::isfinite(w)) throw Error(ErrorCode::InvalidSpec, "weights must be positive and finite");
    total_weight_ += w;
  }
  mean_spacing_ = std::pow(total_weight_ / static_cast<double>(points_.cols()), 1.0 / intrinsic_dim_);
  index_ = std::make_shared<const KdTree>(points_);

  if (tangents_.empty()) {
    tangents_.resize(static_cast<std::size_t>(points_.cols()));
    parallel_for(static_cast<std::size_t>(points_.cols()), [&](std::size_t i) {
      double radius = estimation_radius_mult * mean_spacing_;
      std::vector<Index> nbrs;
      for (int attempt = 0;; ++attempt) {
        index_->ball_query(points_.col(static_cast<Index>(i)), radius, nbrs);
        try {
          tangents_[i] = Plane::from_basis(fit_plane_pca(points_, nbrs, weights_, intrinsic_dim_).plane.basis());
          return;
        } catch (const Error&) {
          if (attempt >= 4) throw;
          radius *= 2.0;
        }
      }
    });
  } else if (static_cast<Index>(tangents_.size()) != points_.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "one tangent plane per point required");
  } else {
    for (const auto& t : tangents_) {
      if (t.ambient_dim() != points_.rows() || t.dim() != intrinsic_dim_) {
        throw Error(ErrorCode::DimensionMismatch, "tangent plane dimensions do not match the sample");
      }
    }
  }
}

double WeightedSurfaceSample::measure(const Ball& ball) const {
  double s = 0.0;
  for (auto i : index_->ball_query(ball.center, ball.radius)) s += weights_[static_cast<std::size_t>(i)];
  return s;
}

void WeightedSurfaceSample::set_reference_curvature(std::vector<Vec> h) {
  if (static_cast<Index>(h.size()) != size()) throw Error(ErrorCode::DimensionMismatch, "one curvature vector per point");
  reference_curvature_ = std::move(h);
}

WeightedSurfaceSample WeightedSurfaceSample::transformed(const Mat& rotation, const Vec& translation,
                                                         double scale) const {
  const auto n = ambient_dim();
  if (rotation.rows() != n || rotation.cols() != n || translation.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "transform dimensions");
  }
  PointMatrix pts = (scale * rotation) * points_;
  pts.colwise() += translation;
  std::vector<double> w(weights_);
  const double wscale = std::pow(scale, intrinsic_dim_);
  for (auto& x : w) x *= wscale;
  std::vector<Plane> planes;
  planes.reserve(tangents_.size());
  for (const auto& t : tangents_) planes.push_back(Plane::from_basis(rotation * t.basis()));
  WeightedSurfaceSample out(std::move(pts), std::move(w), std::move(planes), intrinsic_dim_);
  if (reference_curvature_) {
    std::vector<Vec> h;
    h.reserve(reference_curvature_->size());
    for (const auto& v : *reference_curvature_) h.push_back(rotation * v / scale);
    out.set_reference_curvature(std::move(h));
  }
  if (triangles_) out.set_triangles(*triangles_);
  return out;
}

WeightedSurfaceSample WeightedSurfaceSample::subset(std::span<const Index> keep) const {
  PointMatrix pts(ambient_dim(), static_cast<Index>(keep.size()));
  std::vector<double> w;
  std::vector<Plane> planes;
  w.reserve(keep.size());
  planes.reserve(keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    pts.col(static_cast<Index>(k)) = points_.col(keep[k]);
    w.push_back(weights_[static_cast<std::size_t>(keep[k])]);
    planes.push_back(tangents_[static_cast<std::size_t>(keep[k])]);
  }
  WeightedSurfaceSample out(std::move(pts), std::move(w), std::move(planes), intrinsic_dim_);
  if (reference_curvature_) {
    std::vector<Vec> h;
    for (auto i : keep) h.push_back((*reference_curvature_)[static_cast<std::size_t>(i)]);
    out.set_reference_curvature(std::move(h));
  }
  return out;
}

}  // namespace varifold
