#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace varifold {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Column-major point storage: one point per column.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

inline constexpr double kPi = std::numbers::pi;

/// Volume of the unit m-ball.
inline double unit_ball_volume(int m) {
  return std::pow(kPi, 0.5 * m) / std::tgamma(0.5 * m + 1.0);
}

template <typename A, typename B>
inline double squared_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

template <typename A, typename B>
inline double distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return std::sqrt(squared_distance(a, b));
}

}  // namespace varifold
