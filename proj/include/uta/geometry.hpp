#pragma once

#include <Eigen/Dense>
#include <array>

#include "uta/errors.hpp"

namespace uta {

/// 3x3 projective map on pixel coordinates. Normalized so m(2,2) == 1 and
/// required to be invertible (|det| > kDetEps).
class Homography {
 public:
  static constexpr double kDetEps = 1e-9;

  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  explicit Homography(const Eigen::Matrix3d& m) : m_(m) { normalize(); }
  explicit Homography(const std::array<double, 9>& row_major);

  static Homography identity() { return Homography(); }
  static Homography translation(double tx, double ty);
  static Homography scale(double s);
  static Homography rotation_about(double angle_rad, double cx, double cy);

  const Eigen::Matrix3d& matrix() const { return m_; }
  std::array<double, 9> row_major() const;

  Homography inverse() const;
  Homography compose(const Homography& rhs) const;  // this * rhs
  Homography operator*(const Homography& rhs) const { return compose(rhs); }

  /// Applies the map to a pixel coordinate (x, y).
  void apply(double x, double y, double& out_x, double& out_y) const;

  bool approx_equal(const Homography& o, double tol) const;
  double det() const { return m_.determinant(); }

 private:
  void normalize();
  Eigen::Matrix3d m_;
};

}  // namespace uta
