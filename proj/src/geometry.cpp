#include "uta/geometry.hpp"

#include <cmath>

namespace uta {

Homography::Homography(const std::array<double, 9>& rm) {
  m_ << rm[0], rm[1], rm[2], rm[3], rm[4], rm[5], rm[6], rm[7], rm[8];
  normalize();
}

Homography Homography::translation(double tx, double ty) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = tx;
  m(1, 2) = ty;
  return Homography(m);
}

Homography Homography::scale(double s) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = s;
  m(1, 1) = s;
  return Homography(m);
}

Homography Homography::rotation_about(double angle_rad, double cx, double cy) {
  const double c = std::cos(angle_rad), s = std::sin(angle_rad);
  Eigen::Matrix3d m;
  m << c, -s, cx - c * cx + s * cy,
       s,  c, cy - s * cx - c * cy,
       0,  0, 1;
  return Homography(m);
}

std::array<double, 9> Homography::row_major() const {
  return {m_(0, 0), m_(0, 1), m_(0, 2), m_(1, 0), m_(1, 1),
          m_(1, 2), m_(2, 0), m_(2, 1), m_(2, 2)};
}

Homography Homography::inverse() const {
  if (std::abs(m_.determinant()) <= kDetEps)
    throw SingularMatrixError("Homography::inverse: determinant below bound");
  return Homography(Eigen::Matrix3d(m_.inverse()));
}

Homography Homography::compose(const Homography& rhs) const {
  return Homography(Eigen::Matrix3d(m_ * rhs.m_));
}

void Homography::apply(double x, double y, double& out_x, double& out_y) const {
  const Eigen::Vector3d p = m_ * Eigen::Vector3d(x, y, 1.0);
  if (std::abs(p(2)) < 1e-12)
    throw DegenerateGeometryError("Homography::apply: point mapped to infinity");
  out_x = p(0) / p(2);
  out_y = p(1) / p(2);
}

bool Homography::approx_equal(const Homography& o, double tol) const {
  return (m_ - o.m_).cwiseAbs().maxCoeff() <= tol;
}

void Homography::normalize() {
  if (std::abs(m_.determinant()) <= kDetEps)
    throw SingularMatrixError("Homography: determinant below invertibility bound");
  if (std::abs(m_(2, 2)) <= kDetEps)
    throw DegenerateGeometryError("Homography: m[2][2] too close to zero to normalize");
  m_ /= m_(2, 2);
}

}  // namespace uta
