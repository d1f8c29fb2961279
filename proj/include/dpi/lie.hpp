#pragma once

#include <Eigen/Dense>

namespace dpi {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Cross-product matrix: hat(v) * w == v.cross(w).
Mat3 hat(const Vec3& v);
/// Inverse of hat() on the skew-symmetric part of m.
Vec3 vee(const Mat3& m);

/**
 * Element of SO(3) stored as an orthonormal 3x3 matrix.
 *
 * Instances built from exp_map() or products of rotations are valid by
 * construction. Arbitrary matrices go through from_matrix(), which checks
 * orthonormality and det = +1.
 */
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  /// Throws Error(kOutOfDomain) unless R*R^T = I and det(R) = +1 within tol.
  static Rotation from_matrix(const Mat3& m, double tol = 1e-9);
  /// Projects a nearly-orthonormal matrix onto SO(3) (SVD).
  static Rotation nearest(const Mat3& m);

  const Mat3& matrix() const { return m_; }
  Rotation transpose() const { return Rotation(m_.transpose()); }
  Rotation inverse() const { return transpose(); }

  Rotation operator*(const Rotation& other) const { return Rotation(m_ * other.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  /// Orthonormality residual max(|R R^T - I|, |det R - 1|).
  double orthonormality_error() const;

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}
  friend Rotation exp_map(const Vec3& phi);

  Mat3 m_;
};

/// Exp(phi) = exp(phi^). Second-order series below |phi| = 1e-8.
Rotation exp_map(const Vec3& phi);

/// Principal-branch logarithm. Throws Error(kNearPiRotation) when the angle
/// is within 1e-6 of pi, where the axis sign is ambiguous.
Vec3 log_map(const Rotation& R);

/// Right Jacobian of SO(3); Taylor expansion below |phi| = 1e-5.
Mat3 right_jacobian(const Vec3& phi);

/// Inverse right Jacobian; throws Error(kOutOfDomain) for |phi| >= 2*pi - 1e-6.
Mat3 right_jacobian_inv(const Vec3& phi);

/// Geodesic angle |Log(a^T b)| in radians. Safe near pi.
double geodesic_distance(const Rotation& a, const Rotation& b);

}  // namespace dpi
