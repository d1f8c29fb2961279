#include "dpi/lie.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "dpi/errors.hpp"

namespace dpi {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNearPiRotation: return "NearPiRotation";
    case ErrorCode::kOutOfDomain: return "OutOfDomain";
    case ErrorCode::kEmptySampleSet: return "EmptySampleSet";
    case ErrorCode::kWindowMismatch: return "WindowMismatch";
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kSingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::kUnsupportedCase: return "UnsupportedCase";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kData: return "DataError";
  }
  return "Unknown";
}

namespace {
constexpr double kExpSeriesThreshold = 1e-8;
constexpr double kJacobianSeriesThreshold = 1e-5;
constexpr double kNearPiGuard = 1e-6;
}  // namespace

Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Vec3 vee(const Mat3& m) {
  return 0.5 * Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
}

Rotation Rotation::from_matrix(const Mat3& m, double tol) {
  Rotation r(m);
  const double err = r.orthonormality_error();
  if (!(err <= tol)) {
    std::ostringstream os;
    os << "matrix is not a rotation (orthonormality error " << err << ")";
    throw Error(ErrorCode::kOutOfDomain, os.str());
  }
  return r;
}

Rotation Rotation::nearest(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return Rotation(svd.matrixU() * d * svd.matrixV().transpose());
}

double Rotation::orthonormality_error() const {
  const double ortho = (m_ * m_.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(m_.determinant() - 1.0));
}

Rotation exp_map(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 K = hat(phi);
  if (theta < kExpSeriesThreshold) {
    return Rotation(Mat3::Identity() + K + 0.5 * K * K);
  }
  const double a = std::sin(theta) / theta;
  const double sh = std::sin(0.5 * theta);
  const double b = 2.0 * sh * sh / (theta * theta);
  return Rotation(Mat3::Identity() + a * K + b * K * K);
}

Vec3 log_map(const Rotation& R) {
  const Mat3& m = R.matrix();
  const Vec3 s = vee(m);  // sin(theta) * axis
  const double sin_theta = s.norm();
  const double cos_theta = std::clamp(0.5 * (m.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);

  if (theta > std::numbers::pi - kNearPiGuard) {
    std::ostringstream os;
    os << "rotation angle " << theta << " is within " << kNearPiGuard << " of pi";
    throw Error(ErrorCode::kNearPiRotation, os.str());
  }
  if (theta < kJacobianSeriesThreshold) {
    // theta / sin(theta) = 1 + theta^2/6 + O(theta^4)
    return (1.0 + theta * theta / 6.0) * s;
  }
  if (theta < 3.0) {
    return (theta / sin_theta) * s;
  }
  // Close to pi the antisymmetric part is small; recover the axis from the
  // symmetric part and take its sign from vee().
  const Mat3 aat = (0.5 * (m + m.transpose()) - cos_theta * Mat3::Identity()) / (1.0 - cos_theta);
  Eigen::Index k = 0;
  aat.diagonal().maxCoeff(&k);
  Vec3 axis = aat.col(k) / std::sqrt(aat(k, k));
  if (axis.dot(s) < 0.0) axis = -axis;
  return theta * axis.normalized();
}

Mat3 right_jacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 K = hat(phi);
  if (theta < kJacobianSeriesThreshold) {
    return Mat3::Identity() - 0.5 * K + (1.0 / 6.0) * K * K;
  }
  const double t2 = theta * theta;
  const double sh = std::sin(0.5 * theta);
  return Mat3::Identity() - 2.0 * sh * sh / t2 * K +
         (theta - std::sin(theta)) / (t2 * theta) * K * K;
}

Mat3 right_jacobian_inv(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta >= 2.0 * std::numbers::pi - kNearPiGuard) {
    std::ostringstream os;
    os << "inverse right Jacobian undefined at |phi| = " << theta;
    throw Error(ErrorCode::kOutOfDomain, os.str());
  }
  if (theta < kJacobianSeriesThreshold) {
    const Mat3 K = hat(phi);
    return Mat3::Identity() + 0.5 * K + (1.0 / 12.0) * K * K;
  }
  const Vec3 a = phi / theta;
  const double half = 0.5 * theta;
  const double c = half / std::tan(half);
  return c * Mat3::Identity() + (1.0 - c) * a * a.transpose() + half * hat(a);
}

double geodesic_distance(const Rotation& a, const Rotation& b) {
  const Mat3 d = a.matrix().transpose() * b.matrix();
  const double sin_theta = vee(d).norm();
  const double cos_theta = std::clamp(0.5 * (d.trace() - 1.0), -1.0, 1.0);
  return std::atan2(sin_theta, cos_theta);
}

}  // namespace dpi
