// Independent reference computations used only by the tests. Nothing here
// calls into the library's own integration or Jacobian code.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dpi/dual_preintegration.hpp"
#include "dpi/preintegration.hpp"

namespace oracle {

using dpi::Mat3;
using dpi::Vec3;

inline Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> N(0.0, 1.0);
  return scale * Vec3(N(rng), N(rng), N(rng));
}

inline Vec3 random_unit(std::mt19937_64& rng) { return random_vec(rng).normalized(); }

/// Uniform random rotation from a normalized Gaussian quaternion.
inline Mat3 random_rotation_matrix(std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  Eigen::Quaterniond q(N(rng), N(rng), N(rng), N(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Mat3 cross_matrix(const Vec3& v) {
  Mat3 m;
  for (int i = 0; i < 3; ++i) m.col(i) = v.cross(Vec3::Unit(i));
  return m;
}

/// exp of a skew matrix by a truncated power series.
inline Mat3 exp_series(const Vec3& phi, int terms = 20) {
  const Mat3 A = cross_matrix(phi);
  Mat3 out = Mat3::Identity();
  Mat3 term = Mat3::Identity();
  for (int k = 1; k < terms; ++k) {
    term = term * A / static_cast<double>(k);
    out += term;
  }
  return out;
}

/// Rotation by Eigen's angle-axis, an implementation independent of exp_map.
inline Mat3 angle_axis(const Vec3& phi) {
  const double th = phi.norm();
  if (th < 1e-15) return Mat3::Identity();
  return Eigen::AngleAxisd(th, phi / th).toRotationMatrix();
}

inline Vec3 rotation_vector(const Mat3& R) {
  Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

struct Delta {
  Mat3 R = Mat3::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 p = Vec3::Zero();
};

/**
 * Preintegrated increments written out as sums over the samples, with every
 * intermediate rotation Delta R_ik rebuilt as an explicit product:
 *   Delta R_ij = prod Exp((w_k - b_g) dt)
 *   Delta v_ij = sum Delta R_ik (a_k - b_a) dt
 *   Delta p_ij = sum [Delta v_ik dt + 1/2 Delta R_ik (a_k - b_a) dt^2]
 */
inline Delta reintegrate(const std::vector<dpi::ImuSample>& s, const Vec3& bg, const Vec3& ba) {
  Delta out;
  const std::size_t n = s.size();
  std::vector<Mat3> R(n + 1, Mat3::Identity());
  for (std::size_t k = 0; k < n; ++k) R[k + 1] = R[k] * angle_axis((s[k].gyro - bg) * s[k].dt);
  std::vector<Vec3> v(n + 1, Vec3::Zero());
  for (std::size_t k = 0; k < n; ++k) v[k + 1] = v[k] + R[k] * (s[k].accel - ba) * s[k].dt;
  for (std::size_t k = 0; k < n; ++k) {
    const double dt = s[k].dt;
    out.p += v[k] * dt + 0.5 * R[k] * (s[k].accel - ba) * dt * dt;
  }
  out.R = R[n];
  out.v = v[n];
  return out;
}

/// Relative-state prediction written from world-frame kinematics: follower
/// and leader states are rebuilt in an arbitrary world frame, propagated
/// with their own increments plus gravity, and re-expressed relative to
/// the leader.
inline dpi::RelativeState predict_world(const dpi::RelativeState& xi, const Delta& F, const Delta& L,
                                        double T) {
  const Vec3 g(0.3, -0.7, -9.81);
  const Mat3 RL = angle_axis(Vec3(0.2, 0.5, -0.4));
  const Vec3 pL(1.0, -2.0, 0.5), vL(0.3, 0.1, -0.2);
  const Mat3 RF = RL * xi.R.matrix();
  const Vec3 pF = pL + RL * xi.p;
  const Vec3 vF = vL + RL * xi.v;
  const Mat3 RLj = RL * L.R, RFj = RF * F.R;
  const Vec3 vLj = vL + g * T + RL * L.v, vFj = vF + g * T + RF * F.v;
  const Vec3 pLj = pL + vL * T + 0.5 * g * T * T + RL * L.p;
  const Vec3 pFj = pF + vF * T + 0.5 * g * T * T + RF * F.p;
  dpi::RelativeState out;
  out.R = dpi::Rotation::nearest(RLj.transpose() * RFj);
  out.p = RLj.transpose() * (pFj - pLj);
  out.v = RLj.transpose() * (vFj - vLj);
  return out;
}

/// Central finite differences of f: R^n -> R^m at zero.
inline Eigen::MatrixXd numerical_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                          int n, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(Eigen::VectorXd::Zero(n));
  Eigen::MatrixXd J(f0.size(), n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
    d[i] = h;
    J.col(i) = (f(d) - f(-d)) / (2.0 * h);
  }
  return J;
}

/// ||A - B|| relative to the larger of the two norms (floored at 1).
inline double relative_error(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  return (A - B).norm() / std::max({A.norm(), B.norm(), 1.0});
}

/// Sample covariance of the columns of X (rows are dimensions).
inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& X) {
  const Eigen::VectorXd mean = X.rowwise().mean();
  const Eigen::MatrixXd C = X.colwise() - mean;
  return C * C.transpose() / static_cast<double>(X.cols() - 1);
}

/// Random IMU samples with moderate rates and accelerations.
inline std::vector<dpi::ImuSample> random_samples(std::mt19937_64& rng, int n, double dt) {
  std::vector<dpi::ImuSample> s(n);
  for (auto& x : s) {
    x.gyro = random_vec(rng, 1.0);
    x.accel = random_vec(rng, 2.0) + Vec3(0.0, 0.0, 9.81);
    x.dt = dt;
  }
  return s;
}

inline dpi::FullState random_state(std::mt19937_64& rng) {
  dpi::FullState x;
  x.s.R = dpi::Rotation::nearest(random_rotation_matrix(rng));
  x.s.p = random_vec(rng, 1.0);
  x.s.v = random_vec(rng, 0.5);
  x.follower = {random_vec(rng, 0.01), random_vec(rng, 0.1)};
  x.leader = {random_vec(rng, 0.01), random_vec(rng, 0.1)};
  return x;
}

}  // namespace oracle
