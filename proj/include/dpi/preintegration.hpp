#pragma once

#include <Eigen/Core>
#include <span>
#include <utility>

#include "dpi/lie.hpp"

namespace dpi {

using Mat9 = Eigen::Matrix<double, 9, 9>;
using Vec9 = Eigen::Matrix<double, 9, 1>;

struct ImuSample {
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2, specific force
  double dt = 0.0;            // s
};

/// Continuous-time IMU noise densities. Defaults are the simulation values
/// used throughout the test suite.
struct ImuNoiseModel {
  double gyro_noise = 1.528e-3;    // rad/(s sqrt(Hz))
  double accel_noise = 1.244e-2;   // m/(s^2 sqrt(Hz))
  double gyro_walk = 1.867e-4;     // rad/(s^2 sqrt(Hz))
  double accel_walk = 7.841e-3;    // m/(s^3 sqrt(Hz))
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);

  /// All four densities multiplied by eps.
  ImuNoiseModel scaled(double eps) const;
  /// Throws Error(kConfig) on negative or non-finite values. With
  /// require_positive the densities must also be strictly positive.
  void validate(bool require_positive = true) const;
};

struct Bias {
  Vec3 gyro = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
};

/**
 * Preintegrated increments of one IMU between two keyframes.
 *
 * Built by integrate(). The nominal terms are evaluated at the linearization
 * bias; the covariance is ordered (dphi, dv, dp) with the convention
 * DeltaR_nominal = DeltaR_true * Exp(dphi).
 */
class Preintegration {
 public:
  Preintegration() = default;

  const Rotation& delta_R() const { return dR_; }
  const Vec3& delta_v() const { return dv_; }
  const Vec3& delta_p() const { return dp_; }
  const Mat9& covariance() const { return cov_; }
  const Mat3& dR_dbg() const { return J_Rbg_; }
  const Mat3& dv_dbg() const { return J_vbg_; }
  const Mat3& dv_dba() const { return J_vba_; }
  const Mat3& dp_dbg() const { return J_pbg_; }
  const Mat3& dp_dba() const { return J_pba_; }
  const Bias& bias() const { return bias_; }
  double dt() const { return dt_; }
  std::size_t size() const { return n_; }

  /// Copy with a replaced covariance (used for noise-scaling studies).
  Preintegration with_covariance(const Mat9& cov) const;

 private:
  friend Preintegration integrate(std::span<const ImuSample>, const Bias&, const ImuNoiseModel&);

  Rotation dR_;
  Vec3 dv_ = Vec3::Zero();
  Vec3 dp_ = Vec3::Zero();
  Mat9 cov_ = Mat9::Zero();
  Mat3 J_Rbg_ = Mat3::Zero();
  Mat3 J_vbg_ = Mat3::Zero();
  Mat3 J_vba_ = Mat3::Zero();
  Mat3 J_pbg_ = Mat3::Zero();
  Mat3 J_pba_ = Mat3::Zero();
  Bias bias_;
  double dt_ = 0.0;
  std::size_t n_ = 0;
};

/// Zero-order-hold preintegration of samples at bias b. Throws
/// Error(kEmptySampleSet) on an empty range and Error(kData) on a bad dt.
Preintegration integrate(std::span<const ImuSample> samples, const Bias& b,
                         const ImuNoiseModel& noise);

struct DeltaTriple {
  Rotation R;
  Vec3 v = Vec3::Zero();
  Vec3 p = Vec3::Zero();
};

/// First-order bias correction of the nominal increments.
DeltaTriple correct_for_bias(const Preintegration& pre, const Bias& b);

/// Bias random-walk covariances (Sigma_g, Sigma_a) over an interval dt.
std::pair<Mat3, Mat3> bias_random_walk_covariance(const ImuNoiseModel& noise, double dt);

}  // namespace dpi
