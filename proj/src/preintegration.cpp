#include "dpi/preintegration.hpp"

#include <cmath>
#include <sstream>

#include "dpi/errors.hpp"

namespace dpi {

ImuNoiseModel ImuNoiseModel::scaled(double eps) const {
  ImuNoiseModel out = *this;
  out.gyro_noise *= eps;
  out.accel_noise *= eps;
  out.gyro_walk *= eps;
  out.accel_walk *= eps;
  return out;
}

void ImuNoiseModel::validate(bool require_positive) const {
  const double vals[] = {gyro_noise, accel_noise, gyro_walk, accel_walk};
  for (double s : vals) {
    if (!std::isfinite(s) || s < 0.0 || (require_positive && s == 0.0)) {
      throw Error(ErrorCode::kConfig, "IMU noise densities must be finite and positive");
    }
  }
  if (!gravity.allFinite()) throw Error(ErrorCode::kConfig, "gravity must be finite");
}

Preintegration Preintegration::with_covariance(const Mat9& cov) const {
  Preintegration out = *this;
  out.cov_ = 0.5 * (cov + cov.transpose());
  return out;
}

Preintegration integrate(std::span<const ImuSample> samples, const Bias& b,
                         const ImuNoiseModel& noise) {
  if (samples.empty()) throw Error(ErrorCode::kEmptySampleSet, "preintegration needs at least one sample");

  Preintegration out;
  out.bias_ = b;
  const Mat3 I = Mat3::Identity();
  const double qg = noise.gyro_noise * noise.gyro_noise;
  const double qa = noise.accel_noise * noise.accel_noise;

  Eigen::Matrix<double, 9, 9> A;
  Eigen::Matrix<double, 9, 3> Bg, Ba;
  for (const ImuSample& s : samples) {
    const double dt = s.dt;
    if (!(dt > 0.0 && dt <= 0.1) || !s.gyro.allFinite() || !s.accel.allFinite()) {
      std::ostringstream os;
      os << "invalid IMU sample (dt = " << dt << ")";
      throw Error(ErrorCode::kData, os.str());
    }
    const double dt2 = dt * dt;
    const Vec3 w = s.gyro - b.gyro;
    const Vec3 a = s.accel - b.accel;
    const Rotation dRk = exp_map(w * dt);
    const Mat3 Jr = right_jacobian(w * dt);
    const Mat3& R = out.dR_.matrix();
    const Mat3 Ra_hat = R * hat(a);

    // Error-state transition on (dphi, dv, dp), old values on the right.
    A.setZero();
    A.block<3, 3>(0, 0) = dRk.matrix().transpose();
    A.block<3, 3>(3, 0) = -Ra_hat * dt;
    A.block<3, 3>(3, 3) = I;
    A.block<3, 3>(6, 0) = -0.5 * Ra_hat * dt2;
    A.block<3, 3>(6, 3) = I * dt;
    A.block<3, 3>(6, 6) = I;
    Bg.setZero();
    Bg.block<3, 3>(0, 0) = Jr * dt;
    Ba.setZero();
    Ba.block<3, 3>(3, 0) = R * dt;
    Ba.block<3, 3>(6, 0) = 0.5 * R * dt2;
    out.cov_ = A * out.cov_ * A.transpose() + (qg / dt) * Bg * Bg.transpose() +
               (qa / dt) * Ba * Ba.transpose();

    out.J_pba_ += out.J_vba_ * dt - 0.5 * R * dt2;
    out.J_pbg_ += out.J_vbg_ * dt - 0.5 * Ra_hat * out.J_Rbg_ * dt2;
    out.J_vba_ -= R * dt;
    out.J_vbg_ -= Ra_hat * out.J_Rbg_ * dt;
    out.J_Rbg_ = dRk.matrix().transpose() * out.J_Rbg_ - Jr * dt;

    out.dp_ += out.dv_ * dt + 0.5 * (R * a) * dt2;
    out.dv_ += R * a * dt;
    out.dR_ = out.dR_ * dRk;
    out.dt_ += dt;
    ++out.n_;
  }
  out.cov_ = 0.5 * (out.cov_ + out.cov_.transpose());
  return out;
}

DeltaTriple correct_for_bias(const Preintegration& pre, const Bias& b) {
  const Vec3 dbg = b.gyro - pre.bias().gyro;
  const Vec3 dba = b.accel - pre.bias().accel;
  DeltaTriple out;
  out.R = pre.delta_R() * exp_map(pre.dR_dbg() * dbg);
  out.v = pre.delta_v() + pre.dv_dbg() * dbg + pre.dv_dba() * dba;
  out.p = pre.delta_p() + pre.dp_dbg() * dbg + pre.dp_dba() * dba;
  return out;
}

std::pair<Mat3, Mat3> bias_random_walk_covariance(const ImuNoiseModel& noise, double dt) {
  return {dt * noise.gyro_walk * noise.gyro_walk * Mat3::Identity(),
          dt * noise.accel_walk * noise.accel_walk * Mat3::Identity()};
}

}  // namespace dpi
