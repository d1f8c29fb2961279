#include "dpi/dual_preintegration.hpp"

#include <cmath>
#include <sstream>

#include "dpi/errors.hpp"

namespace dpi {

namespace {

void check_window(const Preintegration& f, const Preintegration& l) {
  if (std::abs(f.dt() - l.dt()) > 1e-9) {
    std::ostringstream os;
    os << "follower window " << f.dt() << " s does not match leader window " << l.dt() << " s";
    throw Error(ErrorCode::kWindowMismatch, os.str());
  }
}

}  // namespace

FullState retract(const FullState& x, const StateDelta& d) {
  FullState out = x;
  out.s.R = x.s.R * exp_map(d.segment<3>(idx::kTheta));
  out.s.p += d.segment<3>(idx::kP);
  out.s.v += d.segment<3>(idx::kV);
  out.follower.gyro += d.segment<3>(idx::kFg);
  out.follower.accel += d.segment<3>(idx::kFa);
  out.leader.gyro += d.segment<3>(idx::kLg);
  out.leader.accel += d.segment<3>(idx::kLa);
  return out;
}

StateDelta local(const FullState& x0, const FullState& x) {
  StateDelta d;
  d.segment<3>(idx::kTheta) = log_map(x0.s.R.transpose() * x.s.R);
  d.segment<3>(idx::kP) = x.s.p - x0.s.p;
  d.segment<3>(idx::kV) = x.s.v - x0.s.v;
  d.segment<3>(idx::kFg) = x.follower.gyro - x0.follower.gyro;
  d.segment<3>(idx::kFa) = x.follower.accel - x0.follower.accel;
  d.segment<3>(idx::kLg) = x.leader.gyro - x0.leader.gyro;
  d.segment<3>(idx::kLa) = x.leader.accel - x0.leader.accel;
  return d;
}

RelativeState predict(const FullState& x_i, const Preintegration& pre_f,
                      const Preintegration& pre_l) {
  check_window(pre_f, pre_l);
  const DeltaTriple f = correct_for_bias(pre_f, x_i.follower);
  const DeltaTriple l = correct_for_bias(pre_l, x_i.leader);
  const Mat3& Ri = x_i.s.R.matrix();
  const Mat3 RLt = l.R.matrix().transpose();
  RelativeState out;
  out.R = l.R.transpose() * x_i.s.R * f.R;
  out.v = RLt * (Ri * f.v - l.v + x_i.s.v);
  out.p = RLt * (Ri * f.p - l.p + x_i.s.p + x_i.s.v * pre_f.dt());
  return out;
}

DualPreintegrationFactor DualPreintegrationFactor::build(const FullState& x_bar,
                                                         const Preintegration& pre_f,
                                                         const Preintegration& pre_l) {
  check_window(pre_f, pre_l);
  DualPreintegrationFactor fac;
  fac.x_bar_ = x_bar;
  fac.pre_f_ = pre_f;
  fac.pre_l_ = pre_l;
  fac.dt_ = pre_f.dt();
  fac.nominal_ = predict(x_bar, pre_f, pre_l);

  const DeltaTriple f = correct_for_bias(pre_f, x_bar.follower);
  const DeltaTriple l = correct_for_bias(pre_l, x_bar.leader);
  const Mat3& Ri = x_bar.s.R.matrix();
  const Mat3 RLt = l.R.matrix().transpose();
  const Mat3 RLtRi = RLt * Ri;
  const Mat3 Rjt = fac.nominal_.R.matrix().transpose();
  const Vec3& vj = fac.nominal_.v;
  const Vec3& pj = fac.nominal_.p;

  // Measurement-update Jacobians.
  fac.dR_.block<3, 3>(0, idx::kTheta) = f.R.matrix().transpose();
  fac.dR_.block<3, 3>(0, idx::kFg) = pre_f.dR_dbg();
  fac.dR_.block<3, 3>(0, idx::kLg) = -Rjt * pre_l.dR_dbg();

  fac.dv_.block<3, 3>(0, idx::kTheta) = -RLtRi * hat(f.v);
  fac.dv_.block<3, 3>(0, idx::kV) = RLt;
  fac.dv_.block<3, 3>(0, idx::kFg) = RLtRi * pre_f.dv_dbg();
  fac.dv_.block<3, 3>(0, idx::kFa) = RLtRi * pre_f.dv_dba();
  fac.dv_.block<3, 3>(0, idx::kLg) = hat(vj) * pre_l.dR_dbg() - RLt * pre_l.dv_dbg();
  fac.dv_.block<3, 3>(0, idx::kLa) = -RLt * pre_l.dv_dba();

  fac.dp_.block<3, 3>(0, idx::kTheta) = -RLtRi * hat(f.p);
  fac.dp_.block<3, 3>(0, idx::kP) = RLt;
  fac.dp_.block<3, 3>(0, idx::kV) = RLt * fac.dt_;
  fac.dp_.block<3, 3>(0, idx::kFg) = RLtRi * pre_f.dp_dbg();
  fac.dp_.block<3, 3>(0, idx::kFa) = RLtRi * pre_f.dp_dba();
  fac.dp_.block<3, 3>(0, idx::kLg) = hat(pj) * pre_l.dR_dbg() - RLt * pre_l.dp_dbg();
  fac.dp_.block<3, 3>(0, idx::kLa) = -RLt * pre_l.dp_dba();

  // Noise map. The rotation row is dalpha = dphi_F - R_j^T dphi_L, which
  // follows from DeltaR = DeltaR~ Exp(-dphi) for both platforms.
  Mat9x18& phi = fac.phi_;
  phi.block<3, 3>(0, 0) = Mat3::Identity();
  phi.block<3, 3>(3, 3) = RLtRi;
  phi.block<3, 3>(6, 6) = RLtRi;
  phi.block<3, 3>(0, 9) = -Rjt;
  phi.block<3, 3>(3, 9) = hat(vj);
  phi.block<3, 3>(3, 12) = -RLt;
  phi.block<3, 3>(6, 9) = hat(pj);
  phi.block<3, 3>(6, 15) = -RLt;

  Eigen::Matrix<double, 18, 18> n = Eigen::Matrix<double, 18, 18>::Zero();
  n.block<9, 9>(0, 0) = pre_f.covariance();
  n.block<9, 9>(9, 9) = pre_l.covariance();
  fac.cov_ = phi * n * phi.transpose();
  fac.cov_ = 0.5 * (fac.cov_ + fac.cov_.transpose());
  return fac;
}

RelativeState DualPreintegrationFactor::update_measurement(const StateDelta& dx) const {
  RelativeState out;
  out.R = nominal_.R * exp_map(dR_ * dx);
  out.v = nominal_.v + dv_ * dx;
  out.p = nominal_.p + dp_ * dx;
  return out;
}

Vec9 DualPreintegrationFactor::residual(const FullState& x_i, const FullState& x_j) const {
  const RelativeState m = update_measurement(local(x_bar_, x_i));
  Vec9 r;
  r.segment<3>(ridx::kR) = log_map(x_j.s.R.transpose() * m.R);
  r.segment<3>(ridx::kV) = m.v - x_j.s.v;
  r.segment<3>(ridx::kP) = m.p - x_j.s.p;
  return r;
}

DualPreintegrationFactor::Jacobians DualPreintegrationFactor::residual_jacobians(
    const FullState& x_i, const FullState& x_j) const {
  const StateDelta dx = local(x_bar_, x_i);
  const Vec3 phi = dR_ * dx;
  const Rotation m_R = nominal_.R * exp_map(phi);
  const Vec3 rR = log_map(x_j.s.R.transpose() * m_R);

  // d(dx)/d(perturbation of x_i): identity except on the rotation block,
  // where Log(Rbar^T R Exp(e)) moves by Jr^-1(dtheta) e.
  Mat21 D = Mat21::Identity();
  D.block<3, 3>(idx::kTheta, idx::kTheta) = right_jacobian_inv(dx.segment<3>(idx::kTheta));

  Jacobians J;
  J.xi.setZero();
  J.xi.block<3, 21>(ridx::kR, 0) = right_jacobian_inv(rR) * right_jacobian(phi) * dR_ * D;
  J.xi.block<3, 21>(ridx::kV, 0) = dv_ * D;
  J.xi.block<3, 21>(ridx::kP, 0) = dp_ * D;

  J.xj.setZero();
  J.xj.block<3, 3>(ridx::kR, idx::kTheta) = -right_jacobian_inv(-rR);
  J.xj.block<3, 3>(ridx::kV, idx::kV) = -Mat3::Identity();
  J.xj.block<3, 3>(ridx::kP, idx::kP) = -Mat3::Identity();
  return J;
}

}  // namespace dpi
