#pragma once

#include <Eigen/Core>

#include "dpi/lie.hpp"
#include "dpi/preintegration.hpp"

namespace dpi {

using Mat21 = Eigen::Matrix<double, 21, 21>;
using Vec21 = Eigen::Matrix<double, 21, 1>;
using Mat3x21 = Eigen::Matrix<double, 3, 21>;
using Mat9x21 = Eigen::Matrix<double, 9, 21>;
using Mat9x18 = Eigen::Matrix<double, 9, 18>;

/// Follower pose and velocity in the leader body frame. v is the rotated
/// world-frame velocity difference R_WL^T (v_F - v_L), not d/dt of p.
struct RelativeState {
  Rotation R;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
};

struct FullState {
  RelativeState s;
  Bias follower;
  Bias leader;
};

/// Offsets into the 21-dim tangent vector of FullState.
namespace idx {
inline constexpr int kTheta = 0;
inline constexpr int kP = 3;
inline constexpr int kV = 6;
inline constexpr int kFg = 9;
inline constexpr int kFa = 12;
inline constexpr int kLg = 15;
inline constexpr int kLa = 18;
}  // namespace idx

/// Residual / error ordering is (rotation, velocity, position).
namespace ridx {
inline constexpr int kR = 0;
inline constexpr int kV = 3;
inline constexpr int kP = 6;
}  // namespace ridx

using StateDelta = Vec21;

/// R <- R Exp(dtheta); everything else additive.
FullState retract(const FullState& x, const StateDelta& d);
/// Inverse of retract(): x = retract(x0, local(x0, x)).
StateDelta local(const FullState& x0, const FullState& x);

/// Relative state at t_j from the state at t_i and the two platforms'
/// preintegrations, bias-corrected at the biases held in x_i.
RelativeState predict(const FullState& x_i, const Preintegration& pre_f,
                      const Preintegration& pre_l);

/**
 * Relative-state measurement between two keyframes, synthesized from the
 * follower and leader preintegrations.
 *
 * The linearization point is frozen at build(); subsequent evaluations at
 * other states use the stored first-order Jacobians and never re-integrate.
 */
class DualPreintegrationFactor {
 public:
  /// Throws Error(kWindowMismatch) when the two windows differ by > 1e-9 s.
  static DualPreintegrationFactor build(const FullState& x_bar, const Preintegration& pre_f,
                                        const Preintegration& pre_l);

  const RelativeState& nominal() const { return nominal_; }
  const Mat9& covariance() const { return cov_; }
  const FullState& linearization_point() const { return x_bar_; }
  /// Noise map w = Phi n with n = (n_F, n_L), each ordered (dphi, dv, dp).
  const Mat9x18& noise_map() const { return phi_; }
  const Mat3x21& dR_dx() const { return dR_; }
  const Mat3x21& dv_dx() const { return dv_; }
  const Mat3x21& dp_dx() const { return dp_; }
  double dt() const { return dt_; }
  const Preintegration& follower() const { return pre_f_; }
  const Preintegration& leader() const { return pre_l_; }

  /// First-order measurement at x_bar (+) dx.
  RelativeState update_measurement(const StateDelta& dx) const;

  /// r = (Log(R_j^T R~_j), v~_j - v_j, p~_j - p_j).
  Vec9 residual(const FullState& x_i, const FullState& x_j) const;

  struct Jacobians {
    Mat9x21 xi;                        // over the 21-dim delta of x_i
    Eigen::Matrix<double, 9, 9> xj;    // over (dtheta, dp, dv) of x_j
  };
  Jacobians residual_jacobians(const FullState& x_i, const FullState& x_j) const;

 private:
  FullState x_bar_;
  RelativeState nominal_;
  Mat9 cov_ = Mat9::Zero();
  Mat9x18 phi_ = Mat9x18::Zero();
  Mat3x21 dR_ = Mat3x21::Zero();
  Mat3x21 dv_ = Mat3x21::Zero();
  Mat3x21 dp_ = Mat3x21::Zero();
  double dt_ = 0.0;
  Preintegration pre_f_;
  Preintegration pre_l_;
};

}  // namespace dpi
