#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "dpi/dual_preintegration.hpp"

namespace dpi {

using Mat9x12 = Eigen::Matrix<double, 9, 12>;

/// Bias-vector ordering inside the 12 bias columns.
namespace bidx {
inline constexpr int kFg = 0;
inline constexpr int kFa = 3;
inline constexpr int kLg = 6;
inline constexpr int kLa = 9;
}  // namespace bidx

enum class MotionCase { kGeneral = 0, kCase1 = 1, kCase2 = 2, kCase3 = 3, kCase4 = 4 };

std::string to_string(MotionCase c);

/// Declared motion pattern. axis is the relative angular velocity direction
/// omega_F^L = R omega_F - omega_L in the leader frame (cases 2 and 4).
struct MotionCaseSpec {
  MotionCase id = MotionCase::kGeneral;
  Vec3 axis = Vec3::UnitZ();

  std::string description() const;
};

/// Bias columns of the measurement Jacobians with the rotation rows
/// premultiplied by Jr^-1(r_bar). Rows are (rotation, velocity, position).
Mat9x12 assemble_bias_jacobian(const DualPreintegrationFactor& f, const Vec3& r_bar = Vec3::Zero());

/// Orthonormal basis (columns) of right singular vectors whose singular
/// value is below tol * sigma_max. A zero matrix yields the identity.
Eigen::MatrixXd null_space(const Eigen::MatrixXd& J, double tol = 1e-8);

/// Predicted unobservable directions, 12 x k each, columns unit norm.
struct PredictedDirections {
  Eigen::MatrixXd accel;  // composite accelerometer family
  Eigen::MatrixXd gyro;   // composite gyroscope family
  Eigen::MatrixXd all() const;
};

/**
 * Directions built as (db_F, db_L) = (R_i^T u, u). With printed_variant the
 * follower part uses R_i u instead, for comparison against the alternative
 * reading of the block matrix. Throws Error(kUnsupportedCase) for kGeneral.
 */
PredictedDirections predicted_null_directions(const FullState& x_i, const MotionCaseSpec& spec,
                                              bool printed_variant = false);

struct ObservabilityReport {
  Mat9x12 J = Mat9x12::Zero();
  Eigen::VectorXd singular_values;
  int rank = 0;
  Eigen::MatrixXd null_basis;
  MotionCase declared = MotionCase::kGeneral;
  MotionCase matched = MotionCase::kGeneral;
  std::vector<double> direction_residuals;  // |J n| / sigma_max, predicted set
  std::vector<double> variant_residuals;    // same for the printed variant
};

ObservabilityReport analyze_factor(const DualPreintegrationFactor& f, const MotionCaseSpec& spec,
                                   double tol = 1e-8);

struct WindowObservability {
  std::vector<ObservabilityReport> factors;
  Eigen::VectorXd stacked_singular_values;
  int stacked_rank = 0;
  Eigen::MatrixXd intersection;  // 12 x k, persistently unobservable
  std::size_t predicted_accel = 0;
  std::size_t predicted_gyro = 0;
  double max_direction_residual = 0.0;
  double max_variant_residual = 0.0;
};

/// Per-factor analysis plus the null space of the stacked (per-factor
/// normalized) bias Jacobians. Needs at least two factors.
WindowObservability classify_window(const std::vector<DualPreintegrationFactor>& factors,
                                    const MotionCaseSpec& spec, double tol = 1e-8);

}  // namespace dpi
