#include "dpi/observability.hpp"

#include <Eigen/SVD>
#include <algorithm>

#include "dpi/errors.hpp"

namespace dpi {

std::string to_string(MotionCase c) {
  switch (c) {
    case MotionCase::kGeneral: return "general";
    case MotionCase::kCase1: return "case1";
    case MotionCase::kCase2: return "case2";
    case MotionCase::kCase3: return "case3";
    case MotionCase::kCase4: return "case4";
  }
  return "unknown";
}

std::string MotionCaseSpec::description() const {
  switch (id) {
    case MotionCase::kGeneral: return "general relative motion";
    case MotionCase::kCase1: return "zero relative angular velocity";
    case MotionCase::kCase2: return "relative angular velocity along a fixed axis";
    case MotionCase::kCase3: return "zero relative angular velocity, p = 0, v = 0";
    case MotionCase::kCase4: return "fixed-axis relative rotation with p and v along the axis";
  }
  return "";
}

Mat9x12 assemble_bias_jacobian(const DualPreintegrationFactor& f, const Vec3& r_bar) {
  Mat9x12 J;
  J.block<3, 12>(0, 0) = right_jacobian_inv(r_bar) * f.dR_dx().rightCols<12>();
  J.block<3, 12>(3, 0) = f.dv_dx().rightCols<12>();
  J.block<3, 12>(6, 0) = f.dp_dx().rightCols<12>();
  return J;
}

Eigen::MatrixXd null_space(const Eigen::MatrixXd& J, double tol) {
  const int n = static_cast<int>(J.cols());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  int rank = 0;
  if (smax > 0.0) {
    for (int k = 0; k < s.size(); ++k) if (s(k) >= tol * smax) ++rank;
  }
  return svd.matrixV().rightCols(n - rank);
}

Eigen::MatrixXd PredictedDirections::all() const {
  Eigen::MatrixXd out(12, accel.cols() + gyro.cols());
  out << accel, gyro;
  return out;
}

namespace {

Eigen::MatrixXd family(const Mat3& RiT, const Eigen::MatrixXd& U, int off_f, int off_l) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(12, U.cols());
  for (int c = 0; c < U.cols(); ++c) {
    const Vec3 u = U.col(c);
    D.block<3, 1>(off_f, c) = RiT * u;
    D.block<3, 1>(off_l, c) = u;
    D.col(c).normalize();
  }
  return D;
}

}  // namespace

PredictedDirections predicted_null_directions(const FullState& x_i, const MotionCaseSpec& spec,
                                              bool printed_variant) {
  const Mat3& Ri = x_i.s.R.matrix();
  const Mat3 M = printed_variant ? Ri : Mat3(Ri.transpose());
  const Eigen::MatrixXd all3 = Mat3::Identity();
  const Eigen::MatrixXd axis = spec.axis.normalized();
  PredictedDirections out;
  out.gyro.resize(12, 0);
  switch (spec.id) {
    case MotionCase::kCase1:
      out.accel = family(M, all3, bidx::kFa, bidx::kLa);
      break;
    case MotionCase::kCase2:
      out.accel = family(M, axis, bidx::kFa, bidx::kLa);
      break;
    case MotionCase::kCase3:
      out.accel = family(M, all3, bidx::kFa, bidx::kLa);
      out.gyro = family(M, all3, bidx::kFg, bidx::kLg);
      break;
    case MotionCase::kCase4:
      out.accel = family(M, axis, bidx::kFa, bidx::kLa);
      out.gyro = family(M, axis, bidx::kFg, bidx::kLg);
      break;
    default:
      throw Error(ErrorCode::kUnsupportedCase, "no predicted null directions for general motion");
  }
  return out;
}

ObservabilityReport analyze_factor(const DualPreintegrationFactor& f, const MotionCaseSpec& spec,
                                   double tol) {
  ObservabilityReport rep;
  rep.J = assemble_bias_jacobian(f);
  rep.declared = spec.id;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rep.J);
  rep.singular_values = svd.singularValues();
  const double smax = rep.singular_values(0);
  for (int k = 0; k < rep.singular_values.size(); ++k) {
    if (rep.singular_values(k) >= tol * smax) ++rep.rank;
  }
  rep.null_basis = null_space(rep.J, tol);
  if (spec.id == MotionCase::kGeneral) return rep;

  const Eigen::MatrixXd D = predicted_null_directions(f.linearization_point(), spec).all();
  const Eigen::MatrixXd V = predicted_null_directions(f.linearization_point(), spec, true).all();
  bool ok = true;
  for (int c = 0; c < D.cols(); ++c) {
    const double r = (rep.J * D.col(c)).norm() / smax;
    rep.direction_residuals.push_back(r);
    ok = ok && r <= tol;
    rep.variant_residuals.push_back((rep.J * V.col(c)).norm() / smax);
  }
  rep.matched = ok ? spec.id : MotionCase::kGeneral;
  return rep;
}

WindowObservability classify_window(const std::vector<DualPreintegrationFactor>& factors,
                                    const MotionCaseSpec& spec, double tol) {
  if (factors.size() < 2) throw Error(ErrorCode::kData, "window classification needs at least two factors");
  WindowObservability out;
  Eigen::MatrixXd S(9 * factors.size(), 12);
  for (std::size_t k = 0; k < factors.size(); ++k) {
    out.factors.push_back(analyze_factor(factors[k], spec, tol));
    const ObservabilityReport& r = out.factors.back();
    S.middleRows<9>(9 * k) = r.J / r.singular_values(0);
    for (double v : r.direction_residuals) out.max_direction_residual = std::max(out.max_direction_residual, v);
    for (double v : r.variant_residuals) out.max_variant_residual = std::max(out.max_variant_residual, v);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(S);
  out.stacked_singular_values = svd.singularValues();
  const double smax = out.stacked_singular_values(0);
  for (int k = 0; k < out.stacked_singular_values.size(); ++k) {
    if (out.stacked_singular_values(k) >= tol * smax) ++out.stacked_rank;
  }
  out.intersection = null_space(S, tol);
  if (spec.id != MotionCase::kGeneral) {
    const PredictedDirections p = predicted_null_directions(factors.front().linearization_point(), spec);
    out.predicted_accel = p.accel.cols();
    out.predicted_gyro = p.gyro.cols();
  }
  return out;
}

}  // namespace dpi
