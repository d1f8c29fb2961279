#include "dpi/vision.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "dpi/errors.hpp"

namespace dpi {

namespace {
constexpr double kMinDepth = 1e-6;
}

void CameraModel::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw Error(ErrorCode::kConfig, "camera focal lengths must be positive");
  if (!(pixel_sigma > 0.0)) throw Error(ErrorCode::kConfig, "camera pixel_sigma must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::kConfig, "camera image size must be positive");
}

bool CameraModel::in_image(const Vec2& px) const {
  return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < width && px.y() < height;
}

Vec2 project(const RelativeState& s, const Marker& m, const CameraModel& cam) {
  const Vec3 pc = s.R * m.position + s.p;
  if (pc.z() <= kMinDepth) {
    std::ostringstream os;
    os << "marker " << m.id << " has depth " << pc.z();
    throw Error(ErrorCode::kBehindCamera, os.str());
  }
  return Vec2(cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy);
}

std::optional<Vec2> try_project(const RelativeState& s, const Marker& m, const CameraModel& cam) {
  const Vec3 pc = s.R * m.position + s.p;
  if (pc.z() <= kMinDepth) return std::nullopt;
  return Vec2(cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy);
}

ReprojectionResult reprojection_residual_and_jacobian(const RelativeState& s, const Marker& m,
                                                    const CameraModel& cam,
                                                    const FeatureObservation& obs) {
  const Vec2 px = project(s, m, cam);
  const Vec3 pc = s.R * m.position + s.p;
  const double iz = 1.0 / pc.z();
  Eigen::Matrix<double, 2, 3> dpi_dx;
  dpi_dx << cam.fx * iz, 0.0, -cam.fx * pc.x() * iz * iz,
            0.0, cam.fy * iz, -cam.fy * pc.y() * iz * iz;

  ReprojectionResult out;
  out.residual = px - obs.pixel;
  out.jacobian.setZero();
  out.jacobian.block<2, 3>(0, idx::kTheta) = -dpi_dx * s.R.matrix() * hat(m.position);
  out.jacobian.block<2, 3>(0, idx::kP) = dpi_dx;
  return out;
}

std::vector<Marker> default_marker_layout() {
  std::vector<Marker> out;
  constexpr int kRing = 24;
  constexpr double kRadius = 0.05;
  for (int k = 0; k < kRing; ++k) {
    const double a = 2.0 * std::numbers::pi * k / kRing;
    out.push_back({k, Vec3(kRadius * std::cos(a), kRadius * std::sin(a), 0.0)});
  }
  out.push_back({kRing + 0, Vec3(0.0, 0.0, -0.04)});
  out.push_back({kRing + 1, Vec3(0.02, 0.0, -0.02)});
  out.push_back({kRing + 2, Vec3(-0.02, 0.02, 0.03)});
  out.push_back({kRing + 3, Vec3(0.0, -0.03, 0.02)});
  return out;
}

}  // namespace dpi
