#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "dpi/dual_preintegration.hpp"

namespace dpi {

/// Pinhole camera rigidly aligned with the leader body frame (z forward).
struct CameraModel {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
  double pixel_sigma = 1.0;

  void validate() const;
  bool in_image(const Vec2& px) const;
};

struct Marker {
  int id = 0;
  Vec3 position = Vec3::Zero();  // follower body frame
};

struct FeatureObservation {
  int marker_id = 0;
  Vec2 pixel = Vec2::Zero();
  double t = 0.0;
};

/// Throws Error(kBehindCamera) when the point depth is <= 1e-6 m.
Vec2 project(const RelativeState& s, const Marker& m, const CameraModel& cam);
std::optional<Vec2> try_project(const RelativeState& s, const Marker& m, const CameraModel& cam);

struct ReprojectionResult {
  Vec2 residual;                      // predicted - observed, pixels
  Eigen::Matrix<double, 2, 9> jacobian;  // over (dtheta, dp, dv)
};

ReprojectionResult reprojection_residual_and_jacobian(const RelativeState& s, const Marker& m,
                                                    const CameraModel& cam,
                                                    const FeatureObservation& obs);

/// 24 markers on a 5 cm ring in the follower x-y plane plus 4 off-plane points.
std::vector<Marker> default_marker_layout();

}  // namespace dpi
