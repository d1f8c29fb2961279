#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpi/dual_preintegration.hpp"
#include "dpi/observability.hpp"
#include "dpi/preintegration.hpp"
#include "dpi/vision.hpp"

namespace dpi {

/// Leader angular-rate profile about its body z axis (the optical axis).
struct AngularProfile {
  enum class Kind { kZero, kConstant, kHarmonic, kStochastic };
  Kind kind = Kind::kConstant;
  double magnitude = 3.141592653589793;  // rad/s (std-dev for kStochastic)
  double frequency = 1.0;                // Hz, harmonic only

  double rate(double t) const;
  double rate_derivative(double t) const;
};

enum class FollowerMode {
  kStatic,     // no rotation
  kFree,       // three-axis harmonic body rates
  kFixedAxis,  // harmonic rate about one body axis
  kLocked,     // zero relative angular velocity
};

struct TrajectoryConfig {
  double duration = 10.0;
  double imu_rate = 250.0;
  double camera_rate = 25.0;
  /// Truth integration steps per IMU tick. 1 gives truth that the
  /// zero-order-hold preintegration reproduces exactly.
  int oversample = 10;

  AngularProfile leader;
  Vec3 leader_tilt = Vec3(0.3, -0.2, 0.1);  // base attitude, rotation vector

  FollowerMode follower = FollowerMode::kFree;
  Vec3 follower_rate_amplitude = Vec3(0.8, 0.6, 0.7);  // rad/s
  Vec3 follower_rate_frequency = Vec3(0.31, 0.23, 0.17);  // Hz
  Vec3 follower_axis = Vec3::UnitX();  // body axis for kFixedAxis
  Vec3 relative_tilt = Vec3::Zero();   // initial R_L^T R_F, rotation vector

  /// Follower position in the leader frame: offset + amplitude .* sin(2 pi f t + phase_k).
  Vec3 relative_offset = Vec3(0.0, 0.0, 1.0);
  Vec3 relative_amplitude = Vec3(0.1, 0.1, 0.1);
  Vec3 relative_phase = Vec3(0.0, 1.0, 2.0);
  double relative_frequency = 0.2;

  /// Common world translation amplitude .* sin(2 pi f t).
  Vec3 common_amplitude = Vec3(1.0, 1.0, 0.5);
  double common_frequency = 0.1;

  Bias follower_bias;
  Bias leader_bias;
  bool bias_walk = true;
  double gyro_walk = 1.867e-4;   // rad/(s^2 sqrt(Hz))
  double accel_walk = 7.841e-3;  // m/(s^3 sqrt(Hz))
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  std::uint64_t seed = 1;

  void validate() const;
  int imu_per_frame() const;
};

struct PlatformTrack {
  std::vector<Rotation> R;      // body to world
  std::vector<Vec3> p;          // world
  std::vector<Vec3> v;          // world
  std::vector<Vec3> omega;      // body angular rate
  std::vector<Vec3> accel;      // body specific force
  std::vector<Bias> bias;
};

/// Ground truth sampled at every IMU tick, including the final one.
struct GroundTruth {
  double imu_dt = 0.004;
  int imu_per_frame = 10;
  std::vector<double> t;
  PlatformTrack leader;
  PlatformTrack follower;
  std::vector<RelativeState> relative;
  std::vector<Vec3> relative_omega;  // R omega_F - omega_L, leader frame
  std::vector<double> lambda;        // |d omega/dt| dt / (2 |omega|), leader

  std::size_t ticks() const { return t.size(); }
  std::size_t frames() const;
  FullState state_at(std::size_t tick) const;
};

GroundTruth generate_trajectory(const TrajectoryConfig& cfg);

struct ImuStreams {
  std::vector<ImuSample> follower;
  std::vector<ImuSample> leader;
};

/// IMU readings at each tick start: true rate and specific force plus bias
/// and white noise with standard deviation sigma / sqrt(dt).
ImuStreams synthesize_imu(const GroundTruth& gt, const ImuNoiseModel& noise, std::uint64_t seed);

/// One list per camera frame. Markers behind the camera or outside the
/// image are dropped.
std::vector<std::vector<FeatureObservation>> synthesize_features(const GroundTruth& gt,
                                                                 const std::vector<Marker>& markers,
                                                                 const CameraModel& cam,
                                                                 std::uint64_t seed);

/// Conforming trajectories for the four special-motion cases.
TrajectoryConfig scenario(const MotionCaseSpec& spec);
/// Relative angular velocity direction of a fixed-axis scenario.
MotionCaseSpec scenario_spec(MotionCase c);

/// 60 s bias convergence scenarios: 1 free follower rotation, 2 fixed-axis
/// follower rotation, 3 no rotation. All have zero relative velocity.
TrajectoryConfig bias_scenario(int which);

/// Leader rate regimes 1 (constant pi), 2 (2 pi sin 2 pi t), 3 (N(0,1)).
TrajectoryConfig regime(int which);

/// Samples [frame * n, (frame + 1) * n) of an IMU stream.
std::span<const ImuSample> frame_samples(const std::vector<ImuSample>& s, int imu_per_frame,
                                         std::size_t frame);

/// Dual-preintegration factors between consecutive frames, linearized at
/// the given per-frame states and integrated at their bias values.
std::vector<DualPreintegrationFactor> frame_factors(const std::vector<FullState>& frame_states,
                                                    const ImuStreams& imu, int imu_per_frame,
                                                    const ImuNoiseModel& noise);

}  // namespace dpi
