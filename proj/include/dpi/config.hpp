#pragma once

#include <cstdint>
#include <string>

#include "dpi/monte_carlo.hpp"
#include "dpi/synth.hpp"

namespace dpi {

/// Everything a CLI subcommand needs. Parsed from a flat INI-style file:
///
///   [trajectory]  preset, duration, imu_rate, camera_rate, oversample, leader_* ...
///   [imu]         gyro_noise, accel_noise, gyro_walk, accel_walk, gravity
///   [camera]      fx, fy, cx, cy, width, height, pixel_sigma
///   [window]      size, iterations, damping, convergence, covariances
///   [prior]       rotation, position, velocity, gyro_bias, accel_bias
///   [run]         seed, runs, measurement_noise, threads
///
/// Vectors are written as three comma- or space-separated numbers.
struct RunConfig {
  TrajectoryConfig trajectory;
  EstimatorConfig estimator;
  std::string preset = "omega1";
  std::uint64_t seed = 1;
  int runs = 20;
  int threads = 0;
  /// Scale applied to IMU and pixel noise at synthesis time only. 0 gives
  /// noise-free measurements while the estimator keeps its weights.
  double measurement_noise = 1.0;

  void validate() const;
  bool operator==(const RunConfig& other) const;
};

/// Base trajectory for a preset name: omega1..3, case1..4, general,
/// bias1..3. Throws Error(kConfig) for unknown names.
TrajectoryConfig preset_trajectory(const std::string& name);

/// Throws Error(kConfig) with "<origin>:<line>: ..." diagnostics.
RunConfig parse_config(const std::string& text, const std::string& origin = "config");
RunConfig load_config(const std::string& path);

/// Full effective configuration in the same format; parse_config() of the
/// result reproduces the structure.
std::string serialize_config(const RunConfig& cfg);

}  // namespace dpi
