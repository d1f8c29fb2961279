#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpi/smoother.hpp"
#include "dpi/synth.hpp"

namespace dpi {

/// Everything the estimator needs besides the measurements.
struct EstimatorConfig {
  WindowConfig window;
  ImuNoiseModel noise;
  CameraModel camera;
  std::vector<Marker> markers = default_marker_layout();
  /// Prior standard deviations: rotation (rad), position (m), velocity
  /// (m/s), gyro bias (rad/s), accel bias (m/s^2).
  double prior_rotation = 0.01;
  double prior_position = 0.01;
  double prior_velocity = 0.01;
  double prior_gyro_bias = 0.02;
  double prior_accel_bias = 0.2;

  Mat21 prior_covariance() const;
};

struct EstimationRun {
  std::vector<Keyframe> estimates;  // latest estimate after each keyframe
  std::vector<IterationDiagnostics> diagnostics;
  double rmse_theta_deg = 0.0;
  double rmse_p_cm = 0.0;
  double ms_per_update = 0.0;
};

/// Runs the smoother over all camera frames. The first state is the truth
/// relative state with zero bias estimates.
EstimationRun run_estimator(const GroundTruth& gt, const ImuStreams& imu,
                            const std::vector<std::vector<FeatureObservation>>& features,
                            const EstimatorConfig& cfg);

/// Same, with an explicit initial state.
EstimationRun run_estimator(const GroundTruth& gt, const ImuStreams& imu,
                            const std::vector<std::vector<FeatureObservation>>& features,
                            const EstimatorConfig& cfg, const FullState& initial);

struct RunResult {
  int run = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double rmse_theta_deg = 0.0;
  double rmse_p_cm = 0.0;
  double ms_per_update = 0.0;
};

struct MonteCarloResult {
  std::vector<RunResult> runs;
  int used = 0;
  double mean_theta_deg = 0.0, median_theta_deg = 0.0, max_theta_deg = 0.0;
  double mean_p_cm = 0.0, median_p_cm = 0.0, max_p_cm = 0.0;
  double mean_ms_per_update = 0.0;
};

/// Independent noise realizations over one shared ground truth. Run r uses
/// noise seed base_seed + r. Solver failures are recorded per run.
/// noise_scale multiplies the synthesized IMU and pixel noise only.
MonteCarloResult run_monte_carlo(const TrajectoryConfig& traj, const EstimatorConfig& est,
                                 int runs, std::uint64_t base_seed, int threads = 0,
                                 double noise_scale = 1.0);

}  // namespace dpi
