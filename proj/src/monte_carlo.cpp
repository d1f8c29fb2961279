#include "dpi/monte_carlo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numbers>
#include <thread>

#include "dpi/errors.hpp"

namespace dpi {

Mat21 EstimatorConfig::prior_covariance() const {
  Vec21 s;
  s.segment<3>(idx::kTheta).setConstant(prior_rotation);
  s.segment<3>(idx::kP).setConstant(prior_position);
  s.segment<3>(idx::kV).setConstant(prior_velocity);
  s.segment<3>(idx::kFg).setConstant(prior_gyro_bias);
  s.segment<3>(idx::kFa).setConstant(prior_accel_bias);
  s.segment<3>(idx::kLg).setConstant(prior_gyro_bias);
  s.segment<3>(idx::kLa).setConstant(prior_accel_bias);
  return s.array().square().matrix().asDiagonal();
}

EstimationRun run_estimator(const GroundTruth& gt, const ImuStreams& imu,
                            const std::vector<std::vector<FeatureObservation>>& features,
                            const EstimatorConfig& cfg) {
  FullState x0;
  x0.s = gt.relative.front();
  return run_estimator(gt, imu, features, cfg, x0);
}

EstimationRun run_estimator(const GroundTruth& gt, const ImuStreams& imu,
                            const std::vector<std::vector<FeatureObservation>>& features,
                            const EstimatorConfig& cfg, const FullState& initial) {
  FixedLagSmoother sm(cfg.window, cfg.noise, cfg.camera, cfg.markers, initial, cfg.prior_covariance());
  EstimationRun run;
  const std::size_t frames = std::min(gt.frames(), features.size());
  double sq_theta = 0.0, sq_p = 0.0, ms = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto sf = f == 0 ? std::span<const ImuSample>() : frame_samples(imu.follower, gt.imu_per_frame, f - 1);
    const auto sl = f == 0 ? std::span<const ImuSample>() : frame_samples(imu.leader, gt.imu_per_frame, f - 1);
    sm.add_keyframe(gt.t[f * gt.imu_per_frame], sf, sl, features[f]);
    SmootherEstimate est = sm.optimize();
    const auto t1 = std::chrono::steady_clock::now();
    if (f > 0) ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
    run.diagnostics.insert(run.diagnostics.end(), est.iterations.begin(), est.iterations.end());
    const Keyframe& k = sm.latest();
    run.estimates.push_back(k);
    const RelativeState& truth = gt.relative[f * gt.imu_per_frame];
    const double e_th = geodesic_distance(truth.R, k.x.s.R);
    sq_theta += e_th * e_th;
    sq_p += (truth.p - k.x.s.p).squaredNorm();
  }
  if (frames > 0) {
    run.rmse_theta_deg = std::sqrt(sq_theta / frames) * 180.0 / std::numbers::pi;
    run.rmse_p_cm = std::sqrt(sq_p / frames) * 100.0;
  }
  if (frames > 1) run.ms_per_update = ms / (frames - 1);
  return run;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

RunResult one_run(const GroundTruth& gt, const EstimatorConfig& est, int r, std::uint64_t seed,
                  double noise_scale) {
  RunResult res;
  res.run = r;
  res.seed = seed;
  try {
    CameraModel cam = est.camera;
    cam.pixel_sigma *= noise_scale;
    const ImuStreams imu = synthesize_imu(gt, est.noise.scaled(noise_scale), seed);
    const auto feats = synthesize_features(gt, est.markers, cam, seed ^ 0x5DEECE66DULL);
    const EstimationRun run = run_estimator(gt, imu, feats, est);
    res.ok = true;
    res.rmse_theta_deg = run.rmse_theta_deg;
    res.rmse_p_cm = run.rmse_p_cm;
    res.ms_per_update = run.ms_per_update;
  } catch (const std::exception& e) {
    res.error = e.what();
  }
  return res;
}

}  // namespace

MonteCarloResult run_monte_carlo(const TrajectoryConfig& traj, const EstimatorConfig& est, int runs,
                                 std::uint64_t base_seed, int threads, double noise_scale) {
  if (runs < 1) throw Error(ErrorCode::kConfig, "runs must be at least 1");
  const GroundTruth gt = generate_trajectory(traj);
  if (threads <= 0) threads = std::max(1u, std::thread::hardware_concurrency());

  MonteCarloResult out;
  out.runs.resize(runs);
  int next = 0;
  while (next < runs) {
    std::vector<std::future<RunResult>> batch;
    for (int k = 0; k < threads && next < runs; ++k, ++next) {
      const int r = next;
      batch.push_back(std::async(std::launch::async, one_run, std::cref(gt), std::cref(est), r,
                                 base_seed + static_cast<std::uint64_t>(r), noise_scale));
    }
    for (auto& f : batch) {
      RunResult res = f.get();
      out.runs[res.run] = res;
    }
  }

  std::vector<double> th, p, ms;
  for (const RunResult& r : out.runs) {
    if (!r.ok) continue;
    th.push_back(r.rmse_theta_deg);
    p.push_back(r.rmse_p_cm);
    ms.push_back(r.ms_per_update);
  }
  out.used = static_cast<int>(th.size());
  if (out.used > 0) {
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / v.size();
    };
    out.mean_theta_deg = mean(th);
    out.mean_p_cm = mean(p);
    out.mean_ms_per_update = mean(ms);
    out.median_theta_deg = median(th);
    out.median_p_cm = median(p);
    out.max_theta_deg = *std::max_element(th.begin(), th.end());
    out.max_p_cm = *std::max_element(p.begin(), p.end());
  }
  return out;
}

}  // namespace dpi
