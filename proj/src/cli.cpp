#include "dpi/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

#include "dpi/config.hpp"
#include "dpi/csv_io.hpp"
#include "dpi/errors.hpp"
#include "dpi/monte_carlo.hpp"
#include "dpi/observability.hpp"

namespace dpi {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct Options {
  std::string config;
  std::string input;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<int> iters;
  std::optional<int> motion_case;
  double tol = 1e-8;
};

RunConfig effective_config(const Options& o) {
  RunConfig cfg;
  if (!o.config.empty()) {
    cfg = load_config(o.config);
  } else if (!o.input.empty() && fs::exists(fs::path(o.input) / "config.ini")) {
    cfg = load_config((fs::path(o.input) / "config.ini").string());
  } else {
    cfg.trajectory = preset_trajectory(cfg.preset);
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.runs) cfg.runs = *o.runs;
  if (o.iters) cfg.estimator.window.max_iterations = *o.iters;
  cfg.trajectory.gyro_walk = cfg.estimator.noise.gyro_walk;
  cfg.trajectory.accel_walk = cfg.estimator.noise.accel_walk;
  cfg.trajectory.gravity = cfg.estimator.noise.gravity;
  cfg.validate();
  return cfg;
}

std::string path_in(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ordered_json vec_json(const Eigen::VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

ordered_json columns_json(const Eigen::MatrixXd& m) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(vec_json(m.col(c)));
  return a;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  const RunConfig cfg = effective_config(o);
  const GroundTruth gt = generate_trajectory(cfg.trajectory);
  CameraModel cam = cfg.estimator.camera;
  cam.pixel_sigma *= cfg.measurement_noise;
  const ImuStreams imu = synthesize_imu(gt, cfg.estimator.noise.scaled(cfg.measurement_noise), cfg.seed);
  const auto feats = synthesize_features(gt, cfg.estimator.markers, cam, cfg.seed ^ 0x5DEECE66DULL);

  std::vector<double> t(gt.t.begin(), gt.t.begin() + static_cast<long>(imu.follower.size()));
  write_file_atomic(path_in(o.out, "trajectory.csv"), trajectory_csv(gt));
  write_file_atomic(path_in(o.out, "imu_follower.csv"), imu_csv(t, imu.follower));
  write_file_atomic(path_in(o.out, "imu_leader.csv"), imu_csv(t, imu.leader));
  write_file_atomic(path_in(o.out, "features.csv"), features_csv(feats));
  write_file_atomic(path_in(o.out, "config.ini"), serialize_config(cfg));

  std::size_t n_feat = 0;
  for (const auto& f : feats) n_feat += f.size();
  ordered_json j;
  j["schema"] = kCsvSchema;
  j["command"] = "simulate";
  j["preset"] = cfg.preset;
  j["seed"] = cfg.seed;
  j["ticks"] = gt.ticks();
  j["frames"] = gt.frames();
  j["features"] = n_feat;
  j["max_lambda"] = gt.lambda.empty() ? 0.0 : *std::max_element(gt.lambda.begin(), gt.lambda.end());
  write_file_atomic(path_in(o.out, "simulate.json"), j.dump(2) + "\n");
  out << "simulate: " << gt.ticks() << " ticks, " << gt.frames() << " frames, " << n_feat
      << " features -> " << o.out << "\n";
  return kExitOk;
}

ImuTable load_imu(const std::string& dir, const char* name) { return read_imu(load_csv(path_in(dir, name))); }

int cmd_estimate(const Options& o, std::ostream& out) {
  if (o.input.empty()) throw Error(ErrorCode::kConfig, "estimate needs --input <dir>");
  const RunConfig cfg = effective_config(o);
  const std::string out_dir = o.out == "." ? o.input : o.out;

  const TrajectoryTable truth = read_trajectory(load_csv(path_in(o.input, "trajectory.csv")));
  const ImuTable imu_f = load_imu(o.input, "imu_follower.csv");
  const ImuTable imu_l = load_imu(o.input, "imu_leader.csv");
  auto feats = read_features(load_csv(path_in(o.input, "features.csv")));
  if (truth.t.empty()) throw Error(ErrorCode::kData, "trajectory.csv has no rows");
  if (imu_f.t.size() != imu_l.t.size()) {
    const auto last = [](const ImuTable& t) { return t.t.empty() ? std::string("none") : "t=" + num(t.t.back()); };
    throw Error(ErrorCode::kData, "follower and leader IMU streams differ in length (follower ends at " +
                                      last(imu_f) + ", leader at " + last(imu_l) + ")");
  }
  for (std::size_t k = 0; k < imu_f.t.size(); ++k) {
    if (std::abs(imu_f.t[k] - imu_l.t[k]) > 1e-9)
      throw Error(ErrorCode::kData, "IMU timestamps disagree at t=" + num(imu_f.t[k]));
  }

  const double period = 1.0 / cfg.trajectory.camera_rate;
  const double max_gap = 2.0 * period;
  const double t0 = truth.t.front();
  const double t_end = truth.t.back();
  if (imu_f.t.empty()) throw Error(ErrorCode::kData, "IMU streams are empty");
  if (imu_f.t.front() - t0 > max_gap)
    throw Error(ErrorCode::kData, "IMU stream starts at t=" + num(imu_f.t.front()) + ", expected t=" + num(t0));
  for (std::size_t k = 1; k < imu_f.t.size(); ++k) {
    const double gap = imu_f.t[k] - imu_f.t[k - 1];
    if (!(gap > 0.0)) throw Error(ErrorCode::kData, "IMU timestamps not increasing at t=" + num(imu_f.t[k]));
    if (gap > max_gap)
      throw Error(ErrorCode::kData, "IMU gap of " + num(gap) + " s after t=" + num(imu_f.t[k - 1]));
  }
  const double imu_end = imu_f.t.back() + imu_f.samples.back().dt;
  if (t_end - imu_end > max_gap)
    throw Error(ErrorCode::kData, "IMU stream ends at t=" + num(imu_end) + " but the trajectory runs to t=" +
                                      num(t_end));

  // Keyframes at camera ticks, IMU samples assigned by timestamp.
  const int n = cfg.trajectory.imu_per_frame();
  std::vector<std::size_t> frame_ticks;
  for (std::size_t k = 0; k < truth.t.size(); k += n) {
    if (truth.t[k] > imu_end + 1e-9) break;
    frame_ticks.push_back(k);
  }
  feats.resize(std::max(feats.size(), frame_ticks.size()));

  // Pose from the first truth row, biases unknown.
  FullState initial = truth.states.front();
  initial.follower = initial.leader = Bias{};
  FixedLagSmoother sm(cfg.estimator.window, cfg.estimator.noise, cfg.estimator.camera, cfg.estimator.markers,
                      initial, cfg.estimator.prior_covariance());
  std::vector<Keyframe> estimates;
  std::vector<double> residual_norms;
  std::size_t cursor = 0;
  double sq_th = 0.0, sq_p = 0.0, ms = 0.0;
  int rejected = 0;
  for (std::size_t f = 0; f < frame_ticks.size(); ++f) {
    const double tf = truth.t[frame_ticks[f]];
    const std::size_t first = cursor;
    while (cursor < imu_f.t.size() && imu_f.t[cursor] < tf - 1e-9) ++cursor;
    const std::span<const ImuSample> sf(imu_f.samples.data() + first, cursor - first);
    const std::span<const ImuSample> sl(imu_l.samples.data() + first, cursor - first);
    const auto a = std::chrono::steady_clock::now();
    if (f > 0 && sf.empty())
      throw Error(ErrorCode::kData, "no IMU samples before frame at t=" + num(tf));
    sm.add_keyframe(tf, sf, sl, feats[f]);
    const SmootherEstimate est = sm.optimize();
    const auto b = std::chrono::steady_clock::now();
    if (f > 0) ms += std::chrono::duration<double, std::milli>(b - a).count();
    for (const auto& d : est.iterations) rejected += d.step_rejected ? 1 : 0;
    estimates.push_back(sm.latest());
    residual_norms.push_back(std::sqrt(2.0 * sm.cost()));
    const RelativeState& x = truth.states[frame_ticks[f]].s;
    const double e = geodesic_distance(x.R, sm.latest().x.s.R);
    sq_th += e * e;
    sq_p += (x.p - sm.latest().x.s.p).squaredNorm();
  }
  const double frames = static_cast<double>(estimates.size());

  ordered_json j;
  j["schema"] = kCsvSchema;
  j["command"] = "estimate";
  j["frames"] = estimates.size();
  j["rmse_theta_deg"] = std::sqrt(sq_th / frames) * 180.0 / std::numbers::pi;
  j["rmse_p_cm"] = std::sqrt(sq_p / frames) * 100.0;
  j["ms_per_update"] = frames > 1 ? ms / (frames - 1) : 0.0;
  j["max_residual_norm"] = *std::max_element(residual_norms.begin(), residual_norms.end());
  j["rejected_steps"] = rejected;
  write_file_atomic(path_in(out_dir, "estimate.csv"), estimates_csv(estimates, residual_norms));
  write_file_atomic(path_in(out_dir, "summary.json"), j.dump(2) + "\n");
  out << "estimate: " << estimates.size() << " keyframes, rmse_theta " << j["rmse_theta_deg"].get<double>()
      << " deg, rmse_p " << j["rmse_p_cm"].get<double>() << " cm\n";
  return kExitOk;
}

int cmd_observability(const Options& o, std::ostream& out) {
  MotionCaseSpec spec;
  if (o.motion_case) {
    if (*o.motion_case < 1 || *o.motion_case > 4)
      throw Error(ErrorCode::kUnsupportedCase, "case must be 1..4, got " + std::to_string(*o.motion_case));
    spec = scenario_spec(static_cast<MotionCase>(*o.motion_case));
  }

  RunConfig cfg;
  std::vector<FullState> frame_states;
  ImuStreams imu;
  int n = 0;
  if (!o.input.empty()) {
    cfg = effective_config(o);
    n = cfg.trajectory.imu_per_frame();
    const TrajectoryTable truth = read_trajectory(load_csv(path_in(o.input, "trajectory.csv")));
    imu.follower = load_imu(o.input, "imu_follower.csv").samples;
    imu.leader = load_imu(o.input, "imu_leader.csv").samples;
    for (std::size_t k = 0; k < truth.states.size(); k += n) frame_states.push_back(truth.states[k]);
  } else {
    Options base = o;
    cfg = effective_config(base);
    cfg.trajectory = scenario(spec);
    cfg.preset = o.motion_case ? "case" + std::to_string(*o.motion_case) : "general";
    const GroundTruth gt = generate_trajectory(cfg.trajectory);
    imu = synthesize_imu(gt, cfg.estimator.noise.scaled(0.0), cfg.seed);
    n = gt.imu_per_frame;
    for (std::size_t f = 0; f < gt.frames(); ++f) frame_states.push_back(gt.state_at(f * n));
  }
  const auto factors = frame_factors(frame_states, imu, n, cfg.estimator.noise);
  const WindowObservability w = classify_window(factors, spec, o.tol);

  ordered_json j;
  j["schema"] = kCsvSchema;
  j["command"] = "observability";
  j["case"] = to_string(spec.id);
  j["description"] = spec.description();
  j["tolerance"] = o.tol;
  j["factors"] = factors.size();
  j["stacked_rank"] = w.stacked_rank;
  j["stacked_singular_values"] = vec_json(w.stacked_singular_values);
  j["intersection_dim"] = w.intersection.cols();
  j["intersection_basis"] = columns_json(w.intersection);
  j["predicted_accel"] = w.predicted_accel;
  j["predicted_gyro"] = w.predicted_gyro;
  j["max_direction_residual"] = w.max_direction_residual;
  j["max_variant_residual"] = w.max_variant_residual;
  const bool confirmed = spec.id == MotionCase::kGeneral
                             ? w.intersection.cols() == 0
                             : w.max_direction_residual <= o.tol &&
                                   static_cast<std::size_t>(w.intersection.cols()) ==
                                       w.predicted_accel + w.predicted_gyro;
  j["confirmed"] = confirmed;
  ordered_json per = ordered_json::array();
  for (const ObservabilityReport& r : w.factors) {
    ordered_json fj;
    fj["rank"] = r.rank;
    fj["singular_values"] = vec_json(r.singular_values);
    fj["null_dim"] = r.null_basis.cols();
    fj["matched"] = to_string(r.matched);
    fj["direction_residuals"] = r.direction_residuals;
    fj["variant_residuals"] = r.variant_residuals;
    per.push_back(fj);
  }
  j["per_factor"] = per;
  write_file_atomic(path_in(o.out, "observability.json"), j.dump(2) + "\n");
  out << "observability: " << to_string(spec.id) << ", stacked rank " << w.stacked_rank << ", intersection "
      << w.intersection.cols() << " (accel " << w.predicted_accel << ", gyro " << w.predicted_gyro << " predicted), "
      << (confirmed ? "confirmed" : "not confirmed") << "\n";
  return kExitOk;
}

int cmd_montecarlo(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = effective_config(o);
  const MonteCarloResult mc = run_monte_carlo(cfg.trajectory, cfg.estimator, cfg.runs, cfg.seed, cfg.threads,
                                              cfg.measurement_noise);
  std::ostringstream os;
  os << "# schema=" << kCsvSchema << "\n" << "kind,run,seed,ok,rmse_theta_deg,rmse_p_cm,ms_per_update,used\n";
  for (const RunResult& r : mc.runs) {
    os << "run," << r.run << ',' << r.seed << ',' << (r.ok ? 1 : 0) << ',' << num(r.rmse_theta_deg) << ','
       << num(r.rmse_p_cm) << ',' << num(r.ms_per_update) << ",1\n";
    if (!r.ok) err << "montecarlo: run " << r.run << " failed: " << r.error << "\n";
  }
  os << "mean,,,," << num(mc.mean_theta_deg) << ',' << num(mc.mean_p_cm) << ',' << num(mc.mean_ms_per_update)
     << ',' << mc.used << "\n";
  os << "median,,,," << num(mc.median_theta_deg) << ',' << num(mc.median_p_cm) << ",," << mc.used << "\n";
  os << "max,,,," << num(mc.max_theta_deg) << ',' << num(mc.max_p_cm) << ",," << mc.used << "\n";
  write_file_atomic(path_in(o.out, "montecarlo.csv"), os.str());

  ordered_json j;
  j["schema"] = kCsvSchema;
  j["command"] = "montecarlo";
  j["preset"] = cfg.preset;
  j["runs"] = cfg.runs;
  j["used"] = mc.used;
  j["mean_rmse_theta_deg"] = mc.mean_theta_deg;
  j["median_rmse_theta_deg"] = mc.median_theta_deg;
  j["max_rmse_theta_deg"] = mc.max_theta_deg;
  j["mean_rmse_p_cm"] = mc.mean_p_cm;
  j["median_rmse_p_cm"] = mc.median_p_cm;
  j["max_rmse_p_cm"] = mc.max_p_cm;
  j["mean_ms_per_update"] = mc.mean_ms_per_update;
  write_file_atomic(path_in(o.out, "montecarlo.json"), j.dump(2) + "\n");
  out << "montecarlo: " << mc.used << "/" << cfg.runs << " runs, mean rmse_theta " << mc.mean_theta_deg
      << " deg, mean rmse_p " << mc.mean_p_cm << " cm, " << mc.mean_ms_per_update << " ms/update\n";
  if (mc.used == 0) throw Error(ErrorCode::kSingularNormalEquations, "all Monte Carlo runs failed");
  return kExitOk;
}

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::kConfig:
    case ErrorCode::kUnsupportedCase:
      return kExitConfig;
    case ErrorCode::kData:
    case ErrorCode::kEmptySampleSet:
    case ErrorCode::kWindowMismatch:
    case ErrorCode::kBehindCamera:
      return kExitData;
    case ErrorCode::kNearPiRotation:
    case ErrorCode::kOutOfDomain:
    case ErrorCode::kSingularNormalEquations:
      return kExitNumerical;
  }
  return kExitNumerical;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Relative leader/follower estimation with dual IMU preintegration", "dpi"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* s) {
    s->add_option("--config", o.config, "Configuration file");
    s->add_option("--out", o.out, "Output directory");
  };
  CLI::App* sim = app.add_subcommand("simulate", "Generate ground truth and measurements");
  common(sim);
  sim->add_option("--seed", o.seed, "Measurement noise seed");

  CLI::App* est = app.add_subcommand("estimate", "Run the fixed-lag smoother on a measurement directory");
  common(est);
  est->add_option("--input", o.input, "Directory written by simulate")->required();
  est->add_option("--iters", o.iters, "Gauss-Newton iterations per keyframe");

  CLI::App* obs = app.add_subcommand("observability", "Bias observability report");
  common(obs);
  obs->add_option("--case", o.motion_case, "Special motion case 1..4 (omit for general motion)");
  obs->add_option("--input", o.input, "Directory written by simulate");
  obs->add_option("--tol", o.tol, "Relative singular value tolerance");

  CLI::App* mc = app.add_subcommand("montecarlo", "Monte Carlo RMSE benchmark");
  common(mc);
  mc->add_option("--runs", o.runs, "Number of runs");
  mc->add_option("--seed", o.seed, "Base noise seed");
  mc->add_option("--iters", o.iters, "Gauss-Newton iterations per keyframe");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "dpi: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o, out);
    if (est->parsed()) return cmd_estimate(o, out);
    if (obs->parsed()) return cmd_observability(o, out);
    return cmd_montecarlo(o, out, err);
  } catch (const Error& e) {
    err << "dpi: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "dpi: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace dpi
