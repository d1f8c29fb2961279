#include "dpi/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "dpi/errors.hpp"

namespace dpi {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kTrackStiffness = 25.0;  // 1/s^2
constexpr double kTrackDamping = 10.0;    // 1/s

struct Translation {
  Vec3 x, dx, ddx;
};

Translation common_motion(const TrajectoryConfig& c, double t) {
  const double w = kTwoPi * c.common_frequency;
  return {c.common_amplitude * std::sin(w * t), c.common_amplitude * (w * std::cos(w * t)),
          c.common_amplitude * (-w * w * std::sin(w * t))};
}

Translation relative_motion(const TrajectoryConfig& c, double t) {
  const double w = kTwoPi * c.relative_frequency;
  Translation out{c.relative_offset, Vec3::Zero(), Vec3::Zero()};
  for (int k = 0; k < 3; ++k) {
    const double ph = w * t + c.relative_phase(k);
    out.x(k) += c.relative_amplitude(k) * std::sin(ph);
    out.dx(k) = c.relative_amplitude(k) * w * std::cos(ph);
    out.ddx(k) = -c.relative_amplitude(k) * w * w * std::sin(ph);
  }
  return out;
}

Vec3 follower_rate(const TrajectoryConfig& c, double t, const Vec3& w_leader) {
  const Vec3& A = c.follower_rate_amplitude;
  const Vec3& f = c.follower_rate_frequency;
  switch (c.follower) {
    case FollowerMode::kStatic:
      return Vec3::Zero();
    case FollowerMode::kFree:
      return Vec3(A.x() * std::sin(kTwoPi * f.x() * t), A.y() * std::sin(kTwoPi * f.y() * t + 1.0),
                  A.z() * std::cos(kTwoPi * f.z() * t));
    case FollowerMode::kFixedAxis:
      return c.follower_axis.normalized() * (A.x() * std::sin(kTwoPi * f.x() * t));
    case FollowerMode::kLocked:
      return exp_map(c.relative_tilt).matrix().transpose() * w_leader;
  }
  return Vec3::Zero();
}

}  // namespace

double AngularProfile::rate(double t) const {
  switch (kind) {
    case Kind::kZero: return 0.0;
    case Kind::kConstant: return magnitude;
    case Kind::kHarmonic: return magnitude * std::sin(kTwoPi * frequency * t);
    case Kind::kStochastic: return 0.0;
  }
  return 0.0;
}

double AngularProfile::rate_derivative(double t) const {
  if (kind == Kind::kHarmonic) return magnitude * kTwoPi * frequency * std::cos(kTwoPi * frequency * t);
  return 0.0;
}

void TrajectoryConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfig, m); };
  if (!(duration > 0.0)) fail("duration must be positive");
  if (!(imu_rate > 0.0) || !(camera_rate > 0.0)) fail("rates must be positive");
  const double ratio = imu_rate / camera_rate;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0) {
    fail("imu_rate must be an integer multiple of camera_rate");
  }
  if (oversample < 1) fail("oversample must be at least 1");
  if (imu_rate * duration < 1.0) fail("trajectory shorter than one IMU tick");
}

int TrajectoryConfig::imu_per_frame() const {
  return static_cast<int>(std::lround(imu_rate / camera_rate));
}

std::size_t GroundTruth::frames() const {
  return t.empty() ? 0 : (t.size() - 1) / imu_per_frame + 1;
}

FullState GroundTruth::state_at(std::size_t tick) const {
  FullState x;
  x.s = relative[tick];
  x.follower = follower.bias[tick];
  x.leader = leader.bias[tick];
  return x;
}

GroundTruth generate_trajectory(const TrajectoryConfig& cfg) {
  cfg.validate();
  GroundTruth gt;
  gt.imu_dt = 1.0 / cfg.imu_rate;
  gt.imu_per_frame = cfg.imu_per_frame();
  const long n = std::lround(cfg.duration * cfg.imu_rate);
  const int M = cfg.oversample;
  const double h = gt.imu_dt / M;
  const Vec3 g = cfg.gravity;
  const Vec3 ez = Vec3::UnitZ();

  std::mt19937_64 rate_rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 7);
  std::mt19937_64 bias_rng(cfg.seed * 0xBF58476D1CE4E5B9ULL + 13);
  std::normal_distribution<double> N(0.0, 1.0);

  auto leader_rate = [&](double t) {
    if (cfg.leader.kind == AngularProfile::Kind::kStochastic) return cfg.leader.magnitude * N(rate_rng);
    return cfg.leader.rate(t);
  };

  Mat3 RL = exp_map(cfg.leader_tilt).matrix();
  Mat3 RF = RL * exp_map(cfg.relative_tilt).matrix();
  double wl = leader_rate(0.0);
  const Translation c0 = common_motion(cfg, 0.0);
  const Translation d0 = relative_motion(cfg, 0.0);
  Vec3 pL = c0.x, vL = c0.dx;
  Vec3 pF = c0.x + RL * d0.x;
  Vec3 vF = c0.dx + RL * ((wl * ez).cross(d0.x) + d0.dx);

  Bias bF = cfg.follower_bias, bL = cfg.leader_bias;
  const double sg = cfg.bias_walk ? cfg.gyro_walk * std::sqrt(gt.imu_dt) : 0.0;
  const double sa = cfg.bias_walk ? cfg.accel_walk * std::sqrt(gt.imu_dt) : 0.0;

  auto record = [&](double t, const Vec3& wL, const Vec3& wF, const Vec3& AL, const Vec3& AF) {
    gt.t.push_back(t);
    gt.leader.R.push_back(Rotation::nearest(RL));
    gt.leader.p.push_back(pL);
    gt.leader.v.push_back(vL);
    gt.leader.omega.push_back(wL);
    gt.leader.accel.push_back(RL.transpose() * (AL - g));
    gt.leader.bias.push_back(bL);
    gt.follower.R.push_back(Rotation::nearest(RF));
    gt.follower.p.push_back(pF);
    gt.follower.v.push_back(vF);
    gt.follower.omega.push_back(wF);
    gt.follower.accel.push_back(RF.transpose() * (AF - g));
    gt.follower.bias.push_back(bF);
    const Mat3 RLt = RL.transpose();
    RelativeState rs;
    rs.R = Rotation::nearest(RLt * RF);
    rs.p = RLt * (pF - pL);
    rs.v = RLt * (vF - vL);
    gt.relative.push_back(rs);
    gt.relative_omega.push_back(rs.R * wF - wL);
  };

  for (long s = 0; s <= n * M; ++s) {
    const double t = s * h;
    if (s > 0) wl = leader_rate(t);
    const Vec3 wL = wl * ez;
    const Vec3 wLdot = cfg.leader.rate_derivative(t) * ez;
    const Vec3 wF = follower_rate(cfg, t, wL);
    const Translation c = common_motion(cfg, t);
    const Translation d = relative_motion(cfg, t);
    const Vec3 AL = c.ddx;
    // Feedforward plus a critically damped pull towards the scripted
    // position relative to the integrated leader. The feedback vanishes
    // whenever the feedforward is exact; it keeps the follower in view under
    // white leader rates, whose angular acceleration is not representable.
    const Vec3 target = pL + RL * d.x;
    const Vec3 target_rate = vL + RL * (wL.cross(d.x) + d.dx);
    const Vec3 AF = c.ddx +
                    RL * (wL.cross(wL.cross(d.x)) + wLdot.cross(d.x) + 2.0 * wL.cross(d.dx) + d.ddx) +
                    kTrackStiffness * (target - pF) + kTrackDamping * (target_rate - vF);
    if (s % M == 0) {
      record(t, wL, wF, AL, AF);
      if (s / M < n) {
        for (int k = 0; k < 3; ++k) {
          bF.gyro(k) += sg * N(bias_rng);
          bF.accel(k) += sa * N(bias_rng);
          bL.gyro(k) += sg * N(bias_rng);
          bL.accel(k) += sa * N(bias_rng);
        }
      }
    }
    if (s == n * M) break;
    pL += vL * h + 0.5 * AL * h * h;
    vL += AL * h;
    RL = RL * exp_map(wL * h).matrix();
    pF += vF * h + 0.5 * AF * h * h;
    vF += AF * h;
    RF = RF * exp_map(wF * h).matrix();
  }

  // Nonlinearity level of the leader rate per IMU tick.
  gt.lambda.resize(gt.t.size(), 0.0);
  for (std::size_t k = 0; k < gt.t.size(); ++k) {
    const double w = gt.leader.omega[k].z();
    double wdot;
    if (cfg.leader.kind == AngularProfile::Kind::kStochastic) {
      const std::size_t k1 = std::min(k + 1, gt.t.size() - 1);
      const std::size_t k0 = k1 - 1;
      wdot = (gt.leader.omega[k1].z() - gt.leader.omega[k0].z()) / gt.imu_dt;
    } else {
      wdot = cfg.leader.rate_derivative(gt.t[k]);
    }
    gt.lambda[k] = std::abs(w) > 1e-12 ? std::abs(wdot) * gt.imu_dt / (2.0 * std::abs(w)) : 0.0;
  }
  return gt;
}

ImuStreams synthesize_imu(const GroundTruth& gt, const ImuNoiseModel& noise, std::uint64_t seed) {
  noise.validate(false);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  const double dt = gt.imu_dt;
  const double sg = noise.gyro_noise / std::sqrt(dt);
  const double sa = noise.accel_noise / std::sqrt(dt);
  auto draw = [&](double s) { return Vec3(s * N(rng), s * N(rng), s * N(rng)); };

  ImuStreams out;
  const std::size_t n = gt.ticks() - 1;
  out.follower.reserve(n);
  out.leader.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    for (int which = 0; which < 2; ++which) {
      const PlatformTrack& tr = which == 0 ? gt.leader : gt.follower;
      ImuSample s;
      s.gyro = tr.omega[k] + tr.bias[k].gyro;
      s.accel = tr.accel[k] + tr.bias[k].accel;
      if (sg > 0.0) s.gyro += draw(sg);
      if (sa > 0.0) s.accel += draw(sa);
      s.dt = dt;
      (which == 0 ? out.leader : out.follower).push_back(s);
    }
  }
  return out;
}

std::vector<std::vector<FeatureObservation>> synthesize_features(const GroundTruth& gt,
                                                                 const std::vector<Marker>& markers,
                                                                 const CameraModel& cam,
                                                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  std::vector<std::vector<FeatureObservation>> out(gt.frames());
  for (std::size_t f = 0; f < out.size(); ++f) {
    const std::size_t k = f * gt.imu_per_frame;
    for (const Marker& m : markers) {
      const auto px = try_project(gt.relative[k], m, cam);
      const Vec2 noise(N(rng), N(rng));
      if (!px || !cam.in_image(*px)) continue;
      FeatureObservation obs;
      obs.marker_id = m.id;
      obs.pixel = *px + cam.pixel_sigma * noise;
      obs.t = gt.t[k];
      out[f].push_back(obs);
    }
  }
  return out;
}

std::span<const ImuSample> frame_samples(const std::vector<ImuSample>& s, int imu_per_frame,
                                         std::size_t frame) {
  const std::size_t a = frame * imu_per_frame;
  const std::size_t b = std::min(s.size(), a + imu_per_frame);
  if (a >= b) return {};
  return std::span<const ImuSample>(s.data() + a, b - a);
}

TrajectoryConfig regime(int which) {
  TrajectoryConfig c;
  switch (which) {
    case 1:
      c.leader = {AngularProfile::Kind::kConstant, std::numbers::pi, 1.0};
      break;
    case 2:
      c.leader = {AngularProfile::Kind::kHarmonic, kTwoPi, 1.0};
      break;
    case 3:
      c.leader = {AngularProfile::Kind::kStochastic, 1.0, 1.0};
      break;
    default: {
      std::ostringstream os;
      os << "unknown rate regime " << which;
      throw Error(ErrorCode::kUnsupportedCase, os.str());
    }
  }
  return c;
}

MotionCaseSpec scenario_spec(MotionCase c) {
  const TrajectoryConfig cfg = scenario({c, Vec3::UnitZ()});
  MotionCaseSpec spec;
  spec.id = c;
  spec.axis = exp_map(cfg.relative_tilt) * cfg.follower_axis.normalized();
  return spec;
}

TrajectoryConfig scenario(const MotionCaseSpec& spec) {
  TrajectoryConfig c;
  c.duration = 5.0;
  c.oversample = 1;
  c.bias_walk = false;
  c.relative_tilt = Vec3(0.2, -0.1, 0.3);
  c.follower_bias = {Vec3(0.01, -0.02, 0.015), Vec3(0.1, 0.05, -0.08)};
  c.leader_bias = {Vec3(-0.01, 0.005, 0.02), Vec3(-0.05, 0.1, 0.07)};
  const Vec3 axis = Vec3(1.0, 0.5, 0.2).normalized();
  switch (spec.id) {
    case MotionCase::kGeneral:
      c.leader = {AngularProfile::Kind::kHarmonic, 2.0, 0.7};
      c.follower = FollowerMode::kFree;
      break;
    case MotionCase::kCase1:
      c.leader = {AngularProfile::Kind::kHarmonic, 1.5, 0.5};
      c.follower = FollowerMode::kLocked;
      break;
    case MotionCase::kCase2:
      c.leader = {AngularProfile::Kind::kZero, 0.0, 1.0};
      c.follower = FollowerMode::kFixedAxis;
      c.follower_axis = axis;
      break;
    case MotionCase::kCase3:
      c.leader = {AngularProfile::Kind::kHarmonic, 1.5, 0.5};
      c.follower = FollowerMode::kLocked;
      c.relative_offset.setZero();
      c.relative_amplitude.setZero();
      break;
    case MotionCase::kCase4: {
      c.leader = {AngularProfile::Kind::kZero, 0.0, 1.0};
      c.follower = FollowerMode::kFixedAxis;
      c.follower_axis = axis;
      const Vec3 tau = exp_map(c.relative_tilt) * axis;
      c.relative_offset = 0.8 * tau;
      c.relative_amplitude = 0.1 * tau;
      c.relative_phase.setZero();
      break;
    }
  }
  return c;
}

TrajectoryConfig bias_scenario(int which) {
  TrajectoryConfig c;
  c.duration = 60.0;
  c.leader = {AngularProfile::Kind::kZero, 0.0, 1.0};
  c.relative_amplitude.setZero();
  c.relative_offset = Vec3(0.0, 0.0, 1.0);
  c.follower_bias = {Vec3(0.01, -0.008, 0.012), Vec3(0.12, -0.1, 0.08)};
  c.leader_bias = {Vec3(-0.006, 0.01, -0.009), Vec3(-0.08, 0.1, 0.12)};
  switch (which) {
    case 1:
      c.follower = FollowerMode::kFree;
      break;
    case 2:
      c.follower = FollowerMode::kFixedAxis;
      c.follower_axis = Vec3::UnitZ();
      break;
    case 3:
      c.follower = FollowerMode::kStatic;
      break;
    default: {
      std::ostringstream os;
      os << "unknown bias scenario " << which;
      throw Error(ErrorCode::kUnsupportedCase, os.str());
    }
  }
  return c;
}

std::vector<DualPreintegrationFactor> frame_factors(const std::vector<FullState>& frame_states,
                                                    const ImuStreams& imu, int imu_per_frame,
                                                    const ImuNoiseModel& noise) {
  std::vector<DualPreintegrationFactor> out;
  for (std::size_t f = 0; f + 1 < frame_states.size(); ++f) {
    const FullState& x = frame_states[f];
    const auto sf = frame_samples(imu.follower, imu_per_frame, f);
    const auto sl = frame_samples(imu.leader, imu_per_frame, f);
    if (sf.empty() || sl.empty()) break;
    out.push_back(DualPreintegrationFactor::build(x, integrate(sf, x.follower, noise),
                                                  integrate(sl, x.leader, noise)));
  }
  return out;
}

}  // namespace dpi
