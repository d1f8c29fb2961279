#include "dpi/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "dpi/errors.hpp"

namespace dpi {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const Vec3& v) { return fmt(v.x()) + ", " + fmt(v.y()) + ", " + fmt(v.z()); }

struct ParseError {
  std::string msg;
};

double to_double(const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw ParseError{"expected a number, got '" + s + "'"};
  return v;
}

long long to_int(const std::string& s) {
  long long v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw ParseError{"expected an integer, got '" + s + "'"};
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw ParseError{"expected an unsigned integer, got '" + s + "'"};
  return v;
}

bool to_bool(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return false;
  throw ParseError{"expected a boolean, got '" + s + "'"};
}

Vec3 to_vec3(const std::string& s) {
  std::string t = s;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream is(t);
  std::vector<std::string> parts;
  std::string w;
  while (is >> w) parts.push_back(w);
  if (parts.size() != 3) throw ParseError{"expected three numbers, got '" + s + "'"};
  return Vec3(to_double(parts[0]), to_double(parts[1]), to_double(parts[2]));
}

const char* profile_name(AngularProfile::Kind k) {
  switch (k) {
    case AngularProfile::Kind::kZero: return "zero";
    case AngularProfile::Kind::kConstant: return "constant";
    case AngularProfile::Kind::kHarmonic: return "harmonic";
    case AngularProfile::Kind::kStochastic: return "stochastic";
  }
  return "zero";
}

AngularProfile::Kind profile_kind(const std::string& s) {
  if (s == "zero") return AngularProfile::Kind::kZero;
  if (s == "constant") return AngularProfile::Kind::kConstant;
  if (s == "harmonic") return AngularProfile::Kind::kHarmonic;
  if (s == "stochastic") return AngularProfile::Kind::kStochastic;
  throw ParseError{"unknown leader profile '" + s + "'"};
}

const char* follower_name(FollowerMode m) {
  switch (m) {
    case FollowerMode::kStatic: return "static";
    case FollowerMode::kFree: return "free";
    case FollowerMode::kFixedAxis: return "fixed_axis";
    case FollowerMode::kLocked: return "locked";
  }
  return "static";
}

FollowerMode follower_mode(const std::string& s) {
  if (s == "static") return FollowerMode::kStatic;
  if (s == "free") return FollowerMode::kFree;
  if (s == "fixed_axis") return FollowerMode::kFixedAxis;
  if (s == "locked") return FollowerMode::kLocked;
  throw ParseError{"unknown follower mode '" + s + "'"};
}

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Key {
  std::string section;
  std::string name;
  Setter set;
  Getter get;
};

#define DPI_DOUBLE(sec, key, field) \
  Key{sec, key, [](RunConfig& c, const std::string& v) { c.field = to_double(v); }, \
      [](const RunConfig& c) { return fmt(c.field); }}
#define DPI_VEC(sec, key, field) \
  Key{sec, key, [](RunConfig& c, const std::string& v) { c.field = to_vec3(v); }, \
      [](const RunConfig& c) { return fmt(c.field); }}
#define DPI_INT(sec, key, field) \
  Key{sec, key, [](RunConfig& c, const std::string& v) { c.field = static_cast<int>(to_int(v)); }, \
      [](const RunConfig& c) { return std::to_string(c.field); }}
#define DPI_BOOL(sec, key, field) \
  Key{sec, key, [](RunConfig& c, const std::string& v) { c.field = to_bool(v); }, \
      [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }}

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      DPI_DOUBLE("trajectory", "duration", trajectory.duration),
      DPI_DOUBLE("trajectory", "imu_rate", trajectory.imu_rate),
      DPI_DOUBLE("trajectory", "camera_rate", trajectory.camera_rate),
      DPI_INT("trajectory", "oversample", trajectory.oversample),
      Key{"trajectory", "leader_profile",
          [](RunConfig& c, const std::string& v) { c.trajectory.leader.kind = profile_kind(v); },
          [](const RunConfig& c) { return std::string(profile_name(c.trajectory.leader.kind)); }},
      DPI_DOUBLE("trajectory", "leader_magnitude", trajectory.leader.magnitude),
      DPI_DOUBLE("trajectory", "leader_frequency", trajectory.leader.frequency),
      DPI_VEC("trajectory", "leader_tilt", trajectory.leader_tilt),
      Key{"trajectory", "follower_mode",
          [](RunConfig& c, const std::string& v) { c.trajectory.follower = follower_mode(v); },
          [](const RunConfig& c) { return std::string(follower_name(c.trajectory.follower)); }},
      DPI_VEC("trajectory", "follower_rate_amplitude", trajectory.follower_rate_amplitude),
      DPI_VEC("trajectory", "follower_rate_frequency", trajectory.follower_rate_frequency),
      DPI_VEC("trajectory", "follower_axis", trajectory.follower_axis),
      DPI_VEC("trajectory", "relative_tilt", trajectory.relative_tilt),
      DPI_VEC("trajectory", "relative_offset", trajectory.relative_offset),
      DPI_VEC("trajectory", "relative_amplitude", trajectory.relative_amplitude),
      DPI_VEC("trajectory", "relative_phase", trajectory.relative_phase),
      DPI_DOUBLE("trajectory", "relative_frequency", trajectory.relative_frequency),
      DPI_VEC("trajectory", "common_amplitude", trajectory.common_amplitude),
      DPI_DOUBLE("trajectory", "common_frequency", trajectory.common_frequency),
      DPI_VEC("trajectory", "follower_gyro_bias", trajectory.follower_bias.gyro),
      DPI_VEC("trajectory", "follower_accel_bias", trajectory.follower_bias.accel),
      DPI_VEC("trajectory", "leader_gyro_bias", trajectory.leader_bias.gyro),
      DPI_VEC("trajectory", "leader_accel_bias", trajectory.leader_bias.accel),
      DPI_BOOL("trajectory", "bias_walk", trajectory.bias_walk),
      Key{"trajectory", "seed",
          [](RunConfig& c, const std::string& v) { c.trajectory.seed = to_u64(v); },
          [](const RunConfig& c) { return std::to_string(c.trajectory.seed); }},

      DPI_DOUBLE("imu", "gyro_noise", estimator.noise.gyro_noise),
      DPI_DOUBLE("imu", "accel_noise", estimator.noise.accel_noise),
      DPI_DOUBLE("imu", "gyro_walk", estimator.noise.gyro_walk),
      DPI_DOUBLE("imu", "accel_walk", estimator.noise.accel_walk),
      DPI_VEC("imu", "gravity", estimator.noise.gravity),

      DPI_DOUBLE("camera", "fx", estimator.camera.fx),
      DPI_DOUBLE("camera", "fy", estimator.camera.fy),
      DPI_DOUBLE("camera", "cx", estimator.camera.cx),
      DPI_DOUBLE("camera", "cy", estimator.camera.cy),
      DPI_INT("camera", "width", estimator.camera.width),
      DPI_INT("camera", "height", estimator.camera.height),
      DPI_DOUBLE("camera", "pixel_sigma", estimator.camera.pixel_sigma),

      DPI_INT("window", "size", estimator.window.size),
      DPI_INT("window", "iterations", estimator.window.max_iterations),
      DPI_DOUBLE("window", "damping", estimator.window.step_damping),
      DPI_DOUBLE("window", "convergence", estimator.window.convergence_threshold),
      DPI_BOOL("window", "covariances", estimator.window.compute_covariances),

      DPI_DOUBLE("prior", "rotation", estimator.prior_rotation),
      DPI_DOUBLE("prior", "position", estimator.prior_position),
      DPI_DOUBLE("prior", "velocity", estimator.prior_velocity),
      DPI_DOUBLE("prior", "gyro_bias", estimator.prior_gyro_bias),
      DPI_DOUBLE("prior", "accel_bias", estimator.prior_accel_bias),

      Key{"run", "seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); },
          [](const RunConfig& c) { return std::to_string(c.seed); }},
      DPI_INT("run", "runs", runs),
      DPI_INT("run", "threads", threads),
      DPI_DOUBLE("run", "measurement_noise", measurement_noise),
  };
  return k;
}

#undef DPI_DOUBLE
#undef DPI_VEC
#undef DPI_INT
#undef DPI_BOOL

struct Line {
  int number;
  std::string section, key, value;
};

}  // namespace

TrajectoryConfig preset_trajectory(const std::string& name) {
  if (name == "omega1") return regime(1);
  if (name == "omega2") return regime(2);
  if (name == "omega3") return regime(3);
  if (name == "general") return scenario({MotionCase::kGeneral, Vec3::UnitZ()});
  if (name == "case1") return scenario({MotionCase::kCase1, Vec3::UnitZ()});
  if (name == "case2") return scenario({MotionCase::kCase2, Vec3::UnitZ()});
  if (name == "case3") return scenario({MotionCase::kCase3, Vec3::UnitZ()});
  if (name == "case4") return scenario({MotionCase::kCase4, Vec3::UnitZ()});
  if (name == "bias1") return bias_scenario(1);
  if (name == "bias2") return bias_scenario(2);
  if (name == "bias3") return bias_scenario(3);
  if (name == "static") {
    TrajectoryConfig c;
    c.leader = {AngularProfile::Kind::kZero, 0.0, 1.0};
    c.follower = FollowerMode::kStatic;
    c.relative_amplitude.setZero();
    c.common_amplitude.setZero();
    return c;
  }
  throw Error(ErrorCode::kConfig, "unknown preset '" + name + "'");
}

void RunConfig::validate() const {
  trajectory.validate();
  estimator.window.validate();
  estimator.noise.validate(true);
  estimator.camera.validate();
  if (runs < 1) throw Error(ErrorCode::kConfig, "runs must be at least 1");
  if (!(measurement_noise >= 0.0)) throw Error(ErrorCode::kConfig, "measurement_noise must be >= 0");
  const double priors[] = {estimator.prior_rotation, estimator.prior_position, estimator.prior_velocity,
                           estimator.prior_gyro_bias, estimator.prior_accel_bias};
  for (double p : priors) {
    if (!(p > 0.0)) throw Error(ErrorCode::kConfig, "prior standard deviations must be positive");
  }
}

bool RunConfig::operator==(const RunConfig& other) const {
  return serialize_config(*this) == serialize_config(other);
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  std::vector<Line> lines;
  std::istringstream is(text);
  std::string raw, section;
  int no = 0;
  auto fail = [&](int line, const std::string& msg) {
    std::ostringstream os;
    os << origin << ":" << line << ": " << msg;
    throw Error(ErrorCode::kConfig, os.str());
  };
  while (std::getline(is, raw)) {
    ++no;
    std::string s = raw;
    const auto hash = s.find_first_of("#;");
    if (hash != std::string::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail(no, "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      const auto& ks = keys();
      if (std::none_of(ks.begin(), ks.end(), [&](const Key& k) { return k.section == section; }))
        fail(no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(no, "expected 'key = value'");
    if (section.empty()) fail(no, "key outside of a section");
    lines.push_back({no, section, trim(s.substr(0, eq)), trim(s.substr(eq + 1))});
  }

  RunConfig cfg;
  // The preset provides the base trajectory, wherever it appears.
  for (const Line& l : lines) {
    if (l.section == "trajectory" && l.key == "preset") {
      try {
        cfg.trajectory = preset_trajectory(l.value);
        cfg.preset = l.value;
      } catch (const Error& e) {
        fail(l.number, e.what());
      }
    }
  }
  for (const Line& l : lines) {
    if (l.section == "trajectory" && l.key == "preset") continue;
    const auto& ks = keys();
    auto it = std::find_if(ks.begin(), ks.end(),
                           [&](const Key& k) { return k.section == l.section && k.name == l.key; });
    if (it == ks.end()) fail(l.number, "unknown key '" + l.key + "' in [" + l.section + "]");
    try {
      it->set(cfg, l.value);
    } catch (const ParseError& e) {
      fail(l.number, "[" + l.section + "] " + l.key + ": " + e.msg);
    }
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, origin + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  os << "# effective configuration\n[trajectory]\npreset = " << cfg.preset << "\n";
  section = "trajectory";
  for (const Key& k : keys()) {
    if (k.section != section) {
      section = k.section;
      os << "\n[" << section << "]\n";
    }
    os << k.name << " = " << k.get(cfg) << "\n";
  }
  return os.str();
}

}  // namespace dpi
