#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "dpi/cli.hpp"
#include "dpi/dual_preintegration.hpp"
#include "dpi/errors.hpp"
#include "dpi/lie.hpp"
#include "dpi/monte_carlo.hpp"
#include "dpi/observability.hpp"
#include "dpi/preintegration.hpp"
#include "dpi/synth.hpp"
#include "dpi/vision.hpp"

namespace py = pybind11;
using namespace dpi;

namespace {

std::vector<ImuSample> samples_from(const Eigen::MatrixXd& gyro, const Eigen::MatrixXd& accel, double dt) {
  if (gyro.cols() != 3 || accel.cols() != 3 || gyro.rows() != accel.rows())
    throw Error(ErrorCode::kData, "gyro and accel must be N x 3 arrays of equal length");
  std::vector<ImuSample> s(gyro.rows());
  for (Eigen::Index k = 0; k < gyro.rows(); ++k) s[k] = {gyro.row(k).transpose(), accel.row(k).transpose(), dt};
  return s;
}

Eigen::MatrixXd stack(const std::vector<Vec3>& v) {
  Eigen::MatrixXd out(v.size(), 3);
  for (std::size_t k = 0; k < v.size(); ++k) out.row(k) = v[k].transpose();
  return out;
}

template <class T>
std::string repr_of(const char* name, const T& v) {
  std::ostringstream os;
  os << name << "(" << v.transpose() << ")";
  return os.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Relative inertial-visual state estimation with dual IMU preintegration";

  static py::exception<Error> error(m, "DpiError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string msg = std::string(to_string(e.code())) + ": " + e.what();
      error(msg.c_str());
    }
  });

  // Lie layer
  m.def("exp_map", [](const Vec3& phi) { return exp_map(phi).matrix(); }, py::arg("phi"));
  m.def("log_map", [](const Mat3& R) { return log_map(Rotation::from_matrix(R)); }, py::arg("R"));
  m.def("right_jacobian", &right_jacobian, py::arg("phi"));
  m.def("right_jacobian_inv", &right_jacobian_inv, py::arg("phi"));
  m.def("hat", &hat);

  py::class_<Bias>(m, "Bias")
      .def(py::init<>())
      .def(py::init([](const Vec3& g, const Vec3& a) { return Bias{g, a}; }), py::arg("gyro"), py::arg("accel"))
      .def_readwrite("gyro", &Bias::gyro)
      .def_readwrite("accel", &Bias::accel);

  py::class_<ImuNoiseModel>(m, "ImuNoiseModel")
      .def(py::init<>())
      .def_readwrite("gyro_noise", &ImuNoiseModel::gyro_noise)
      .def_readwrite("accel_noise", &ImuNoiseModel::accel_noise)
      .def_readwrite("gyro_walk", &ImuNoiseModel::gyro_walk)
      .def_readwrite("accel_walk", &ImuNoiseModel::accel_walk)
      .def_readwrite("gravity", &ImuNoiseModel::gravity)
      .def("scaled", &ImuNoiseModel::scaled);

  py::class_<Preintegration>(m, "Preintegration")
      .def_property_readonly("delta_R", [](const Preintegration& p) { return p.delta_R().matrix(); })
      .def_property_readonly("delta_v", &Preintegration::delta_v)
      .def_property_readonly("delta_p", &Preintegration::delta_p)
      .def_property_readonly("dt", &Preintegration::dt)
      .def_property_readonly("covariance", &Preintegration::covariance);

  m.def(
      "integrate",
      [](const Eigen::MatrixXd& gyro, const Eigen::MatrixXd& accel, double dt, const Bias& b,
         const ImuNoiseModel& noise) { return integrate(samples_from(gyro, accel, dt), b, noise); },
      py::arg("gyro"), py::arg("accel"), py::arg("dt"), py::arg("bias") = Bias{},
      py::arg("noise") = ImuNoiseModel{});

  py::class_<RelativeState>(m, "RelativeState")
      .def(py::init<>())
      .def_property(
          "R", [](const RelativeState& s) { return s.R.matrix(); },
          [](RelativeState& s, const Mat3& R) { s.R = Rotation::from_matrix(R); })
      .def_readwrite("p", &RelativeState::p)
      .def_readwrite("v", &RelativeState::v)
      .def("__repr__", [](const RelativeState& s) { return repr_of("RelativeState p=", s.p); });

  py::class_<FullState>(m, "FullState")
      .def(py::init<>())
      .def_readwrite("s", &FullState::s)
      .def_readwrite("follower", &FullState::follower)
      .def_readwrite("leader", &FullState::leader);

  py::class_<DualPreintegrationFactor>(m, "DualPreintegrationFactor")
      .def_static("build", &DualPreintegrationFactor::build, py::arg("x_bar"), py::arg("follower"),
                  py::arg("leader"))
      .def_property_readonly("nominal", &DualPreintegrationFactor::nominal)
      .def_property_readonly("covariance", &DualPreintegrationFactor::covariance)
      .def_property_readonly("noise_map", &DualPreintegrationFactor::noise_map)
      .def_property_readonly("dt", &DualPreintegrationFactor::dt)
      .def("residual", &DualPreintegrationFactor::residual, py::arg("x_i"), py::arg("x_j"));

  m.def("predict", &predict, py::arg("x_i"), py::arg("follower"), py::arg("leader"));

  // Vision
  py::class_<CameraModel>(m, "CameraModel")
      .def(py::init<>())
      .def_readwrite("fx", &CameraModel::fx)
      .def_readwrite("fy", &CameraModel::fy)
      .def_readwrite("cx", &CameraModel::cx)
      .def_readwrite("cy", &CameraModel::cy);
  py::class_<Marker>(m, "Marker")
      .def(py::init([](int id, const Vec3& p) { return Marker{id, p}; }), py::arg("id"), py::arg("position"))
      .def_readwrite("id", &Marker::id)
      .def_readwrite("position", &Marker::position);
  m.def("default_marker_layout", &default_marker_layout);
  m.def("project", &project, py::arg("state"), py::arg("marker"), py::arg("camera") = CameraModel{});

  // Simulation and estimation
  py::class_<TrajectoryConfig>(m, "TrajectoryConfig")
      .def_readwrite("duration", &TrajectoryConfig::duration)
      .def_readwrite("imu_rate", &TrajectoryConfig::imu_rate)
      .def_readwrite("camera_rate", &TrajectoryConfig::camera_rate)
      .def_readwrite("oversample", &TrajectoryConfig::oversample)
      .def_readwrite("bias_walk", &TrajectoryConfig::bias_walk);
  m.def("regime", &regime, py::arg("which"));
  m.def("bias_scenario", &bias_scenario, py::arg("which"));

  py::class_<GroundTruth>(m, "GroundTruth")
      .def_readonly("t", &GroundTruth::t)
      .def_readonly("lambda_", &GroundTruth::lambda)
      .def_readonly("imu_dt", &GroundTruth::imu_dt)
      .def_readonly("imu_per_frame", &GroundTruth::imu_per_frame)
      .def_property_readonly("relative_p",
                             [](const GroundTruth& g) {
                               std::vector<Vec3> p;
                               for (const auto& s : g.relative) p.push_back(s.p);
                               return stack(p);
                             })
      .def("state_at", &GroundTruth::state_at);
  m.def("generate_trajectory", &generate_trajectory, py::arg("config"));

  py::class_<RunResult>(m, "RunResult")
      .def_readonly("run", &RunResult::run)
      .def_readonly("seed", &RunResult::seed)
      .def_readonly("ok", &RunResult::ok)
      .def_readonly("error", &RunResult::error)
      .def_readonly("rmse_theta_deg", &RunResult::rmse_theta_deg)
      .def_readonly("rmse_p_cm", &RunResult::rmse_p_cm)
      .def_readonly("ms_per_update", &RunResult::ms_per_update);
  py::class_<MonteCarloResult>(m, "MonteCarloResult")
      .def_readonly("runs", &MonteCarloResult::runs)
      .def_readonly("used", &MonteCarloResult::used);
  m.def(
      "run_monte_carlo",
      [](const TrajectoryConfig& traj, int runs, std::uint64_t seed, int threads, double noise_scale) {
        py::gil_scoped_release release;
        return run_monte_carlo(traj, EstimatorConfig{}, runs, seed, threads, noise_scale);
      },
      py::arg("trajectory"), py::arg("runs"), py::arg("seed") = 0, py::arg("threads") = 0,
      py::arg("noise_scale") = 1.0);

  // Observability
  m.def(
      "observability",
      [](int which) {
        const MotionCase c = static_cast<MotionCase>(which);
        if (which < 0 || which > 4) throw Error(ErrorCode::kUnsupportedCase, "motion case must be 0..4");
        const MotionCaseSpec spec = which == 0 ? MotionCaseSpec{} : scenario_spec(c);
        const GroundTruth gt = generate_trajectory(which == 0 ? regime(1) : scenario(spec));
        const ImuStreams imu = synthesize_imu(gt, ImuNoiseModel{}.scaled(0.0), 1);
        std::vector<FullState> states;
        for (std::size_t f = 0; f < gt.frames(); ++f) states.push_back(gt.state_at(f * gt.imu_per_frame));
        const auto w = classify_window(frame_factors(states, imu, gt.imu_per_frame, ImuNoiseModel{}), spec);
        py::dict d;
        d["stacked_rank"] = w.stacked_rank;
        d["stacked_singular_values"] = w.stacked_singular_values;
        d["intersection"] = w.intersection;
        d["predicted_accel"] = w.predicted_accel;
        d["predicted_gyro"] = w.predicted_gyro;
        d["max_direction_residual"] = w.max_direction_residual;
        return d;
      },
      py::arg("case") = 0);

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
