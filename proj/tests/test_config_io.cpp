#include <gtest/gtest.h>

#include <filesystem>

#include "dpi/config.hpp"
#include "dpi/csv_io.hpp"
#include "dpi/errors.hpp"
#include "oracles.hpp"

using namespace dpi;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir(const std::string& name) {
  const fs::path p = fs::path(DPI_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string config_error(const std::string& text) {
  try {
    parse_config(text, "cfg.ini");
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
    return e.what();
  }
  ADD_FAILURE() << "no error for:\n" << text;
  return "";
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  RunConfig a;
  a.trajectory = preset_trajectory("omega1");
  const RunConfig b = parse_config(serialize_config(a));
  EXPECT_TRUE(a == b);
  EXPECT_EQ(serialize_config(a), serialize_config(b));
}

TEST(Config, EveryPresetRoundTrips) {
  for (const char* name : {"omega1", "omega2", "omega3", "general", "case1", "case2", "case3", "case4", "bias1",
                           "bias2", "bias3", "static"}) {
    const RunConfig a = parse_config(std::string("[trajectory]\npreset = ") + name + "\n");
    EXPECT_EQ(a.preset, name);
    EXPECT_TRUE(parse_config(serialize_config(a)) == a) << name;
  }
}

TEST(Config, OverridesAndComments) {
  const RunConfig c = parse_config(
      "# comment\n"
      "[trajectory]\n"
      "duration = 3.5   ; trailing\n"
      "preset = omega3\n"
      "follower_gyro_bias = 0.01, -0.02 0.03\n"
      "\n"
      "[imu]\n"
      "gyro_noise = 2e-3\n"
      "[window]\n"
      "size = 4\n"
      "covariances = false\n"
      "[run]\n"
      "seed = 99\n"
      "runs = 5\n"
      "measurement_noise = 0\n");
  EXPECT_EQ(c.preset, "omega3");
  EXPECT_DOUBLE_EQ(c.trajectory.duration, 3.5);
  EXPECT_EQ(c.trajectory.leader.kind, AngularProfile::Kind::kStochastic);
  EXPECT_EQ(c.trajectory.follower_bias.gyro, Vec3(0.01, -0.02, 0.03));
  EXPECT_DOUBLE_EQ(c.estimator.noise.gyro_noise, 2e-3);
  EXPECT_EQ(c.estimator.window.size, 4);
  EXPECT_FALSE(c.estimator.window.compute_covariances);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.runs, 5);
  EXPECT_EQ(c.measurement_noise, 0.0);
}

TEST(Config, ErrorsNameTheLine) {
  EXPECT_NE(config_error("[trajectory]\nduration = abc\n").find("cfg.ini:2"), std::string::npos);
  EXPECT_NE(config_error("[trajectory]\n\nbogus = 1\n").find("cfg.ini:3"), std::string::npos);
  EXPECT_NE(config_error("[nowhere]\n").find("cfg.ini:1"), std::string::npos);
  EXPECT_NE(config_error("duration = 1\n").find("cfg.ini:1"), std::string::npos);
  EXPECT_NE(config_error("[trajectory]\nfollower_axis = 1, 2\n").find("cfg.ini:2"), std::string::npos);
  config_error("[trajectory]\npreset = omega9\n");
  config_error("[window]\nsize = 1\n");
  config_error("[trajectory]\ncamera_rate = 30\n");
  config_error("[run]\nruns = 0\n");
}

TEST(Config, LoadMissingFile) {
  try {
    load_config("/nonexistent/config.ini");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
}

TEST(Csv, AtomicWriteAndRead) {
  const std::string dir = tmp_dir("csv_atomic");
  const std::string path = dir + "/nested/file.txt";
  write_file_atomic(path, "hello\n");
  write_file_atomic(path, "world\n");
  EXPECT_EQ(read_file(path), "world\n");
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir + "/nested")) {
    (void)e;
    ++files;
  }
  EXPECT_EQ(files, 1);
}

TEST(Csv, SchemaAndNumberErrors) {
  EXPECT_THROW(parse_csv("a,b\n1,2\n", "x.csv"), Error);
  try {
    parse_csv("# schema=1\na,b\n1,2\n3,zz\n", "x.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kData);
    EXPECT_NE(std::string(e.what()).find("x.csv:4"), std::string::npos);
  }
  EXPECT_THROW(parse_csv("# schema=1\na,b\n1\n", "x.csv"), Error);
  const CsvTable t = parse_csv("# schema=1\na,b\n1,2\n", "x.csv");
  EXPECT_EQ(t.column("b"), 1);
  EXPECT_THROW(t.column("c"), Error);
}

TEST(Csv, TrajectoryRoundTrip) {
  TrajectoryConfig c = regime(2);
  c.duration = 0.5;
  const GroundTruth gt = generate_trajectory(c);
  const TrajectoryTable t = read_trajectory(parse_csv(trajectory_csv(gt), "trajectory.csv"));
  ASSERT_EQ(t.states.size(), gt.ticks());
  for (std::size_t k = 0; k < gt.ticks(); ++k) {
    EXPECT_EQ(t.t[k], gt.t[k]);
    EXPECT_EQ(t.states[k].s.p, gt.relative[k].p);
    EXPECT_EQ(t.states[k].s.v, gt.relative[k].v);
    EXPECT_LT((t.states[k].s.R.matrix() - gt.relative[k].R.matrix()).norm(), 1e-15);
    EXPECT_EQ(t.states[k].follower.accel, gt.follower.bias[k].accel);
    EXPECT_EQ(t.lambda[k], gt.lambda[k]);
  }
}

TEST(Csv, ImuAndFeatureRoundTrip) {
  TrajectoryConfig c = regime(1);
  c.duration = 0.5;
  const GroundTruth gt = generate_trajectory(c);
  const ImuStreams imu = synthesize_imu(gt, ImuNoiseModel{}, 3);
  std::vector<double> t(gt.t.begin(), gt.t.end() - 1);
  const ImuTable it = read_imu(parse_csv(imu_csv(t, imu.leader), "imu.csv"));
  ASSERT_EQ(it.samples.size(), imu.leader.size());
  for (std::size_t k = 0; k < it.samples.size(); ++k) {
    EXPECT_EQ(it.samples[k].gyro, imu.leader[k].gyro);
    EXPECT_EQ(it.samples[k].accel, imu.leader[k].accel);
    EXPECT_EQ(it.samples[k].dt, imu.leader[k].dt);
  }
  const auto feats = synthesize_features(gt, default_marker_layout(), CameraModel{}, 4);
  const auto back = read_features(parse_csv(features_csv(feats), "features.csv"));
  ASSERT_EQ(back.size(), feats.size());
  for (std::size_t f = 0; f < feats.size(); ++f) {
    ASSERT_EQ(back[f].size(), feats[f].size());
    for (std::size_t k = 0; k < feats[f].size(); ++k) {
      EXPECT_EQ(back[f][k].marker_id, feats[f][k].marker_id);
      EXPECT_EQ(back[f][k].pixel, feats[f][k].pixel);
    }
  }
}

TEST(Csv, EstimatesHaveCovarianceAndResidualColumns) {
  Keyframe k;
  k.cov = Mat21::Identity() * 2.0;
  const CsvTable t = parse_csv(estimates_csv({k, k}, {0.5, 0.25}), "estimate.csv");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][t.column("residual_norm")], 0.25);
  EXPECT_EQ(t.rows[0][t.column("cov20")], 2.0);
}
