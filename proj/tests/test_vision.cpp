#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "dpi/errors.hpp"
#include "dpi/vision.hpp"
#include "oracles.hpp"

using namespace dpi;

namespace {

CameraModel square_camera() {
  CameraModel c;
  c.cx = c.cy = 320.0;
  c.width = c.height = 640;
  return c;
}

Vec2 pinhole(const Mat3& R, const Vec3& p, const Vec3& m, const CameraModel& c) {
  const Vec3 X = R * m + p;
  return Vec2(c.fx * X.x() / X.z() + c.cx, c.fy * X.y() / X.z() + c.cy);
}

RelativeState in_front(std::mt19937_64& rng) {
  RelativeState s;
  s.R = exp_map(oracle::random_vec(rng, 0.3));
  s.p = Vec3(0.0, 0.0, 1.0) + oracle::random_vec(rng, 0.05);
  s.v = oracle::random_vec(rng);
  return s;
}

RelativeState perturb(const RelativeState& s, const Eigen::VectorXd& d) {
  RelativeState out = s;
  out.R = s.R * exp_map(d.head<3>());
  out.p += d.segment<3>(3);
  out.v += d.segment<3>(6);
  return out;
}

}  // namespace

TEST(Project, OpticalAxisAndOffset) {
  const CameraModel cam = square_camera();
  RelativeState s;
  s.p = Vec3(0, 0, 1);
  EXPECT_LT((project(s, Marker{0, Vec3::Zero()}, cam) - Vec2(320, 320)).norm(), 1e-12);
  EXPECT_LT((project(s, Marker{1, Vec3(0.1, 0, 0)}, cam) - Vec2(370, 320)).norm(), 1e-12);
}

TEST(Project, MatchesPinholeOracle) {
  std::mt19937_64 rng(41);
  const CameraModel cam;
  for (int i = 0; i < 200; ++i) {
    const RelativeState s = in_front(rng);
    const Marker m{i, oracle::random_vec(rng, 0.05)};
    EXPECT_LT((project(s, m, cam) - pinhole(s.R.matrix(), s.p, m.position, cam)).norm(), 1e-9);
  }
}

TEST(Project, BehindCamera) {
  RelativeState s;
  s.p = Vec3(0, 0, -1);
  try {
    project(s, Marker{}, CameraModel{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBehindCamera);
  }
  EXPECT_FALSE(try_project(s, Marker{}, CameraModel{}).has_value());
  s.p.z() = 0.5e-6;
  EXPECT_THROW(project(s, Marker{}, CameraModel{}), Error);
}

TEST(Reprojection, ZeroAtExactObservation) {
  std::mt19937_64 rng(42);
  const RelativeState s = in_front(rng);
  const Marker m{3, Vec3(0.02, -0.01, 0.03)};
  const FeatureObservation obs{3, project(s, m, CameraModel{}), 0.0};
  const auto r = reprojection_residual_and_jacobian(s, m, CameraModel{}, obs);
  EXPECT_LT(r.residual.norm(), 1e-12);
  EXPECT_TRUE(r.jacobian.rightCols<3>().isZero(0.0));
}

TEST(Reprojection, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(43);
  const CameraModel cam;
  for (int i = 0; i < 50; ++i) {
    const RelativeState s = in_front(rng);
    const Marker m{i, oracle::random_vec(rng, 0.05)};
    const FeatureObservation obs{i, project(s, m, cam) + Vec2(1.5, -0.7), 0.0};
    const auto r = reprojection_residual_and_jacobian(s, m, cam, obs);
    const Eigen::MatrixXd J = oracle::numerical_jacobian(
        [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
          return reprojection_residual_and_jacobian(perturb(s, d), m, cam, obs).residual;
        },
        9);
    EXPECT_LT(oracle::relative_error(J, r.jacobian), 1e-5);
  }
}

TEST(Reprojection, VelocityHasNoEffect) {
  std::mt19937_64 rng(44);
  const RelativeState s = in_front(rng);
  RelativeState moved = s;
  moved.v += Vec3(5, -3, 2);
  const Marker m{0, Vec3(0.05, 0, 0)};
  EXPECT_EQ(project(s, m, CameraModel{}), project(moved, m, CameraModel{}));
}

TEST(Reprojection, UniqueMinimumNearTruth) {
  std::mt19937_64 rng(45);
  const CameraModel cam;
  const auto markers = default_marker_layout();
  const RelativeState truth = in_front(rng);
  std::vector<FeatureObservation> obs;
  for (const auto& m : markers) obs.push_back({m.id, project(truth, m, cam), 0.0});

  for (int start = 0; start < 20; ++start) {
    Eigen::VectorXd d0(9);
    d0 << oracle::random_vec(rng), oracle::random_vec(rng), Vec3::Zero();
    d0.head<6>() *= 0.1 / d0.head<6>().norm();
    RelativeState s = perturb(truth, d0);
    for (int it = 0; it < 30; ++it) {
      Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
      Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
      for (std::size_t k = 0; k < markers.size(); ++k) {
        const auto r = reprojection_residual_and_jacobian(s, markers[k], cam, obs[k]);
        const Eigen::Matrix<double, 2, 6> J = r.jacobian.leftCols<6>();
        H += J.transpose() * J;
        g += J.transpose() * r.residual;
      }
      Eigen::VectorXd step = Eigen::VectorXd::Zero(9);
      step.head<6>() = -H.ldlt().solve(g);
      s = perturb(s, step);
    }
    EXPECT_LT(geodesic_distance(s.R, truth.R), 1e-9) << start;
    EXPECT_LT((s.p - truth.p).norm(), 1e-9) << start;
  }
}

TEST(Markers, DefaultLayoutIsNonCoplanar) {
  const auto markers = default_marker_layout();
  EXPECT_EQ(markers.size(), 28u);
  Eigen::MatrixXd P(3, markers.size());
  for (std::size_t i = 0; i < markers.size(); ++i) P.col(i) = markers[i].position;
  const Eigen::MatrixXd C = P.colwise() - P.rowwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C);
  EXPECT_GT(svd.singularValues()[2], 1e-3);
}

TEST(Camera, Validation) {
  CameraModel c;
  EXPECT_NO_THROW(c.validate());
  c.fx = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = CameraModel{};
  c.pixel_sigma = -1.0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_TRUE(CameraModel{}.in_image(Vec2(10, 10)));
  EXPECT_FALSE(CameraModel{}.in_image(Vec2(-1, 10)));
}
