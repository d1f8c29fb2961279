#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>

#include "dpi/errors.hpp"
#include "dpi/monte_carlo.hpp"
#include "dpi/smoother.hpp"
#include "dpi/synth.hpp"
#include "oracles.hpp"

using namespace dpi;

namespace {

/// r = W (local(ref, x_b) - local(ref, x_a) - u): linear in the tangent
/// coordinates while both states stay at zero rotation offset.
class LinearBetween : public Factor {
 public:
  LinearBetween(long a, long b, FullState ref, MatX W, VecX u)
      : keys_{a, b}, ref_(ref), W_(std::move(W)), u_(std::move(u)) {}
  const std::vector<long>& keys() const override { return keys_; }
  int dim() const override { return 21; }
  void linearize(std::span<const FullState* const> s, VecX& r, std::vector<MatX>& jac) const override {
    r = W_ * (local(ref_, *s[1]) - local(ref_, *s[0]) - u_);
    jac = {-W_, W_};
  }
  std::string name() const override { return "between"; }

 private:
  std::vector<long> keys_;
  FullState ref_;
  MatX W_;
  VecX u_;
};

Mat21 random_spd(std::mt19937_64& rng, double scale) {
  MatX A(21, 21);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int i = 0; i < A.size(); ++i) A.data()[i] = N(rng);
  return scale * (A * A.transpose() / 21.0 + Mat21::Identity());
}

StateDelta random_delta(std::mt19937_64& rng, double scale) {
  StateDelta d;
  std::normal_distribution<double> N(0.0, 1.0);
  for (int i = 0; i < 21; ++i) d[i] = scale * N(rng);
  return d;
}

struct Dataset {
  GroundTruth gt;
  ImuStreams imu;
  std::vector<std::vector<FeatureObservation>> features;
};

Dataset make_dataset(TrajectoryConfig cfg, const EstimatorConfig& est, double noise_scale, std::uint64_t seed) {
  Dataset d;
  d.gt = generate_trajectory(cfg);
  CameraModel cam = est.camera;
  cam.pixel_sigma *= noise_scale;
  d.imu = synthesize_imu(d.gt, est.noise.scaled(noise_scale), seed);
  d.features = synthesize_features(d.gt, est.markers, cam, seed ^ 0x5DEECE66DULL);
  return d;
}

TrajectoryConfig exact_regime(int which, double duration) {
  TrajectoryConfig c = regime(which);
  c.duration = duration;
  c.oversample = 1;
  c.bias_walk = false;
  return c;
}

}  // namespace

TEST(Smoother, PriorOnlyConvergesInOneIteration) {
  std::mt19937_64 rng(51);
  const FullState mean = oracle::random_state(rng);
  const Mat21 cov = random_spd(rng, 1e-2);
  WindowConfig wc;
  FixedLagSmoother sm(wc, {}, {}, {}, mean, cov);
  StateDelta d = random_delta(rng, 0.1);
  d.head<3>().setZero();
  const long id = sm.add_state(0.0, retract(mean, d));
  sm.add_factor(PriorFactor::from_covariance(id, mean, cov));
  const auto est = sm.optimize();
  ASSERT_EQ(est.iterations.size(), 1u);
  EXPECT_LT(local(mean, sm.latest().x).norm(), 1e-9);
  EXPECT_LT(sm.cost(), 1e-18);
  EXPECT_LT((sm.latest().cov - cov).norm(), 1e-9 * cov.norm());
}

TEST(Smoother, FirstKeyframeUsesPrior) {
  std::mt19937_64 rng(52);
  const FullState mean = oracle::random_state(rng);
  FixedLagSmoother sm({}, {}, {}, default_marker_layout(), mean, 1e-4 * Mat21::Identity());
  sm.add_keyframe(0.0, {}, {}, {});
  EXPECT_LT(local(mean, sm.latest().x).norm(), 1e-15);
  ASSERT_NE(sm.prior(), nullptr);
  EXPECT_EQ(sm.window().size(), 1u);
}

TEST(Smoother, NoiseFreeDataLeavesTruthUnchanged) {
  EstimatorConfig est;
  const Dataset d = make_dataset(exact_regime(1, 1.0), est, 0.0, 3);
  const FullState x0 = d.gt.state_at(0);
  FixedLagSmoother sm(est.window, est.noise, est.camera, est.markers, x0, est.prior_covariance());
  for (std::size_t f = 0; f < d.gt.frames(); ++f) {
    const auto sf = f ? frame_samples(d.imu.follower, d.gt.imu_per_frame, f - 1) : std::span<const ImuSample>();
    const auto sl = f ? frame_samples(d.imu.leader, d.gt.imu_per_frame, f - 1) : std::span<const ImuSample>();
    sm.add_keyframe(d.gt.t[f * d.gt.imu_per_frame], sf, sl, d.features[f]);
    const auto out = sm.optimize();
    EXPECT_LT(out.iterations.front().step_norm, 1e-6);
    const FullState truth = d.gt.state_at(f * d.gt.imu_per_frame);
    EXPECT_LT(local(truth, sm.latest().x).norm(), 1e-6) << f;
  }
}

TEST(Smoother, UnknownMarkerIsDataError) {
  FixedLagSmoother sm({}, {}, {}, default_marker_layout(), FullState{}, Mat21::Identity());
  const std::vector<FeatureObservation> obs{{999, Vec2(1, 1), 0.0}};
  try {
    sm.add_keyframe(0.0, {}, {}, obs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kData);
  }
}

TEST(Smoother, LaterKeyframeNeedsSamples) {
  FixedLagSmoother sm({}, {}, {}, {}, FullState{}, Mat21::Identity());
  sm.add_keyframe(0.0, {}, {}, {});
  try {
    sm.add_keyframe(0.04, {}, {}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptySampleSet);
  }
}

TEST(Marginalization, MatchesGaussianComposition) {
  std::mt19937_64 rng(53);
  FullState ref = oracle::random_state(rng);
  StateDelta m0 = random_delta(rng, 0.05);
  m0.head<3>().setZero();
  const FullState mean0 = retract(ref, m0);
  const Mat21 P0 = random_spd(rng, 1e-2);
  const Mat21 Sw = random_spd(rng, 1e-3);
  const MatX W = Eigen::LLT<Mat21>(Sw.inverse()).matrixU();
  const VecX u = random_delta(rng, 0.1);

  FixedLagSmoother sm({}, {}, {}, {}, ref, Mat21::Identity());
  const long a = sm.add_state(0.0, ref);
  sm.add_factor(PriorFactor::from_covariance(a, mean0, P0));
  const long b = sm.add_state(1.0, ref);
  sm.add_factor(std::make_unique<LinearBetween>(a, b, ref, W, u));
  const PriorFactor* prior = sm.marginalize_oldest();
  ASSERT_NE(prior, nullptr);
  ASSERT_EQ(prior->keys(), std::vector<long>{b});

  const Mat21 expected_info = (P0 + Sw).inverse();
  const MatX H = prior->information();
  EXPECT_LT((H - expected_info).norm(), 1e-8 * expected_info.norm());
  const VecX mean1 = -H.ldlt().solve(prior->information_vector());
  EXPECT_LT((mean1 - (m0 + u)).norm(), 1e-8);
  EXPECT_EQ(sm.window().size(), 1u);
}

TEST(Marginalization, UnconstrainedStateGivesFlatPrior) {
  FixedLagSmoother sm({}, {}, {}, {}, FullState{}, Mat21::Identity());
  sm.add_state(0.0, FullState{});
  sm.add_state(1.0, FullState{});
  EXPECT_EQ(sm.marginalize_oldest(), nullptr);
  EXPECT_EQ(sm.prior(), nullptr);
}

TEST(Marginalization, NeedsTwoStates) {
  FixedLagSmoother sm({}, {}, {}, {}, FullState{}, Mat21::Identity());
  sm.add_state(0.0, FullState{});
  EXPECT_THROW(sm.marginalize_oldest(), Error);
}

TEST(Smoother, InsertionOrderDoesNotChangeNormalEquations) {
  std::mt19937_64 rng(54);
  EstimatorConfig est;
  const Dataset d = make_dataset(exact_regime(1, 0.2), est, 1.0, 5);
  const FullState x0 = d.gt.state_at(0);
  const FullState x1 = retract(d.gt.state_at(d.gt.imu_per_frame), random_delta(rng, 1e-3));
  const auto pf = integrate(frame_samples(d.imu.follower, d.gt.imu_per_frame, 0), x0.follower, est.noise);
  const auto pl = integrate(frame_samples(d.imu.leader, d.gt.imu_per_frame, 0), x0.leader, est.noise);

  auto make = [&](bool reversed) {
    auto sm = std::make_unique<FixedLagSmoother>(est.window, est.noise, est.camera, est.markers, x0,
                                                 est.prior_covariance());
    const long a = sm->add_state(0.0, x0);
    const long b = sm->add_state(0.04, x1);
    std::vector<std::unique_ptr<Factor>> fs;
    fs.push_back(PriorFactor::from_covariance(a, x0, est.prior_covariance()));
    fs.push_back(std::make_unique<DualPreintegrationResidual>(a, b, DualPreintegrationFactor::build(x0, pf, pl)));
    fs.push_back(std::make_unique<BiasWalkResidual>(a, b, est.noise, pf.dt()));
    std::map<int, Marker> by_id;
    for (const auto& m : est.markers) by_id[m.id] = m;
    for (const auto& o : d.features[0]) fs.push_back(std::make_unique<ReprojectionResidual>(a, by_id[o.marker_id], est.camera, o));
    for (const auto& o : d.features[1]) fs.push_back(std::make_unique<ReprojectionResidual>(b, by_id[o.marker_id], est.camera, o));
    if (reversed) std::reverse(fs.begin(), fs.end());
    for (auto& f : fs) sm->add_factor(std::move(f));
    return sm;
  };
  const auto A = make(false)->normal_equations();
  const auto B = make(true)->normal_equations();
  EXPECT_LT((A.first - B.first).norm(), 1e-12 * A.first.norm());
  EXPECT_LT((A.second - B.second).norm(), 1e-12 * std::max(1.0, A.second.norm()));
}

TEST(Smoother, MissingFeaturesInflatePositionCovariance) {
  EstimatorConfig est;
  const Dataset d = make_dataset(exact_regime(1, 0.5), est, 1.0, 7);
  auto run = [&](bool last_has_features) {
    FixedLagSmoother sm(est.window, est.noise, est.camera, est.markers, d.gt.state_at(0), est.prior_covariance());
    const std::size_t n = d.gt.frames();
    for (std::size_t f = 0; f < n; ++f) {
      const auto sf = f ? frame_samples(d.imu.follower, d.gt.imu_per_frame, f - 1) : std::span<const ImuSample>();
      const auto sl = f ? frame_samples(d.imu.leader, d.gt.imu_per_frame, f - 1) : std::span<const ImuSample>();
      const bool use = f + 1 < n || last_has_features;
      sm.add_keyframe(d.gt.t[f * d.gt.imu_per_frame], sf, sl,
                      use ? std::span<const FeatureObservation>(d.features[f]) : std::span<const FeatureObservation>());
      sm.optimize();
    }
    return sm.latest().cov.block<3, 3>(idx::kP, idx::kP).trace();
  };
  const double with = run(true), without = run(false);
  EXPECT_TRUE(std::isfinite(without));
  EXPECT_GT(without, 1.5 * with);
}

TEST(Smoother, AcceptedStepsNeverIncreaseCost) {
  EstimatorConfig est;
  est.window.max_iterations = 3;
  const Dataset d = make_dataset(regime(3), est, 1.0, 9);
  const auto run = run_estimator(d.gt, d.imu, d.features, est);
  ASSERT_FALSE(run.diagnostics.empty());
  for (const auto& it : run.diagnostics) {
    if (!it.step_rejected) EXPECT_LE(it.cost_after, it.cost_before * (1.0 + 1e-12) + 1e-300);
  }
}

TEST(Smoother, FixedLagTracksBatchSolve) {
  // 200 keyframes. The batch window holds every state and is relinearized
  // until convergence; the fixed-lag run keeps two states and one step.
  EstimatorConfig est;
  TrajectoryConfig traj = regime(1);
  traj.duration = 8.0;
  const Dataset d = make_dataset(traj, est, 1.0, 11);
  ASSERT_GE(d.gt.frames(), 200u);
  const FullState x0 = [&] {
    FullState x;
    x.s = d.gt.relative.front();
    return x;
  }();

  const auto lag = run_estimator(d.gt, d.imu, d.features, est, x0);

  WindowConfig batch_cfg;
  batch_cfg.size = static_cast<int>(d.gt.frames()) + 1;
  batch_cfg.max_iterations = 10;
  batch_cfg.compute_covariances = false;
  batch_cfg.convergence_threshold = 1e-8;
  FixedLagSmoother batch(batch_cfg, est.noise, est.camera, est.markers, x0, est.prior_covariance());
  for (std::size_t f = 0; f < d.gt.frames(); ++f) {
    const auto sf = f ? frame_samples(d.imu.follower, d.gt.imu_per_frame, f - 1) : std::span<const ImuSample>();
    const auto sl = f ? frame_samples(d.imu.leader, d.gt.imu_per_frame, f - 1) : std::span<const ImuSample>();
    batch.add_keyframe(d.gt.t[f * d.gt.imu_per_frame], sf, sl, d.features[f]);
  }
  batch.optimize();
  ASSERT_EQ(batch.window().size(), d.gt.frames());
  double sq = 0.0;
  for (std::size_t f = 0; f < d.gt.frames(); ++f) {
    sq += (batch.window()[f].x.s.p - d.gt.relative[f * d.gt.imu_per_frame].p).squaredNorm();
  }
  const double batch_rmse_cm = 100.0 * std::sqrt(sq / d.gt.frames());
  EXPECT_LT(lag.rmse_p_cm, 2.0 * batch_rmse_cm);
  EXPECT_GT(batch_rmse_cm, 0.0);
}

TEST(Smoother, MoreIterationsDoNotHurtOmega3) {
  EstimatorConfig one, three;
  three.window.max_iterations = 3;
  double sum1 = 0.0, sum3 = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Dataset d = make_dataset(regime(3), one, 1.0, seed);
    sum1 += run_estimator(d.gt, d.imu, d.features, one).rmse_p_cm;
    sum3 += run_estimator(d.gt, d.imu, d.features, three).rmse_p_cm;
  }
  EXPECT_LE(sum3, sum1 * 1.01);
}

TEST(Smoother, BiasErrorsStayInsideThreeSigmaOnCase1) {
  EstimatorConfig est;
  const TrajectoryConfig traj = scenario(scenario_spec(MotionCase::kCase1));
  const GroundTruth gt = generate_trajectory(traj);
  long inside = 0, total = 0;
  for (std::uint64_t r = 0; r < 20; ++r) {
    CameraModel cam = est.camera;
    const ImuStreams imu = synthesize_imu(gt, est.noise, 100 + r);
    const auto feats = synthesize_features(gt, est.markers, cam, (100 + r) ^ 0x5DEECE66DULL);
    FullState x0 = gt.state_at(0);
    x0.follower = x0.leader = Bias{};
    const auto run = run_estimator(gt, imu, feats, est, x0);
    for (std::size_t f = 0; f < run.estimates.size(); ++f) {
      const FullState truth = gt.state_at(f * gt.imu_per_frame);
      const StateDelta e = local(truth, run.estimates[f].x);
      for (int k = idx::kFg; k < 21; ++k) {
        ++total;
        if (std::abs(e[k]) <= 3.0 * std::sqrt(run.estimates[f].cov(k, k))) ++inside;
      }
    }
  }
  EXPECT_GE(static_cast<double>(inside) / total, 0.9);
}

TEST(Whitening, InvertsCovariance) {
  std::mt19937_64 rng(55);
  Eigen::Matrix<double, 9, 9> A;
  std::normal_distribution<double> N(0.0, 1.0);
  for (int i = 0; i < 81; ++i) A.data()[i] = N(rng);
  const Mat9 C = A * A.transpose() + 0.1 * Mat9::Identity();
  const Mat9 W = whitening(C);
  EXPECT_LT((W.transpose() * W * C - Mat9::Identity()).norm(), 1e-9);
}

TEST(WindowConfig, Validation) {
  WindowConfig c;
  EXPECT_NO_THROW(c.validate());
  c.size = 1;
  EXPECT_THROW(c.validate(), Error);
  c = WindowConfig{};
  c.step_damping = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = WindowConfig{};
  c.max_iterations = 0;
  EXPECT_THROW(c.validate(), Error);
}
