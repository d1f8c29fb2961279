#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <deque>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dpi/dual_preintegration.hpp"
#include "dpi/preintegration.hpp"
#include "dpi/vision.hpp"

namespace dpi {

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

struct WindowConfig {
  int size = 2;
  int max_iterations = 1;
  double step_damping = 1.0;
  double convergence_threshold = 1e-10;
  bool compute_covariances = true;

  void validate() const;
};

/// Whitened residual over one or more keyframe states. Jacobians are taken
/// with respect to the 21-dim retraction delta of each state.
class Factor {
 public:
  virtual ~Factor() = default;
  virtual const std::vector<long>& keys() const = 0;
  virtual int dim() const = 0;
  /// states[k] matches keys()[k]. jac[k] is dim() x 21.
  virtual void linearize(std::span<const FullState* const> states, VecX& r,
                         std::vector<MatX>& jac) const = 0;
  virtual std::string name() const = 0;
};

/// Gaussian prior in square-root form: r = J local(x_lin, x) + r0.
class PriorFactor : public Factor {
 public:
  PriorFactor(std::vector<long> keys, std::vector<FullState> lin, MatX J, VecX r0);
  /// Prior from a mean and covariance on a single state.
  static std::unique_ptr<PriorFactor> from_covariance(long key, const FullState& mean,
                                                      const Mat21& cov);
  /// Prior from information H and gradient g (cost 0.5 d'Hd + g'd).
  static std::unique_ptr<PriorFactor> from_information(std::vector<long> keys,
                                                       std::vector<FullState> lin,
                                                       const MatX& H, const VecX& g);

  const std::vector<long>& keys() const override { return keys_; }
  int dim() const override { return static_cast<int>(r0_.size()); }
  void linearize(std::span<const FullState* const> states, VecX& r,
                 std::vector<MatX>& jac) const override;
  std::string name() const override { return "prior"; }

  const std::vector<FullState>& linearization() const { return lin_; }
  MatX information() const { return J_.transpose() * J_; }
  VecX information_vector() const { return J_.transpose() * r0_; }

 private:
  std::vector<long> keys_;
  std::vector<FullState> lin_;
  MatX J_;
  VecX r0_;
};

class DualPreintegrationResidual : public Factor {
 public:
  DualPreintegrationResidual(long i, long j, DualPreintegrationFactor f);
  const std::vector<long>& keys() const override { return keys_; }
  int dim() const override { return 9; }
  void linearize(std::span<const FullState* const> states, VecX& r,
                 std::vector<MatX>& jac) const override;
  std::string name() const override { return "dual_preintegration"; }
  const DualPreintegrationFactor& factor() const { return f_; }

 private:
  std::vector<long> keys_;
  DualPreintegrationFactor f_;
  Mat9 sqrt_info_;
};

/// Random-walk constraint between consecutive bias estimates of both IMUs.
class BiasWalkResidual : public Factor {
 public:
  BiasWalkResidual(long i, long j, const ImuNoiseModel& noise, double dt);
  const std::vector<long>& keys() const override { return keys_; }
  int dim() const override { return 12; }
  void linearize(std::span<const FullState* const> states, VecX& r,
                 std::vector<MatX>& jac) const override;
  std::string name() const override { return "bias_walk"; }

 private:
  std::vector<long> keys_;
  double wg_, wa_;
};

class ReprojectionResidual : public Factor {
 public:
  ReprojectionResidual(long key, Marker m, CameraModel cam, FeatureObservation obs);
  const std::vector<long>& keys() const override { return keys_; }
  int dim() const override { return 2; }
  void linearize(std::span<const FullState* const> states, VecX& r,
                 std::vector<MatX>& jac) const override;
  std::string name() const override { return "reprojection"; }

 private:
  std::vector<long> keys_;
  Marker m_;
  CameraModel cam_;
  FeatureObservation obs_;
};

struct Keyframe {
  long id = 0;
  double t = 0.0;
  FullState x;
  Mat21 cov = Mat21::Zero();
};

struct IterationDiagnostics {
  double cost_before = 0.0;
  double cost_after = 0.0;
  double step_norm = 0.0;
  int halvings = 0;
  bool step_rejected = false;
};

struct SmootherEstimate {
  std::vector<Keyframe> states;
  std::vector<IterationDiagnostics> iterations;
};

/**
 * Sliding-window MAP smoother over relative states and the four IMU biases.
 *
 * Each keyframe adds a dual-preintegration factor and a bias random-walk
 * factor to its predecessor plus one reprojection factor per feature. When
 * the window is full, the oldest state is folded into a dense prior by Schur
 * complement before the new state is inserted.
 */
class FixedLagSmoother {
 public:
  FixedLagSmoother(WindowConfig cfg, ImuNoiseModel noise, CameraModel cam,
                   std::vector<Marker> markers, const FullState& prior_mean, const Mat21& prior_cov);

  /// First call creates the prior-anchored initial state and ignores the IMU
  /// spans. Later calls predict the new state from the previous estimate.
  long add_keyframe(double t, std::span<const ImuSample> imu_f, std::span<const ImuSample> imu_l,
                    std::span<const FeatureObservation> features);

  /// Inserts a state without measurements (marginalizing first if full).
  long add_state(double t, const FullState& init);
  void add_factor(std::unique_ptr<Factor> f);

  SmootherEstimate optimize();

  /// Folds the oldest state into the prior. Returns the new prior (null when
  /// nothing remains to constrain).
  const PriorFactor* marginalize_oldest();

  const std::deque<Keyframe>& window() const { return window_; }
  const Keyframe& latest() const { return window_.back(); }
  const PriorFactor* prior() const { return prior_.get(); }
  double cost() const;

  /// Gauss-Newton system (H, g) at the current estimate, window order.
  std::pair<MatX, VecX> normal_equations() const;

 private:
  struct System {
    MatX H;
    VecX g;
    double cost = 0.0;
  };
  System linearize_all(const std::vector<Factor*>& factors) const;
  std::vector<Factor*> all_factors() const;
  int slot(long key) const;
  VecX solve(const System& sys) const;
  void compute_covariances(const System& sys);

  WindowConfig cfg_;
  ImuNoiseModel noise_;
  CameraModel cam_;
  std::map<int, Marker> markers_;
  std::deque<Keyframe> window_;
  std::unique_ptr<PriorFactor> prior_;
  std::vector<std::unique_ptr<Factor>> factors_;
  long next_id_ = 0;
  std::pair<FullState, Mat21> pending_prior_;
  // Filled by linearize_all() when the system is too large for dense storage.
  mutable Eigen::SparseMatrix<double> sparse_H_;
};

/// Whitening transform W with W^T W = Sigma^-1 (eigenvalues floored).
Mat9 whitening(const Mat9& cov);

}  // namespace dpi
