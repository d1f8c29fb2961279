#include "dpi/smoother.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "dpi/errors.hpp"

namespace dpi {

namespace {

constexpr double kRegularization = 1e-12;
constexpr int kMaxHalvings = 5;
constexpr int kDenseLimit = 512;

/// d local(x0, x (+) e) / de at e = 0: identity except Jr^-1 on rotation.
Mat21 local_jacobian(const StateDelta& d) {
  Mat21 D = Mat21::Identity();
  D.block<3, 3>(idx::kTheta, idx::kTheta) = right_jacobian_inv(d.segment<3>(idx::kTheta));
  return D;
}

/// Eigen-decomposition based factor of a PSD matrix, dropping directions
/// below rel_tol * max eigenvalue. Returns (S^1/2 V^T, S^-1/2 V^T).
std::pair<MatX, MatX> sqrt_factors(const MatX& H, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (H + H.transpose()));
  const VecX& s = es.eigenvalues();
  const double smax = s.size() ? std::max(s.maxCoeff(), 0.0) : 0.0;
  std::vector<int> keep;
  for (int k = 0; k < s.size(); ++k) {
    if (smax > 0.0 && s(k) > rel_tol * smax) keep.push_back(k);
  }
  MatX J(keep.size(), H.cols()), Jinv(keep.size(), H.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const int k = keep[r];
    J.row(r) = std::sqrt(s(k)) * es.eigenvectors().col(k).transpose();
    Jinv.row(r) = es.eigenvectors().col(k).transpose() / std::sqrt(s(k));
  }
  return {J, Jinv};
}

}  // namespace

void WindowConfig::validate() const {
  if (size < 2) throw Error(ErrorCode::kConfig, "window size must be at least 2");
  if (max_iterations < 1) throw Error(ErrorCode::kConfig, "iterations must be at least 1");
  if (!(step_damping > 0.0 && step_damping <= 1.0)) {
    throw Error(ErrorCode::kConfig, "step damping must lie in (0, 1]");
  }
  if (!(convergence_threshold >= 0.0)) throw Error(ErrorCode::kConfig, "convergence threshold must be >= 0");
}

Mat9 whitening(const Mat9& cov) {
  Eigen::SelfAdjointEigenSolver<Mat9> es(0.5 * (cov + cov.transpose()));
  const double smax = std::max(es.eigenvalues().maxCoeff(), 1e-300);
  Vec9 s = es.eigenvalues().cwiseMax(1e-12 * smax);
  return s.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

// ---------------------------------------------------------------- factors

PriorFactor::PriorFactor(std::vector<long> keys, std::vector<FullState> lin, MatX J, VecX r0)
    : keys_(std::move(keys)), lin_(std::move(lin)), J_(std::move(J)), r0_(std::move(r0)) {}

std::unique_ptr<PriorFactor> PriorFactor::from_covariance(long key, const FullState& mean,
                                                          const Mat21& cov) {
  const MatX info = cov.inverse();
  auto [J, Jinv] = sqrt_factors(info, 1e-15);
  (void)Jinv;
  return std::make_unique<PriorFactor>(std::vector<long>{key}, std::vector<FullState>{mean}, J,
                                       VecX::Zero(J.rows()));
}

std::unique_ptr<PriorFactor> PriorFactor::from_information(std::vector<long> keys,
                                                           std::vector<FullState> lin,
                                                           const MatX& H, const VecX& g) {
  auto [J, Jinv] = sqrt_factors(H, 1e-14);
  if (J.rows() == 0) return nullptr;
  VecX r0 = Jinv * g;
  return std::make_unique<PriorFactor>(std::move(keys), std::move(lin), std::move(J), std::move(r0));
}

void PriorFactor::linearize(std::span<const FullState* const> states, VecX& r,
                            std::vector<MatX>& jac) const {
  VecX d(21 * keys_.size());
  std::vector<Mat21> D(keys_.size());
  for (std::size_t k = 0; k < keys_.size(); ++k) {
    const StateDelta dk = local(lin_[k], *states[k]);
    d.segment<21>(21 * k) = dk;
    D[k] = local_jacobian(dk);
  }
  r = J_ * d + r0_;
  jac.resize(keys_.size());
  for (std::size_t k = 0; k < keys_.size(); ++k) jac[k] = J_.middleCols<21>(21 * k) * D[k];
}

DualPreintegrationResidual::DualPreintegrationResidual(long i, long j, DualPreintegrationFactor f)
    : keys_{i, j}, f_(std::move(f)), sqrt_info_(whitening(f_.covariance())) {}

void DualPreintegrationResidual::linearize(std::span<const FullState* const> states, VecX& r,
                                           std::vector<MatX>& jac) const {
  const auto J = f_.residual_jacobians(*states[0], *states[1]);
  r = sqrt_info_ * f_.residual(*states[0], *states[1]);
  jac.resize(2);
  jac[0] = sqrt_info_ * J.xi;
  jac[1] = MatX::Zero(9, 21);
  jac[1].leftCols<9>() = sqrt_info_ * J.xj;
}

BiasWalkResidual::BiasWalkResidual(long i, long j, const ImuNoiseModel& noise, double dt)
    : keys_{i, j} {
  const auto [Sg, Sa] = bias_random_walk_covariance(noise, dt);
  wg_ = 1.0 / std::sqrt(Sg(0, 0));
  wa_ = 1.0 / std::sqrt(Sa(0, 0));
}

void BiasWalkResidual::linearize(std::span<const FullState* const> states, VecX& r,
                                 std::vector<MatX>& jac) const {
  const FullState& a = *states[0];
  const FullState& b = *states[1];
  r.resize(12);
  r.segment<3>(0) = wg_ * (b.follower.gyro - a.follower.gyro);
  r.segment<3>(3) = wa_ * (b.follower.accel - a.follower.accel);
  r.segment<3>(6) = wg_ * (b.leader.gyro - a.leader.gyro);
  r.segment<3>(9) = wa_ * (b.leader.accel - a.leader.accel);
  MatX J = MatX::Zero(12, 21);
  J.block<3, 3>(0, idx::kFg).diagonal().setConstant(wg_);
  J.block<3, 3>(3, idx::kFa).diagonal().setConstant(wa_);
  J.block<3, 3>(6, idx::kLg).diagonal().setConstant(wg_);
  J.block<3, 3>(9, idx::kLa).diagonal().setConstant(wa_);
  jac = {-J, J};
}

ReprojectionResidual::ReprojectionResidual(long key, Marker m, CameraModel cam, FeatureObservation obs)
    : keys_{key}, m_(m), cam_(cam), obs_(obs) {}

void ReprojectionResidual::linearize(std::span<const FullState* const> states, VecX& r,
                                     std::vector<MatX>& jac) const {
  const double w = 1.0 / cam_.pixel_sigma;
  const auto t = reprojection_residual_and_jacobian(states[0]->s, m_, cam_, obs_);
  r = w * t.residual;
  MatX J = MatX::Zero(2, 21);
  J.leftCols<9>() = w * t.jacobian;
  jac = {J};
}

// ---------------------------------------------------------------- smoother

FixedLagSmoother::FixedLagSmoother(WindowConfig cfg, ImuNoiseModel noise, CameraModel cam,
                                   std::vector<Marker> markers, const FullState& prior_mean,
                                   const Mat21& prior_cov)
    : cfg_(cfg), noise_(noise), cam_(cam) {
  cfg_.validate();
  noise_.validate(true);
  cam_.validate();
  for (const Marker& m : markers) markers_[m.id] = m;
  pending_prior_ = std::make_pair(prior_mean, prior_cov);
}

int FixedLagSmoother::slot(long key) const {
  const long s = key - window_.front().id;
  if (s < 0 || s >= static_cast<long>(window_.size())) {
    std::ostringstream os;
    os << "state " << key << " is not in the window";
    throw Error(ErrorCode::kWindowMismatch, os.str());
  }
  return static_cast<int>(s);
}

long FixedLagSmoother::add_state(double t, const FullState& init) {
  if (static_cast<int>(window_.size()) >= cfg_.size) marginalize_oldest();
  Keyframe k;
  k.id = next_id_++;
  k.t = t;
  k.x = init;
  window_.push_back(k);
  return k.id;
}

void FixedLagSmoother::add_factor(std::unique_ptr<Factor> f) {
  for (long key : f->keys()) slot(key);
  factors_.push_back(std::move(f));
}

long FixedLagSmoother::add_keyframe(double t, std::span<const ImuSample> imu_f,
                                    std::span<const ImuSample> imu_l,
                                    std::span<const FeatureObservation> features) {
  long id;
  if (window_.empty()) {
    id = add_state(t, pending_prior_.first);
    window_.back().cov = pending_prior_.second;
    prior_ = PriorFactor::from_covariance(id, pending_prior_.first, pending_prior_.second);
  } else {
    if (imu_f.empty() || imu_l.empty()) {
      throw Error(ErrorCode::kEmptySampleSet, "keyframe needs IMU samples from both platforms");
    }
    if (static_cast<int>(window_.size()) >= cfg_.size) marginalize_oldest();
    const Keyframe prev = window_.back();
    const Preintegration pre_f = integrate(imu_f, prev.x.follower, noise_);
    const Preintegration pre_l = integrate(imu_l, prev.x.leader, noise_);
    auto fac = DualPreintegrationFactor::build(prev.x, pre_f, pre_l);
    FullState init = prev.x;
    init.s = fac.nominal();
    id = add_state(t, init);
    window_.back().cov = prev.cov;
    factors_.push_back(std::make_unique<DualPreintegrationResidual>(prev.id, id, std::move(fac)));
    factors_.push_back(std::make_unique<BiasWalkResidual>(prev.id, id, noise_, pre_f.dt()));
  }
  for (const FeatureObservation& obs : features) {
    auto it = markers_.find(obs.marker_id);
    if (it == markers_.end()) {
      std::ostringstream os;
      os << "observation references unknown marker " << obs.marker_id;
      throw Error(ErrorCode::kData, os.str());
    }
    factors_.push_back(std::make_unique<ReprojectionResidual>(id, it->second, cam_, obs));
  }
  return id;
}

std::vector<Factor*> FixedLagSmoother::all_factors() const {
  std::vector<Factor*> out;
  if (prior_) out.push_back(prior_.get());
  for (const auto& f : factors_) out.push_back(f.get());
  return out;
}

FixedLagSmoother::System FixedLagSmoother::linearize_all(const std::vector<Factor*>& factors) const {
  const int n = 21 * static_cast<int>(window_.size());
  System sys;
  sys.g = VecX::Zero(n);
  const bool dense = n <= kDenseLimit;
  if (dense) sys.H = MatX::Zero(n, n);
  std::vector<Eigen::Triplet<double>> trip;

  VecX r;
  std::vector<MatX> jac;
  std::vector<const FullState*> states;
  std::vector<int> slots;
  for (const Factor* f : factors) {
    states.clear();
    slots.clear();
    for (long key : f->keys()) {
      slots.push_back(slot(key));
      states.push_back(&window_[slots.back()].x);
    }
    f->linearize(states, r, jac);
    sys.cost += 0.5 * r.squaredNorm();
    for (std::size_t a = 0; a < slots.size(); ++a) {
      sys.g.segment<21>(21 * slots[a]) += jac[a].transpose() * r;
      for (std::size_t b = 0; b < slots.size(); ++b) {
        const MatX blk = jac[a].transpose() * jac[b];
        if (dense) {
          sys.H.block<21, 21>(21 * slots[a], 21 * slots[b]) += blk;
        } else {
          for (int i = 0; i < 21; ++i)
            for (int j = 0; j < 21; ++j)
              if (blk(i, j) != 0.0) trip.emplace_back(21 * slots[a] + i, 21 * slots[b] + j, blk(i, j));
        }
      }
    }
  }
  if (!dense) {
    Eigen::SparseMatrix<double> S(n, n);
    S.setFromTriplets(trip.begin(), trip.end());
    sparse_H_ = std::move(S);
  }
  return sys;
}

double FixedLagSmoother::cost() const {
  double c = 0.0;
  VecX r;
  std::vector<MatX> jac;
  std::vector<const FullState*> states;
  for (const Factor* f : all_factors()) {
    states.clear();
    for (long key : f->keys()) states.push_back(&window_[slot(key)].x);
    f->linearize(states, r, jac);
    c += 0.5 * r.squaredNorm();
  }
  return c;
}

std::pair<MatX, VecX> FixedLagSmoother::normal_equations() const {
  System sys = linearize_all(all_factors());
  if (sys.H.size() == 0) sys.H = MatX(sparse_H_);
  return {sys.H, sys.g};
}

VecX FixedLagSmoother::solve(const System& sys) const {
  const int n = static_cast<int>(sys.g.size());
  VecX dx;
  if (sys.H.size() != 0) {
    const MatX H = sys.H + kRegularization * MatX::Identity(n, n);
    Eigen::LLT<MatX> llt(H);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::kSingularNormalEquations, "normal equations are not positive definite");
    }
    dx = llt.solve(-sys.g);
  } else {
    Eigen::SparseMatrix<double> H = sparse_H_;
    for (int i = 0; i < n; ++i) H.coeffRef(i, i) += kRegularization;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(H);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any()) {
      throw Error(ErrorCode::kSingularNormalEquations, "normal equations are not positive definite");
    }
    dx = ldlt.solve(-sys.g);
  }
  if (!dx.allFinite()) {
    throw Error(ErrorCode::kSingularNormalEquations, "normal equations produced a non-finite step");
  }
  return dx;
}

SmootherEstimate FixedLagSmoother::optimize() {
  if (window_.empty()) throw Error(ErrorCode::kWindowMismatch, "optimize() called with no states");
  SmootherEstimate est;
  const std::vector<Factor*> factors = all_factors();
  for (int it = 0; it < cfg_.max_iterations; ++it) {
    const System sys = linearize_all(factors);
    const VecX dx = cfg_.step_damping * solve(sys);

    IterationDiagnostics diag;
    diag.cost_before = sys.cost;
    diag.step_norm = dx.norm();

    std::vector<FullState> saved;
    for (const Keyframe& k : window_) saved.push_back(k.x);
    double alpha = 1.0;
    bool accepted = false;
    for (int h = 0; h <= kMaxHalvings; ++h) {
      for (std::size_t s = 0; s < window_.size(); ++s) {
        window_[s].x = retract(saved[s], alpha * dx.segment<21>(21 * s));
      }
      double c;
      try {
        c = cost();
      } catch (const Error&) {
        c = std::numeric_limits<double>::infinity();
      }
      if (c <= sys.cost * (1.0 + 1e-12) + 1e-300) {
        diag.cost_after = c;
        diag.halvings = h;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      for (std::size_t s = 0; s < window_.size(); ++s) window_[s].x = saved[s];
      diag.cost_after = sys.cost;
      diag.step_rejected = true;
      diag.halvings = kMaxHalvings;
    }
    est.iterations.push_back(diag);
    if (!accepted || diag.step_norm * alpha < cfg_.convergence_threshold) break;
  }

  if (cfg_.compute_covariances) {
    const System sys = linearize_all(factors);
    compute_covariances(sys);
  }
  est.states.assign(window_.begin(), window_.end());
  return est;
}

void FixedLagSmoother::compute_covariances(const System& sys) {
  const int n = static_cast<int>(sys.g.size());
  if (sys.H.size() != 0) {
    Eigen::LLT<MatX> llt(sys.H + kRegularization * MatX::Identity(n, n));
    if (llt.info() != Eigen::Success) return;
    const MatX P = llt.solve(MatX::Identity(n, n));
    for (std::size_t s = 0; s < window_.size(); ++s) {
      Mat21 c = P.block<21, 21>(21 * s, 21 * s);
      window_[s].cov = 0.5 * (c + c.transpose());
    }
    return;
  }
  Eigen::SparseMatrix<double> H = sparse_H_;
  for (int i = 0; i < n; ++i) H.coeffRef(i, i) += kRegularization;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(H);
  if (ldlt.info() != Eigen::Success) return;
  for (std::size_t s = 0; s < window_.size(); ++s) {
    MatX E = MatX::Zero(n, 21);
    E.middleRows<21>(21 * s).setIdentity();
    const MatX X = ldlt.solve(E);
    Mat21 c = X.middleRows<21>(21 * s);
    window_[s].cov = 0.5 * (c + c.transpose());
  }
}

const PriorFactor* FixedLagSmoother::marginalize_oldest() {
  if (window_.size() < 2) throw Error(ErrorCode::kWindowMismatch, "marginalization needs two states");
  const long oldest = window_.front().id;

  // Factors touching the oldest state, plus the current prior.
  std::vector<Factor*> involved;
  std::set<long> keys;
  if (prior_) {
    involved.push_back(prior_.get());
    keys.insert(prior_->keys().begin(), prior_->keys().end());
  }
  std::vector<std::unique_ptr<Factor>> keep;
  std::vector<std::unique_ptr<Factor>> drop;
  for (auto& f : factors_) {
    const auto& k = f->keys();
    if (std::find(k.begin(), k.end(), oldest) != k.end()) {
      involved.push_back(f.get());
      keys.insert(k.begin(), k.end());
      drop.push_back(std::move(f));
    } else {
      keep.push_back(std::move(f));
    }
  }

  const System sys = linearize_all(involved);
  const MatX H = sys.H.size() ? sys.H : MatX(sparse_H_);
  const int m = 21;
  const int n = static_cast<int>(sys.g.size());

  // Remaining keys that the eliminated factors actually connect to.
  std::vector<long> rkeys;
  for (long k : keys) if (k != oldest) rkeys.push_back(k);
  std::vector<int> cols;
  for (long k : rkeys) cols.push_back(slot(k));

  const int r = 21 * static_cast<int>(rkeys.size());
  MatX Hrr(r, r), Hrm(r, m);
  VecX gr(r);
  for (std::size_t a = 0; a < cols.size(); ++a) {
    gr.segment<21>(21 * a) = sys.g.segment<21>(21 * cols[a]);
    Hrm.middleRows<21>(21 * a) = H.block(21 * cols[a], 0, 21, m);
    for (std::size_t b = 0; b < cols.size(); ++b) {
      Hrr.block<21, 21>(21 * a, 21 * b) = H.block<21, 21>(21 * cols[a], 21 * cols[b]);
    }
  }
  (void)n;
  const Mat21 Hmm = H.topLeftCorner<21, 21>();
  const VecX gm = sys.g.head<21>();

  // Pseudo-inverse of the eliminated block guards against unconstrained
  // directions (they carry no information to the remaining states).
  Eigen::SelfAdjointEigenSolver<Mat21> es(0.5 * (Hmm + Hmm.transpose()));
  const double smax = std::max(es.eigenvalues().maxCoeff(), 0.0);
  Vec21 sinv = Vec21::Zero();
  for (int k = 0; k < 21; ++k) {
    if (smax > 0.0 && es.eigenvalues()(k) > 1e-14 * smax) sinv(k) = 1.0 / es.eigenvalues()(k);
  }
  const Mat21 Hmm_inv = es.eigenvectors() * sinv.asDiagonal() * es.eigenvectors().transpose();
  const MatX Hp = Hrr - Hrm * Hmm_inv * Hrm.transpose();
  const VecX gp = gr - Hrm * Hmm_inv * gm;

  std::vector<FullState> lin;
  for (int c : cols) lin.push_back(window_[c].x);
  prior_ = rkeys.empty() ? nullptr : PriorFactor::from_information(rkeys, lin, Hp, gp);
  factors_ = std::move(keep);
  window_.pop_front();
  return prior_.get();
}

}  // namespace dpi
