import numpy as np
import pytest

import dualpreint as dp


def test_exp_log_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(100):
        phi = rng.normal(size=3)
        phi *= min(1.0, 3.0 / np.linalg.norm(phi))
        R = dp.exp_map(phi)
        assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.allclose(dp.log_map(R), phi, atol=1e-9)


def test_near_pi_raises():
    with pytest.raises(dp.DpiError, match="NearPi"):
        dp.log_map(dp.exp_map(np.array([np.pi, 0.0, 0.0])))


def test_jacobian_inverse():
    phi = np.array([0.3, -0.2, 0.5])
    assert np.allclose(dp.right_jacobian(phi) @ dp.right_jacobian_inv(phi), np.eye(3), atol=1e-12)


def test_static_preintegration():
    n = 50
    gyro = np.zeros((n, 3))
    accel = np.tile([0.0, 0.0, 9.81], (n, 1))
    pre = dp.integrate(gyro, accel, 0.004)
    assert pre.dt == pytest.approx(0.2)
    assert np.allclose(pre.delta_R, np.eye(3))
    assert np.allclose(pre.delta_v, [0, 0, 9.81 * 0.2])
    cov = pre.covariance
    assert cov.shape == (9, 9)
    assert np.allclose(cov, cov.T)
    assert np.all(np.linalg.eigvalsh(cov) > 0)


def test_identical_platforms_keep_relative_state():
    n = 25
    rng = np.random.default_rng(1)
    gyro = rng.normal(size=(n, 3))
    accel = rng.normal(size=(n, 3)) + [0, 0, 9.81]
    x = dp.FullState()
    x.s.p = np.array([0.0, 0.0, 1.0])
    pre = dp.integrate(gyro, accel, 0.004)
    xj = dp.predict(x, pre, pre)
    assert np.allclose(xj.R, np.eye(3), atol=1e-12)
    fac = dp.DualPreintegrationFactor.build(x, pre, pre)
    state_j = dp.FullState()
    state_j.s = xj
    assert np.linalg.norm(fac.residual(x, state_j)) < 1e-12


def test_empty_window_raises():
    with pytest.raises(dp.DpiError, match="EmptySampleSet"):
        dp.integrate(np.zeros((0, 3)), np.zeros((0, 3)), 0.004)


def test_projection_on_axis():
    s = dp.RelativeState()
    m = dp.Marker(0, [0.0, 0.0, 2.0])
    assert np.allclose(dp.project(s, m), [320.0, 240.0])
    assert len(dp.default_marker_layout()) == 28


def test_trajectory_and_noise_free_monte_carlo():
    cfg = dp.regime(1)
    cfg.duration = 1.0
    cfg.oversample = 1
    cfg.bias_walk = False
    gt = dp.generate_trajectory(cfg)
    assert gt.relative_p.shape == (len(gt.t), 3)
    res = dp.run_monte_carlo(cfg, runs=2, seed=5, noise_scale=0.0)
    assert res.used == 2
    for r in res.runs:
        assert r.ok
        assert r.rmse_p_cm < 1e-4
        assert r.rmse_theta_deg < 1e-4


@pytest.mark.parametrize("case,dims", [(1, 3), (2, 1), (3, 6), (4, 2)])
def test_observability_cases(case, dims):
    w = dp.observability(case)
    assert w["intersection"].shape == (12, dims)
    assert w["predicted_accel"] + w["predicted_gyro"] == dims
    assert w["max_direction_residual"] <= 1e-8


def test_general_motion_full_rank():
    assert dp.observability(0)["stacked_rank"] == 12


def test_cli_usage_error():
    code, _, err = dp.cli(["bogus"])
    assert code == 2
    assert err
