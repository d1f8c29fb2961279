"""Relative inertial-visual state estimation with dual IMU preintegration."""

from ._core import (
    Bias,
    CameraModel,
    DpiError,
    DualPreintegrationFactor,
    FullState,
    GroundTruth,
    ImuNoiseModel,
    Marker,
    MonteCarloResult,
    Preintegration,
    RelativeState,
    RunResult,
    TrajectoryConfig,
    bias_scenario,
    cli,
    default_marker_layout,
    exp_map,
    generate_trajectory,
    hat,
    integrate,
    log_map,
    observability,
    predict,
    project,
    regime,
    right_jacobian,
    right_jacobian_inv,
    run_monte_carlo,
)

__all__ = [name for name in dir() if not name.startswith("_")]
