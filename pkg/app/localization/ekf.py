"""Constant-velocity EKF in the maneuver frame.

State is (x_m, y_m, z_m, psi_m). Odometry (speed, yaw rate) drives the
prediction, GNSS pose fixes drive the correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from app.localization.frames import wgs_to_maneuver, wrap_angle
from app.schemas.pose import ManeuverPose, Wgs84Pose

# keeps the innovation covariance invertible when sensors are noise-free
MEAS_VARIANCE_FLOOR = 1e-10


@dataclass(frozen=True)
class EkfState:
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def from_pose(cls, pose: ManeuverPose, cov: np.ndarray) -> EkfState:
        return cls(mean=np.array(pose.as_vector(), dtype=float), cov=np.array(cov, dtype=float))

    def pose(self) -> ManeuverPose:
        x, y, z, psi = self.mean
        return ManeuverPose(x=float(x), y=float(y), z=float(z), psi=float(psi))


def odometry_process_noise(
    psi: float,
    dt: float,
    sigma_v: float,
    sigma_yaw_rate: float,
    sigma_climb: float = 0.1,
) -> np.ndarray:
    """Process noise from odometry input noise mapped through the motion model."""
    g = np.array(
        [
            [dt * math.cos(psi), 0.0, 0.0],
            [dt * math.sin(psi), 0.0, 0.0],
            [0.0, dt, 0.0],
            [0.0, 0.0, dt],
        ]
    )
    q = g @ np.diag([sigma_v**2, sigma_climb**2, sigma_yaw_rate**2]) @ g.T
    return 0.5 * (q + q.T)


def gnss_measurement_noise(
    sigma_pos: float, sigma_alt: float, sigma_heading: float
) -> np.ndarray:
    """Measurement noise of a GNSS fix expressed in the maneuver frame."""
    variances = np.array([sigma_pos**2, sigma_pos**2, sigma_alt**2, sigma_heading**2])
    return np.diag(np.maximum(variances, MEAS_VARIANCE_FLOOR))


def ekf_predict(
    state: EkfState,
    v: float,
    yaw_rate: float,
    dt: float,
    process_noise: np.ndarray,
) -> EkfState:
    """
    Propagate mean and covariance over ``dt`` with Heun's method.

    Args:
        state: Filter state
        v: Measured speed (m/s)
        yaw_rate: Measured yaw rate (rad/s)
        dt: Time step (s)
        process_noise: Additive 4x4 covariance for this step

    Returns:
        EkfState: Predicted state
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")

    x, y, z, psi = state.mean
    psi_next = psi + yaw_rate * dt
    c0, s0 = math.cos(psi), math.sin(psi)
    c1, s1 = math.cos(psi_next), math.sin(psi_next)
    half = 0.5 * dt * v

    mean = np.array(
        [
            x + half * (c0 + c1),
            y + half * (s0 + s1),
            z,
            float(wrap_angle(psi_next)),
        ]
    )
    jac = np.eye(4)
    jac[0, 3] = -half * (s0 + s1)
    jac[1, 3] = half * (c0 + c1)

    cov = jac @ state.cov @ jac.T + process_noise
    return EkfState(mean=mean, cov=0.5 * (cov + cov.T))


def ekf_update(
    state: EkfState,
    meas: Wgs84Pose,
    origin: Wgs84Pose,
    meas_noise: np.ndarray,
) -> EkfState:
    """
    Correct the filter with a GNSS pose.

    The fix is converted into the maneuver frame once, so the measurement model
    is the identity. The heading innovation is wrapped into (-pi, pi].
    """
    y_meas = np.array(wgs_to_maneuver(meas, origin).as_vector())
    innovation = y_meas - state.mean
    innovation[3] = wrap_angle(innovation[3])

    r = np.array(meas_noise, dtype=float)
    s = state.cov + r
    gain = np.linalg.solve(s, state.cov).T

    mean = state.mean + gain @ innovation
    mean[3] = wrap_angle(mean[3])

    # Joseph form
    i_k = np.eye(4) - gain
    cov = i_k @ state.cov @ i_k.T + gain @ r @ gain.T
    return EkfState(mean=mean, cov=0.5 * (cov + cov.T))
