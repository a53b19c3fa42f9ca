import logging
import math
from collections import deque

import numpy as np

from app.localization.ekf import (
    EkfState,
    ekf_predict,
    ekf_update,
    gnss_measurement_noise,
    odometry_process_noise,
)
from app.localization.frames import maneuver_to_wgs
from app.schemas.pose import ManeuverPose, Wgs84Pose
from app.schemas.scenario import NoiseSpec
from app.services.sensor_service import OdometrySample

logger = logging.getLogger(__name__)

# process noise used when sensors are noise-free
_MIN_SIGMA_V = 1e-3
_MIN_SIGMA_YAW_RATE = 1e-4


class LocalizationService:
    """Per-agent pose filter anchored at the first GNSS fix of the maneuver."""

    def __init__(self, agent_id: int, noise: NoiseSpec, history_window: float):
        self.agent_id = agent_id
        self.origin: Wgs84Pose | None = None
        self.state: EkfState | None = None
        self.history_window = history_window
        self.history: deque[tuple[float, float, float]] = deque()

        sigma_pos = noise.gnss_sigma_pos if noise.enabled else 0.0
        sigma_alt = noise.gnss_sigma_alt if noise.enabled else 0.0
        sigma_heading = math.radians(noise.gnss_sigma_heading_deg) if noise.enabled else 0.0
        self.meas_noise = gnss_measurement_noise(sigma_pos, sigma_alt, sigma_heading)
        self.sigma_v = max(noise.odo_sigma_v if noise.enabled else 0.0, _MIN_SIGMA_V)
        self.sigma_yaw_rate = max(
            noise.odo_sigma_yaw_rate if noise.enabled else 0.0, _MIN_SIGMA_YAW_RATE
        )

    @property
    def initialized(self) -> bool:
        return self.state is not None

    def initialize(self, fix: Wgs84Pose, t: float) -> None:
        """Anchor the maneuver frame at ``fix`` and start the filter there."""
        self.origin = fix
        self.state = EkfState(mean=np.zeros(4), cov=self.meas_noise.copy())
        self.history.clear()
        self._record(t)
        logger.debug(f"Agent {self.agent_id}: maneuver frame anchored at t={t:.2f}")

    def _require_initialized(self) -> None:
        if not self.initialized:
            raise RuntimeError(
                f"Agent {self.agent_id}: localization used before the first GNSS fix"
            )

    def predict(self, odometry: OdometrySample, dt: float) -> None:
        self._require_initialized()
        q = odometry_process_noise(
            float(self.state.mean[3]), dt, self.sigma_v, self.sigma_yaw_rate
        )
        self.state = ekf_predict(self.state, odometry.v, odometry.yaw_rate, dt, q)

    def update(self, fix: Wgs84Pose, t: float) -> None:
        self._require_initialized()
        self.state = ekf_update(self.state, fix, self.origin, self.meas_noise)
        self._record(t)

    def pose(self) -> ManeuverPose:
        self._require_initialized()
        return self.state.pose()

    def position_sigma(self) -> float:
        """Standard deviation along the most uncertain horizontal direction (m)."""
        self._require_initialized()
        cov = self.state.cov[:2, :2]
        return math.sqrt(max(float(np.linalg.eigvalsh(0.5 * (cov + cov.T)).max()), 0.0))

    def heading_sigma(self) -> float:
        self._require_initialized()
        return math.sqrt(max(float(self.state.cov[3, 3]), 0.0))

    def wgs_pose(self) -> Wgs84Pose:
        return maneuver_to_wgs(self.pose(), self.origin)

    def history_samples(self) -> list[tuple[float, float, float]]:
        return list(self.history)

    def _record(self, t: float) -> None:
        self.history.append((t, float(self.state.mean[0]), float(self.state.mean[1])))
        while self.history and self.history[0][0] < t - self.history_window:
            self.history.popleft()
