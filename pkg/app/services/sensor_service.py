import logging
import math
from dataclasses import dataclass

import numpy as np

from app.localization.frames import earth_radii, wrap_angle
from app.schemas.pose import Wgs84Pose
from app.schemas.scenario import NoiseSpec

logger = logging.getLogger(__name__)

GNSS_STREAM = 0
ODOMETRY_STREAM = 1


@dataclass(frozen=True)
class OdometrySample:
    v: float
    yaw_rate: float
    ax: float


def sensor_rng(seed: int, agent_id: int, stream: int) -> np.random.Generator:
    """Counter-based generator dedicated to one sensor of one agent."""
    seq = np.random.SeedSequence(seed, spawn_key=(agent_id, stream))
    return np.random.Generator(np.random.Philox(seq))


class SensorService:
    """Simulated GNSS receiver and odometry of one agent."""

    def __init__(self, agent_id: int, noise: NoiseSpec, seed: int):
        self.agent_id = agent_id
        self.noise = noise
        self._gnss_rng = sensor_rng(seed, agent_id, GNSS_STREAM)
        self._odometry_rng = sensor_rng(seed, agent_id, ODOMETRY_STREAM)

    def sample_gnss(self, truth: Wgs84Pose) -> Wgs84Pose:
        """
        Noisy GNSS fix of the true pose.

        Horizontal noise is drawn in metres and converted to angles with the
        local radii of curvature.
        """
        if not self.noise.enabled:
            return truth

        dn, de, du, dh = self._gnss_rng.standard_normal(4)
        r_m, r_n = earth_radii(truth.lat)
        sigma = self.noise.gnss_sigma_pos
        lat = truth.lat + sigma * dn / (r_m + truth.alt)
        lon = truth.lon + sigma * de / ((r_n + truth.alt) * math.cos(truth.lat))
        return Wgs84Pose(
            lat=lat,
            lon=float(wrap_angle(lon)),
            alt=truth.alt + self.noise.gnss_sigma_alt * du,
            heading=float(
                wrap_angle(truth.heading + math.radians(self.noise.gnss_sigma_heading_deg) * dh)
            ),
        )

    def sample_odometry(self, v: float, yaw_rate: float, ax: float) -> OdometrySample:
        if not self.noise.enabled:
            return OdometrySample(v=max(v, 0.0), yaw_rate=yaw_rate, ax=ax)

        nv, nw, na = self._odometry_rng.standard_normal(3)
        return OdometrySample(
            v=max(v + self.noise.odo_sigma_v * nv, 0.0),
            yaw_rate=yaw_rate + self.noise.odo_sigma_yaw_rate * nw,
            ax=ax + self.noise.odo_sigma_ax * na,
        )
