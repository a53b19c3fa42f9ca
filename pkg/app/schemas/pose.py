import math

from pydantic import BaseModel, ConfigDict, Field, field_validator


class Wgs84Pose(BaseModel):
    """Geodetic pose. Angles in radians, heading clockwise from geographic North."""

    lat: float = Field(..., ge=-math.pi / 2, le=math.pi / 2, description="Latitude (rad)")
    lon: float = Field(..., description="Longitude (rad), in (-pi, pi]")
    alt: float = Field(0.0, description="Ellipsoidal height (m)")
    heading: float = Field(0.0, description="Heading (rad), clockwise from North")

    model_config = ConfigDict(frozen=True)

    @field_validator("lon")
    @classmethod
    def validate_lon(cls, v: float) -> float:
        if not (-math.pi < v <= math.pi):
            raise ValueError(f"Longitude must be in (-pi, pi], got {v}")
        return v

    @field_validator("alt", "heading")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("Value must be finite")
        return v

    @classmethod
    def from_degrees(
        cls, lat_deg: float, lon_deg: float, alt: float = 0.0, heading_deg: float = 0.0
    ) -> "Wgs84Pose":
        return cls(
            lat=math.radians(lat_deg),
            lon=math.radians(lon_deg),
            alt=alt,
            heading=math.radians(heading_deg),
        )


class ManeuverPose(BaseModel):
    """Pose in the forward-left-up maneuver frame; psi counter-clockwise from +x."""

    x: float = Field(..., description="Forward (m)")
    y: float = Field(..., description="Left (m)")
    z: float = Field(0.0, description="Up (m)")
    psi: float = Field(0.0, description="Yaw (rad)")

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    def as_vector(self) -> list[float]:
        return [self.x, self.y, self.z, self.psi]
