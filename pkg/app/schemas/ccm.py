import math

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.schemas.pose import Wgs84Pose


class CcmTimestamp(BaseModel):
    """Time stamp split into minute of the hour and millisecond of the minute."""

    minute_of_hour: int = Field(..., ge=0, description="0-59 on the wire")
    ms_of_minute: int = Field(..., ge=0, description="0-59999 on the wire")

    model_config = ConfigDict(frozen=True)

    @classmethod
    def from_seconds(cls, t: float) -> "CcmTimestamp":
        total_ms = round(t * 1000.0)
        return cls(
            minute_of_hour=(total_ms // 60000) % 60,
            ms_of_minute=total_ms % 60000,
        )

    def to_ms_of_hour(self) -> int:
        return self.minute_of_hour * 60000 + self.ms_of_minute


class CcmConflict(BaseModel):
    neighbor_id: int = Field(..., ge=0, description="Addressed agent id")
    d_seq: list[float] = Field(
        ..., description="Distances to the joint collision point for k+2..k+N+1 (m)"
    )

    model_config = ConfigDict(frozen=True)


class CcmMessage(BaseModel):
    """Cooperative control message: one optimized distance trajectory per conflict."""

    t_stamp: CcmTimestamp
    ego_id: int = Field(..., ge=0, description="Sender agent id")
    conflicts: list[CcmConflict] = Field(default_factory=list)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def validate_unique_ids(self) -> "CcmMessage":
        ids = [c.neighbor_id for c in self.conflicts]
        if len(ids) != len(set(ids)):
            raise ValueError(f"Duplicate neighbor ids in CCM: {ids}")
        return self

    def d_seq_for(self, agent_id: int) -> list[float] | None:
        for conflict in self.conflicts:
            if conflict.neighbor_id == agent_id:
                return conflict.d_seq
        return None


class RvPoseRecord(BaseModel):
    """Minimal awareness record: who is where, how fast."""

    sender_id: int = Field(..., ge=0)
    timestamp: float = Field(..., description="Simulation time (s)")
    pose: Wgs84Pose
    speed: float = Field(..., ge=0.0, description="Speed (m/s)")
    pos_sigma: float = Field(0.0, ge=0.0, description="Sender position standard deviation (m)")
    heading_sigma: float = Field(0.0, ge=0.0, description="Sender heading standard deviation (rad)")

    model_config = ConfigDict(frozen=True)

    @field_validator("timestamp", "speed")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("Value must be finite")
        return v
