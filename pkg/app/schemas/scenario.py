import math

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.utils.validators import validate_bijective_priorities, validate_distinct_approaches


class WeightsSpec(BaseModel):
    q: float = Field(1.0, ge=0.0, description="Speed tracking weight")
    q_n: float = Field(1.0, ge=0.0, description="Terminal speed tracking weight")
    r: float = Field(5.0, ge=0.0, description="Input step change weight")
    s: float = Field(5.0, ge=0.0, description="Input magnitude weight")
    rho_x: float = Field(1e3, gt=0.0, description="State slack penalty")

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def validate_definite(self) -> "WeightsSpec":
        if self.r + self.s <= 0:
            raise ValueError("At least one of r, s must be positive")
        return self


class LanePoint(BaseModel):
    east: float = 0.0
    north: float = 0.0

    model_config = ConfigDict(extra="forbid")


class AgentSpec(BaseModel):
    """One agent: controller parameters, lane geometry and initial condition."""

    id: int = Field(..., ge=1, le=255, description="Agent id, one byte on the wire")
    priority: int = Field(..., ge=1, description="Lower value means higher priority")
    name: str | None = None
    t_ax: float = Field(0.4, gt=0.0, description="Drivetrain time constant (s)")
    weights: WeightsSpec = Field(default_factory=WeightsSpec)
    u_min: float = Field(-5.0, description="Minimum acceleration (m/s^2)")
    u_max: float = Field(2.0, description="Maximum acceleration (m/s^2)")
    v_ref: float = Field(..., gt=0.0, description="Reference speed (m/s)")
    v_max: float | None = Field(None, gt=0.0, description="Speed limit, defaults to 1.1 v_ref")
    d_safe: float = Field(15.0, gt=0.0, description="Minimum safety distance (m)")
    safety_margin: float = Field(0.0, ge=0.0, description="Error budget added to d_safe (m)")
    uncertainty_gain: float = Field(
        2.0, ge=0.0, description="Collision-point error sigmas added to the constraint distance"
    )
    d_brake: float = Field(40.0, gt=0.0, description="Brake safe distance (m)")
    critical_in_margin: float | None = Field(None, ge=0.0)
    critical_out_margin: float | None = Field(None, ge=0.0)
    approach_heading_deg: float = Field(..., description="Lane heading, clockwise from North")
    lane_point: LanePoint = Field(default_factory=LanePoint)
    s0: float = Field(..., description="Initial path coordinate relative to lane_point (m)")
    v0: float = Field(..., ge=0.0)
    ax0: float = 0.0
    plant_t_ax_scale: float = Field(1.0, gt=0.0, description="Plant/model mismatch factor")

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def validate_bounds(self) -> "AgentSpec":
        if not self.u_min < self.u_max:
            raise ValueError(f"u_min must be below u_max, got ({self.u_min}, {self.u_max})")
        return self

    @property
    def v_max_effective(self) -> float:
        return self.v_max if self.v_max is not None else 1.1 * self.v_ref

    @property
    def label(self) -> str:
        return self.name or f"agent{self.id}"


class SimSpec(BaseModel):
    duration: float = Field(12.0, gt=0.0, description="Simulated time (s)")
    ts: float = Field(0.2, gt=0.0, description="MPC sample time (s)")
    horizon: int = Field(20, ge=1, description="Prediction horizon N")
    plant_substeps: int = Field(10, ge=1)
    odometry_period: float = Field(0.05, gt=0.0)
    gnss_period: float = Field(0.2, gt=0.0)
    t_f: float = Field(30.0, gt=0.0, description="Path projection time (s)")
    t_h: float = Field(10.0, gt=0.0, description="Path history look-back (s)")
    start_time_s: float = Field(0.0, ge=0.0, description="Offset of t=0 within the hour")
    workers: int = Field(1, ge=1, description="Parallel agent solves per step")

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def validate_cadence(self) -> "SimSpec":
        for name in ("odometry_period", "gnss_period"):
            ratio = self.ts / getattr(self, name)
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ValueError(f"ts must be an integer multiple of {name}")
        ratio = self.gnss_period / self.odometry_period
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("gnss_period must be an integer multiple of odometry_period")
        return self

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.duration / self.ts + 1e-9))


class NoiseSpec(BaseModel):
    enabled: bool = False
    gnss_sigma_pos: float = Field(1.5, ge=0.0)
    gnss_sigma_alt: float = Field(3.0, ge=0.0)
    gnss_sigma_heading_deg: float = Field(2.0, ge=0.0)
    odo_sigma_v: float = Field(0.1, ge=0.0)
    odo_sigma_yaw_rate: float = Field(0.01, ge=0.0)
    odo_sigma_ax: float = Field(0.05, ge=0.0)

    model_config = ConfigDict(extra="forbid")


class CcpSpec(BaseModel):
    rho_c0: float | None = Field(None, gt=0.0)
    rho_c_max: float | None = Field(None, gt=0.0)
    mu: float | None = Field(None, gt=1.0)
    obj_tol: float | None = Field(None, ge=0.0)
    viol_tol: float | None = Field(None, ge=0.0)
    max_iter: int | None = Field(None, ge=1)
    qp_tol: float | None = Field(None, gt=0.0)
    qp_max_iter: int | None = Field(None, ge=1)

    model_config = ConfigDict(extra="forbid")


class Origin(BaseModel):
    lat_deg: float = Field(50.887, ge=-89.0, le=89.0)
    lon_deg: float = Field(6.221, ge=-180.0, le=180.0)
    alt_m: float = 150.0

    model_config = ConfigDict(extra="forbid")


class Scenario(BaseModel):
    """A complete simulation run: agent roster, geometry, sensors and solver settings."""

    name: str = "scenario"
    origin: Origin = Field(default_factory=Origin)
    seed: int = Field(0, ge=0)
    drop_prob: float = Field(0.0, ge=0.0, le=1.0, description="CCM loss probability")
    sim: SimSpec = Field(default_factory=SimSpec)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    ccp: CcpSpec = Field(default_factory=CcpSpec)
    agents: list[AgentSpec] = Field(..., min_length=1)

    model_config = ConfigDict(extra="forbid")

    @field_validator("agents")
    @classmethod
    def validate_agents(cls, agents: list[AgentSpec]) -> list[AgentSpec]:
        ids = [a.id for a in agents]
        if len(ids) != len(set(ids)):
            raise ValueError(f"Agent ids must be unique, got {ids}")
        validate_bijective_priorities([a.priority for a in agents])
        validate_distinct_approaches([a.approach_heading_deg for a in agents])
        return agents

    def agent(self, agent_id: int) -> AgentSpec:
        for spec in self.agents:
            if spec.id == agent_id:
                return spec
        raise KeyError(agent_id)
