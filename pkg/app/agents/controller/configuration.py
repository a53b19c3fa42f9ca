"""Define the configurable parameters for the controller."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from langchain_core.runnables import RunnableConfig

from app.control.ccp import CcpConfig
from app.control.dynamics import AgentModel
from app.control.ocp import CriticalRegion, OcpLimits, OcpWeights


@dataclass(kw_only=True)
class AgentConfig:
    """Static controller parameters of one agent."""

    agent_id: int
    priority: int
    model: AgentModel
    weights: OcpWeights
    limits: OcpLimits
    d_safe: float
    # error budget added to d_safe in the collision constraints
    safety_margin: float = 0.0
    # multiples of the collision-point error sigma added on top
    uncertainty_gain: float = 2.0
    d_brake: float = 40.0
    critical_in_margin: float | None = None
    critical_out_margin: float | None = None
    # fixed region in path coordinates (nearest CP at s = 0); derived from the CPs when None
    critical: CriticalRegion | None = None
    ccp_cfg: CcpConfig = field(default_factory=CcpConfig)

    def __post_init__(self):
        if self.priority < 1:
            raise ValueError(f"priority must be a positive integer, got {self.priority}")
        if not self.d_safe > 0:
            raise ValueError(f"d_safe must be positive, got {self.d_safe}")
        if self.safety_margin < 0:
            raise ValueError(f"safety_margin must be nonnegative, got {self.safety_margin}")
        if self.uncertainty_gain < 0:
            raise ValueError(f"uncertainty_gain must be nonnegative, got {self.uncertainty_gain}")

    @property
    def horizon(self) -> int:
        return int(self.limits.v_ref_seq.size)

    @property
    def d_constraint(self) -> float:
        return self.d_safe + self.safety_margin


@dataclass(kw_only=True)
class Configuration:
    """The configuration for one controller invocation."""

    agent: AgentConfig
    step_index: int = 0
    # seconds within the hour, stamped on the outgoing CCM
    t_stamp: float = 0.0

    @classmethod
    def from_runnable_config(
        cls, config: RunnableConfig | None = None
    ) -> Configuration:
        """Create a Configuration instance from a RunnableConfig object."""
        configurable = (config.get("configurable") or {}) if config else {}
        _fields = {f.name for f in fields(cls) if f.init}
        return cls(**{k: v for k, v in configurable.items() if k in _fields})
