from pydantic import BaseModel, ConfigDict, Field


class StepRecord(BaseModel):
    """One agent at one MPC step: truth, estimate, control and solver diagnostics."""

    step: int
    t: float
    agent_id: int

    # ground truth from the plant
    s: float
    v: float
    ax: float

    # controller view
    s_est: float
    v_est: float
    u: float

    eps_c: float = 0.0
    eps_x: float = 0.0
    ccp_iters: int = 0
    rho_c: float = 0.0
    qp_iters: int = 0
    converged: bool = True
    fallback: bool = False
    terminal_active: bool = False
    n_collision_cons: int = 0
    d_constraint: float = 0.0
    stale: list[int] = Field(default_factory=list)
    missing: list[int] = Field(default_factory=list)
    consumed_ccms: int = 0
    bus_delay_ok: bool = True
    ccm_bytes: int = 0
    ccm_hash: str = ""

    # keyed by neighbor id
    d_tilde: dict[int, float] = Field(default_factory=dict, description="Estimated signed CP distance")
    d_true: dict[int, float] = Field(default_factory=dict, description="True distance to the CP")
    dist: dict[int, float] = Field(default_factory=dict, description="True pair distance")
    dist_est: dict[int, float] = Field(default_factory=dict, description="Estimated pair distance")


class AgentTraceInfo(BaseModel):
    agent_id: int
    priority: int
    v_ref: float
    d_safe: float
    # true CP coordinates on this agent's lane, keyed by neighbor id
    s_c: dict[int, float] = Field(default_factory=dict)


class SimTrace(BaseModel):
    scenario: str
    seed: int
    ts: float
    agents: list[AgentTraceInfo]
    records: list[StepRecord] = Field(default_factory=list)
    runtime_s: float = 0.0
    dropped_ccms: int = 0

    def for_agent(self, agent_id: int) -> list[StepRecord]:
        return [r for r in self.records if r.agent_id == agent_id]


class AgentSummary(BaseModel):
    agent_id: int
    peak_decel: float | None = None
    min_speed: float | None = None
    max_speed_dev: float | None = None
    cp_crossing_time: float | None = None
    fallback_steps: int = 0
    max_ccp_iters: int = 0


class ScenarioSummary(BaseModel):
    """Machine-parseable outcome of a run."""

    scenario: str
    seed: int
    passed: bool
    min_dist: float | None = Field(None, description="Minimum true pair distance, null if no pair ever conflicts")
    d_safe: float
    steps: int
    runtime_s: float
    passing_order: list[int] = Field(default_factory=list)
    bus_delay_ok: bool = True
    dropped_ccms: int = Field(0, description="CCMs lost on the bus")
    agents: list[AgentSummary] = Field(default_factory=list)

    model_config = ConfigDict(ser_json_inf_nan="null")
