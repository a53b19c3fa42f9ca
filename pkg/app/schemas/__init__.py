from .ccm import CcmConflict, CcmMessage, CcmTimestamp, RvPoseRecord
from .pose import ManeuverPose, Wgs84Pose
from .scenario import (
    AgentSpec,
    CcpSpec,
    LanePoint,
    NoiseSpec,
    Origin,
    Scenario,
    SimSpec,
    WeightsSpec,
)
from .trace import (
    AgentSummary,
    AgentTraceInfo,
    ScenarioSummary,
    SimTrace,
    StepRecord,
)

__all__ = [
    "AgentSpec",
    "AgentSummary",
    "AgentTraceInfo",
    "CcmConflict",
    "CcmMessage",
    "CcmTimestamp",
    "CcpSpec",
    "LanePoint",
    "ManeuverPose",
    "NoiseSpec",
    "Origin",
    "RvPoseRecord",
    "Scenario",
    "ScenarioSummary",
    "SimSpec",
    "SimTrace",
    "StepRecord",
    "WeightsSpec",
    "Wgs84Pose",
]
