import logging
import math
from pathlib import Path

import pandas as pd

from app.schemas.trace import AgentSummary, ScenarioSummary, SimTrace, StepRecord

logger = logging.getLogger(__name__)

# round-off allowance on the min-distance pass check
DIST_TOLERANCE = 1e-6

SCALAR_COLUMNS = [
    "step",
    "t",
    "s",
    "v",
    "ax",
    "s_est",
    "v_est",
    "u",
    "eps_c",
    "eps_x",
    "ccp_iters",
    "rho_c",
    "qp_iters",
    "converged",
    "fallback",
    "terminal_active",
    "n_collision_cons",
    "d_constraint",
    "consumed_ccms",
    "bus_delay_ok",
    "ccm_bytes",
    "ccm_hash",
    "stale",
    "missing",
]
PAIR_COLUMNS = ["dist", "dist_est", "d_tilde", "d_true"]


def trace_columns(trace: SimTrace, agent_id: int) -> list[str]:
    """CSV header of one agent: fixed columns, then one column per neighbor and pair metric."""
    neighbors = sorted(a.agent_id for a in trace.agents if a.agent_id != agent_id)
    return SCALAR_COLUMNS + [f"{name}_{nb}" for name in PAIR_COLUMNS for nb in neighbors]


def _row(record: StepRecord, columns: list[str]) -> dict:
    row = {}
    for column in columns:
        if column in ("stale", "missing"):
            row[column] = ";".join(str(i) for i in getattr(record, column))
        elif column in SCALAR_COLUMNS:
            row[column] = getattr(record, column)
        else:
            name, nb = column.rsplit("_", 1)
            row[column] = getattr(record, name).get(int(nb), math.nan)
    return row


def _crossing_time(records: list[StepRecord], s_c: float) -> float | None:
    """First time the true path coordinate reaches ``s_c``, linearly interpolated."""
    previous = None
    for record in records:
        if record.s >= s_c:
            if previous is None or record.s == previous.s:
                return record.t
            frac = (s_c - previous.s) / (record.s - previous.s)
            return previous.t + frac * (record.t - previous.t)
        previous = record
    return None


def summarize_trace(trace: SimTrace) -> ScenarioSummary:
    """
    Build the scenario summary from a trace.

    Args:
        trace: Completed simulation trace

    Returns:
        ScenarioSummary: Minimum pair distance, pass flag and per-agent figures
    """
    distances = [
        d for record in trace.records for d in record.dist.values() if math.isfinite(d)
    ]
    min_dist = min(distances) if distances else None
    d_safe = min(a.d_safe for a in trace.agents)

    agent_summaries = []
    crossings = []
    for info in trace.agents:
        records = trace.for_agent(info.agent_id)
        if not records:
            agent_summaries.append(AgentSummary(agent_id=info.agent_id))
            continue

        finite_cps = [s for s in info.s_c.values() if math.isfinite(s)]
        crossing = _crossing_time(records, min(finite_cps)) if finite_cps else None
        if crossing is not None:
            crossings.append((crossing, info.agent_id))

        agent_summaries.append(
            AgentSummary(
                agent_id=info.agent_id,
                peak_decel=min(r.ax for r in records),
                min_speed=min(r.v for r in records),
                max_speed_dev=max(abs(r.v - info.v_ref) for r in records),
                cp_crossing_time=crossing,
                fallback_steps=sum(r.fallback for r in records),
                max_ccp_iters=max(r.ccp_iters for r in records),
            )
        )

    return ScenarioSummary(
        scenario=trace.scenario,
        seed=trace.seed,
        passed=min_dist is None or min_dist >= d_safe - DIST_TOLERANCE,
        min_dist=min_dist,
        d_safe=d_safe,
        steps=len({r.step for r in trace.records}),
        runtime_s=trace.runtime_s,
        passing_order=[agent_id for _, agent_id in sorted(crossings)],
        bus_delay_ok=all(r.bus_delay_ok for r in trace.records),
        dropped_ccms=trace.dropped_ccms,
        agents=agent_summaries,
    )


def export_trace(trace: SimTrace, path: str | Path) -> list[Path]:
    """
    Write one CSV per agent and ``summary.json`` into ``path``.

    Args:
        trace: Simulation trace
        path: Output directory, created when missing

    Returns:
        list[Path]: Written files
    """
    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)

    written = []
    for info in trace.agents:
        columns = trace_columns(trace, info.agent_id)
        rows = [_row(r, columns) for r in trace.for_agent(info.agent_id)]
        frame = pd.DataFrame(rows, columns=columns)
        csv_path = out_dir / f"agent_{info.agent_id}.csv"
        frame.to_csv(csv_path, index=False)
        written.append(csv_path)

    summary_path = out_dir / "summary.json"
    summary_path.write_text(summarize_trace(trace).model_dump_json(indent=2) + "\n")
    written.append(summary_path)

    logger.info(f"📁 Wrote {len(written)} trace files to {out_dir}")
    return written
