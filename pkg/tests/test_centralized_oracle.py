"""Tiny-scale cross-check of the distributed solution against a joint grid search.

Two agents share one collision point at s = 0. Agent 2 has the higher priority
and plans first; agent 1 solves its DOCP against agent 2's predicted distances.
The joint problem is solved by enumerating every input sequence on a 7-level
grid for both agents, pruned by agent 2's cost.
"""

import itertools

import numpy as np
import pytest

from app.control.ccp import CcpConfig, solve_penalty_ccp
from app.control.dynamics import AgentState, discretize_zoh, prediction_matrices
from app.control.ocp import (
    NeighborParam,
    OcpLimits,
    OcpWeights,
    assemble_docp,
    build_cost,
)

N = 5
TS = 0.2
T_AX = 0.4
D_SAFE = 15.0
V_MAX = 11.0
LEVELS = np.array([-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0])

MODEL = discretize_zoh(T_AX, TS)
LIMITS = OcpLimits.constant(u_min=-5.0, u_max=2.0, v_max=V_MAX, v_ref=10.0, n=N)

AGENT1_X0 = AgentState(ax=0.0, v=10.0, s=-24.6)
AGENT1_WEIGHTS = OcpWeights(q=1.0, q_n=1.0, r=5.0, s_w=5.0)
AGENT2_X0 = AgentState(ax=0.0, v=10.0, s=-10.0)
# agent 2 moving is expensive, so yielding falls to agent 1 in both formulations
AGENT2_WEIGHTS = OcpWeights(q=100.0, q_n=100.0, r=500.0, s_w=500.0)


def _trajectories(x0: AgentState, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Speeds and positions for j = 1..N of every row of ``u``."""
    phi, gamma = prediction_matrices(MODEL, N)
    x = x0.as_array()
    v = u @ gamma[:, 1, :].T + phi[:, 1, :] @ x
    s = u @ gamma[:, 2, :].T + phi[:, 2, :] @ x
    return v, s


def _costs(x0: AgentState, weights: OcpWeights, u: np.ndarray) -> np.ndarray:
    h, f, c = build_cost(MODEL, x0, 0.0, weights, LIMITS.v_ref_seq)
    return 0.5 * np.einsum("ij,jk,ik->i", u, h, u) + u @ f + c


def centralized_grid_oracle() -> tuple[float, np.ndarray, np.ndarray]:
    grid = np.array(list(itertools.product(LEVELS, repeat=N)))

    v1, s1 = _trajectories(AGENT1_X0, grid)
    j1 = _costs(AGENT1_X0, AGENT1_WEIGHTS, grid)
    v2, s2 = _trajectories(AGENT2_X0, grid)
    j2 = _costs(AGENT2_X0, AGENT2_WEIGHTS, grid)

    ok1 = np.all((v1 >= 0.0) & (v1 <= V_MAX), axis=1)
    ok2 = np.all((v2 >= 0.0) & (v2 <= V_MAX), axis=1)

    best = np.inf
    best_pair = (None, None)
    for i2 in np.argsort(j2):
        if j2[i2] >= best:
            break
        if not ok2[i2]:
            continue
        coupled = np.all(np.abs(s1) + np.abs(s2[i2]) >= D_SAFE, axis=1) & ok1
        if not coupled.any():
            continue
        i1 = np.flatnonzero(coupled)[np.argmin(j1[coupled])]
        total = j1[i1] + j2[i2]
        if total < best:
            best = total
            best_pair = (grid[i1], grid[i2])
    return best, best_pair[0], best_pair[1]


@pytest.fixture(scope="module")
def oracle():
    return centralized_grid_oracle()


@pytest.fixture(scope="module")
def distributed():
    # agent 2 has no higher-priority neighbor, so its DOCP is the plain tracking QP
    h2, f2, c2 = build_cost(MODEL, AGENT2_X0, 0.0, AGENT2_WEIGHTS, LIMITS.v_ref_seq)
    u2 = np.linalg.solve(h2, -f2)
    _, s2 = _trajectories(AGENT2_X0, u2[None, :])
    d_seq = np.abs(s2[0])

    docp = assemble_docp(
        MODEL,
        AGENT1_X0,
        0.0,
        AGENT1_WEIGHTS,
        LIMITS,
        critical=None,
        terminal_active=False,
        neighbors=[NeighborParam(neighbor_id=2, d_seq=d_seq)],
        s_c={2: 0.0},
        d_safe=D_SAFE,
    )
    result = solve_penalty_ccp(docp, np.zeros(N), CcpConfig())
    j2 = float(0.5 * u2 @ h2 @ u2 + f2 @ u2 + c2)
    return result, u2, j2, docp


def test_oracle_finds_a_feasible_joint_plan(oracle):
    best, u1, u2 = oracle
    assert np.isfinite(best)
    _, s1 = _trajectories(AGENT1_X0, u1[None, :])
    _, s2 = _trajectories(AGENT2_X0, u2[None, :])
    assert np.all(np.abs(s1) + np.abs(s2) >= D_SAFE)
    # coasting violates the coupling, so the oracle has to spend something
    assert best > 0


def test_higher_priority_agent_keeps_its_reference(distributed):
    _, u2, j2, _ = distributed
    np.testing.assert_allclose(u2, 0.0, atol=1e-12)
    assert j2 == pytest.approx(0.0, abs=1e-12)


def test_distributed_solution_satisfies_the_coupling(distributed):
    result, u2, _, docp = distributed
    assert len(docp.quad_cons) == N
    assert result.converged

    _, s1 = _trajectories(AGENT1_X0, result.u_star[None, :])
    _, s2 = _trajectories(AGENT2_X0, u2[None, :])
    assert np.all(np.abs(s1[0]) + np.abs(s2[0]) >= D_SAFE - 1e-3)
    assert np.all(result.u_star >= LIMITS.u_min - 1e-9)
    assert np.all(result.u_star <= LIMITS.u_max + 1e-9)


def test_distributed_cost_within_bound_of_oracle(distributed, oracle):
    result, _, j2, docp = distributed
    best, _, _ = oracle
    total = docp.cost(result.u_star) + j2
    assert total > 0
    assert total <= 1.15 * best
