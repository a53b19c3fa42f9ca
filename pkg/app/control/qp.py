"""Dense strictly convex QP solver.

Solves ``min 0.5 u' H u + f' u  s.t.  A u <= b`` with a dual active-set method:
start from the unconstrained minimizer and add violated constraints one at a
time, dropping active ones whose multipliers would turn negative. Infeasibility
shows up as an unbounded dual step, so no phase-1 problem is needed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import linalg

logger = logging.getLogger(__name__)


class QpSolverError(RuntimeError):
    """Raised when the QP cannot be solved (non-SPD Hessian, iteration limit)."""


class QpInfeasibleError(QpSolverError):
    """Raised when the constraint rows are inconsistent."""


class QpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class QpProblem:
    h: np.ndarray
    f: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        n = self.f.shape[0]
        if self.h.shape != (n, n):
            raise ValueError(f"h must be {n}x{n}, got {self.h.shape}")
        if not np.allclose(self.h, self.h.T, rtol=0.0, atol=1e-10 * (1 + np.abs(self.h).max())):
            raise ValueError("h must be symmetric")
        if self.a.ndim != 2 or self.a.shape[1] != n:
            raise ValueError(f"a must have {n} columns, got shape {self.a.shape}")
        if self.b.shape != (self.a.shape[0],):
            raise ValueError(f"b must have {self.a.shape[0]} entries, got {self.b.shape}")

    @property
    def n(self) -> int:
        return self.f.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[0]

    def objective(self, u: np.ndarray) -> float:
        return float(0.5 * u @ self.h @ u + self.f @ u)


@dataclass(frozen=True)
class QpSolution:
    u_star: np.ndarray
    lam: np.ndarray = field(repr=False)
    status: QpStatus
    kkt_residual: float
    iterations: int = 0
    active_set: tuple[int, ...] = ()

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def kkt_residual(p: QpProblem, u: np.ndarray, lam: np.ndarray) -> float:
    """Largest of the stationarity, primal feasibility and complementarity residuals."""
    slack = p.a @ u - p.b
    parts = [np.abs(p.h @ u + p.f + p.a.T @ lam).max(initial=0.0)]
    parts.append(np.maximum(slack, 0.0).max(initial=0.0))
    parts.append(np.abs(lam * slack).max(initial=0.0))
    parts.append(np.maximum(-lam, 0.0).max(initial=0.0))
    return float(max(parts))


class DualActiveSetSolver:
    """
    Goldfarb-Idnani style dual active-set QP solver.

    One instance holds the Cholesky factor and working arrays for the problem
    currently being solved; use one instance per thread.
    """

    def __init__(self, tol: float = 1e-8, max_iter: int = 200):
        if not tol > 0:
            raise ValueError(f"tol must be positive, got {tol}")
        if max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {max_iter}")
        self.tol = tol
        self.max_iter = max_iter

    def solve(self, p: QpProblem, warm_start: np.ndarray | None = None) -> QpSolution:
        """
        Solve the QP.

        Args:
            p: Problem data
            warm_start: Optional guess; constraints tight or violated there are
                preferred when picking the next constraint to add

        Returns:
            QpSolution: Solution with multipliers and KKT residual
        """
        try:
            chol = linalg.cholesky(p.h, lower=True)
        except linalg.LinAlgError as e:
            raise QpSolverError("QP Hessian is not positive definite") from e

        m = p.m
        # constraints in >= form: normals[:, i] @ x >= bounds[i]
        normals = -p.a.T
        bounds = -p.b
        feas_tol = self.tol * (1.0 + np.abs(p.b))

        preferred = np.zeros(m, dtype=bool)
        if warm_start is not None and m:
            w = np.asarray(warm_start, dtype=float)
            gap = p.a @ w - p.b
            preferred = gap >= -1e-6 * (1.0 + np.abs(p.b))

        x = -linalg.cho_solve((chol, True), p.f)
        active: list[int] = []
        mult = np.zeros(0)
        iterations = 0

        def factor(active_idx: list[int]) -> tuple[np.ndarray, np.ndarray]:
            if not active_idx:
                j_free = linalg.solve_triangular(chol.T, np.eye(p.n), lower=False)
                return j_free, np.zeros((0, 0))
            n_act = normals[:, active_idx]
            m_act = linalg.solve_triangular(chol, n_act, lower=True)
            q_mat, r_mat = np.linalg.qr(m_act, mode="complete")
            j_mat = linalg.solve_triangular(chol.T, q_mat, lower=False)
            return j_mat, r_mat[: len(active_idx), :]

        j_mat, r_mat = factor(active)
        status = QpStatus.OPTIMAL

        while True:
            slack = normals.T @ x - bounds if m else np.zeros(0)
            violated = slack < -feas_tol
            if active:
                violated[active] = False
            if not violated.any():
                status = QpStatus.OPTIMAL
                break

            pool = violated & preferred
            if not pool.any():
                pool = violated
            candidates = np.flatnonzero(pool)
            # most violated, lowest index on ties
            p_idx = int(candidates[np.argmin(slack[candidates])])
            n_p = normals[:, p_idx]
            u_p = 0.0

            added = False
            while not added:
                iterations += 1
                if iterations > self.max_iter:
                    status = QpStatus.MAX_ITER
                    break

                q = len(active)
                d = j_mat.T @ n_p
                z = j_mat[:, q:] @ d[q:]
                r = linalg.solve_triangular(r_mat, d[:q], lower=False) if q else np.zeros(0)

                # dual step length
                t1, drop = np.inf, -1
                for k in range(q):
                    if r[k] > 0.0:
                        ratio = mult[k] / r[k]
                        if ratio < t1:
                            t1, drop = ratio, k

                # primal step length
                zn = float(z @ n_p)
                if np.linalg.norm(d[q:]) <= 1e-12 * np.linalg.norm(d) or zn <= 0.0:
                    t2 = np.inf
                else:
                    t2 = -float(n_p @ x - bounds[p_idx]) / zn

                t = min(t1, t2)
                if not np.isfinite(t):
                    logger.debug(f"QP infeasible at constraint {p_idx} after {iterations} iterations")
                    return self._finish(p, x, active, mult, QpStatus.INFEASIBLE, iterations)

                if np.isfinite(t2):
                    x = x + t * z
                if q:
                    mult = mult - t * r
                u_p += t

                if t2 <= t1:
                    active.append(p_idx)
                    mult = np.append(mult, u_p)
                    added = True
                else:
                    del active[drop]
                    mult = np.delete(mult, drop)
                j_mat, r_mat = factor(active)

            if status is QpStatus.MAX_ITER:
                break

        if status is QpStatus.MAX_ITER:
            logger.warning(f"QP hit max_iter={self.max_iter} with {len(active)} active rows")
        return self._finish(p, x, active, mult, status, iterations)

    def _finish(
        self,
        p: QpProblem,
        x: np.ndarray,
        active: list[int],
        mult: np.ndarray,
        status: QpStatus,
        iterations: int,
    ) -> QpSolution:
        lam = np.zeros(p.m)
        if active:
            lam[active] = np.maximum(mult, 0.0)

        if status is QpStatus.OPTIMAL and active:
            x, lam = self._polish(p, x, lam, active)

        return QpSolution(
            u_star=x,
            lam=lam,
            status=status,
            kkt_residual=kkt_residual(p, x, lam),
            iterations=iterations,
            active_set=tuple(sorted(active)),
        )

    def _polish(
        self, p: QpProblem, x: np.ndarray, lam: np.ndarray, active: list[int]
    ) -> tuple[np.ndarray, np.ndarray]:
        """Re-solve the KKT system of the final active set to remove accumulated drift."""
        n, q = p.n, len(active)
        a_act = p.a[active]
        kkt = np.zeros((n + q, n + q))
        kkt[:n, :n] = p.h
        kkt[:n, n:] = a_act.T
        kkt[n:, :n] = a_act
        rhs = np.concatenate([-p.f, p.b[active]])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return x, lam
        x_new, mult_new = sol[:n], sol[n:]
        if not np.all(np.isfinite(sol)) or np.any(mult_new < -self.tol):
            return x, lam

        lam_new = np.zeros(p.m)
        lam_new[active] = np.maximum(mult_new, 0.0)
        if kkt_residual(p, x_new, lam_new) <= kkt_residual(p, x, lam):
            return x_new, lam_new
        return x, lam


def solve_qp(
    p: QpProblem,
    warm_start: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> QpSolution:
    """Solve a QP with a fresh solver instance."""
    return DualActiveSetSolver(tol=tol, max_iter=max_iter).solve(p, warm_start)
