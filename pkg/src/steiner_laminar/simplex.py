"""Bounded-variable primal simplex for equality-form LPs with box bounds.

Phase 1 adds one artificial column per row and minimizes their sum; phase 2
pins the artificials to zero and minimizes the real objective. The basis is
held as a dense LU factorization plus a product-form eta file, refactored
every `Tolerances.refactor_every` pivots. Pricing is Dantzig's rule; after
5 * rows consecutive degenerate pivots the phase switches to Bland's rule,
which cannot cycle.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from steiner_laminar.config import Tolerances
from steiner_laminar.formulation import LpModel

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class SimplexError(Exception):
    """Exception raised for internal simplex failures (singular basis, iteration limit)."""

    pass


@dataclass
class LpSolution:
    """Result of a simplex solve."""

    status: str
    objective: float
    values: np.ndarray
    iterations: int

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


def max_integrality_violation(values: np.ndarray) -> float:
    """Largest distance of any component from the nearest of {0, 1}."""
    if len(values) == 0:
        return 0.0
    return float(np.max(np.minimum(np.abs(values), np.abs(values - 1.0))))


class _BasisFactor:
    """LU of the last refactored basis B0 and etas E1..Ek with B = B0 E1 ... Ek."""

    def __init__(self, basis_matrix: np.ndarray, pivot_tol: float):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", la.LinAlgWarning)
            self._lu = la.lu_factor(basis_matrix, check_finite=False)
        diagonal = np.abs(np.diag(self._lu[0]))
        if len(diagonal) and diagonal.min() <= pivot_tol:
            raise SimplexError(f"Singular basis (smallest pivot {diagonal.min():.3e})")
        self._etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, column: np.ndarray) -> np.ndarray:
        """Solve B x = column."""
        x = la.lu_solve(self._lu, column, check_finite=False)
        for r, d in self._etas:
            x_r = x[r] / d[r]
            x -= d * x_r
            x[r] = x_r
        return x

    def btran(self, row: np.ndarray) -> np.ndarray:
        """Solve B^T y = row."""
        z = row.astype(np.float64, copy=True)
        for r, d in reversed(self._etas):
            z[r] = (z[r] - (d @ z - d[r] * z[r])) / d[r]
        return la.lu_solve(self._lu, z, trans=1, check_finite=False)

    def update(self, r: int, alpha: np.ndarray) -> None:
        self._etas.append((r, alpha.copy()))

    @property
    def eta_count(self) -> int:
        return len(self._etas)


class BoundedSimplex:
    """Primal simplex on min c x s.t. A x = b, l <= x <= u with finite bounds."""

    def __init__(
        self,
        matrix: sp.spmatrix,
        rhs: np.ndarray,
        cost: np.ndarray,
        lower: np.ndarray,
        upper: np.ndarray,
        tolerances: Tolerances | None = None,
        bland_after: int | None = None,
    ):
        self.tol = tolerances or Tolerances()
        self.rows, self.cols = matrix.shape
        # consecutive degenerate pivots tolerated before pricing falls back to Bland's rule
        self.bland_after = 5 * self.rows if bland_after is None else bland_after
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise SimplexError("Every column needs finite bounds")
        if np.any(lower > upper):
            raise SimplexError("A column has lower bound above upper bound")
        self.rhs = np.asarray(rhs, dtype=np.float64)
        self.cost = np.asarray(cost, dtype=np.float64)

        # structural columns start at their lower bound; artificials absorb the residual
        x = np.asarray(lower, dtype=np.float64).copy()
        residual = self.rhs - matrix @ x
        signs = np.where(residual >= 0, 1.0, -1.0)
        artificials = sp.diags(signs, format="csc", shape=(self.rows, self.rows))
        self.matrix = sp.hstack([sp.csc_matrix(matrix), artificials], format="csc")
        self.lower = np.concatenate([lower, np.zeros(self.rows)])
        self.upper = np.concatenate([upper, np.full(self.rows, np.inf)])
        self.x = np.concatenate([x, np.abs(residual)])
        self.basis = np.arange(self.cols, self.cols + self.rows)
        self.is_basic = np.zeros(self.cols + self.rows, dtype=bool)
        self.is_basic[self.basis] = True
        self.at_upper = np.zeros(self.cols + self.rows, dtype=bool)
        self.iterations = 0
        self._factor = self._refactor()

    def _column(self, j: int) -> np.ndarray:
        column = np.zeros(self.rows)
        start, stop = self.matrix.indptr[j], self.matrix.indptr[j + 1]
        column[self.matrix.indices[start:stop]] = self.matrix.data[start:stop]
        return column

    def _refactor(self) -> _BasisFactor:
        basis_matrix = self.matrix[:, self.basis].toarray()
        factor = _BasisFactor(basis_matrix, self.tol.pivot)
        # recompute basic values from the nonbasic ones to shed drift
        nonbasic = self.x.copy()
        nonbasic[self.basis] = 0.0
        self.x[self.basis] = factor.ftran(self.rhs - self.matrix @ nonbasic)
        return factor

    def solve(self) -> LpSolution:
        """Run both phases and return the solution over the structural columns."""
        phase_one_cost = np.concatenate([np.zeros(self.cols), np.ones(self.rows)])
        status = self._run(phase_one_cost)
        if status != OPTIMAL:
            raise SimplexError(f"Phase 1 ended with status {status}")
        infeasibility = float(self.x[self.cols:].sum())
        logger.debug("Phase 1 done after %d iterations, infeasibility %.3e",
                     self.iterations, infeasibility)
        if infeasibility > self.tol.feasibility * max(1.0, float(np.abs(self.rhs).max(initial=0))):
            return LpSolution(INFEASIBLE, float("nan"), self.x[:self.cols].copy(), self.iterations)

        # pin artificials to zero for phase 2
        self.upper[self.cols:] = 0.0
        nonbasic_art = ~self.is_basic[self.cols:]
        self.x[self.cols:][nonbasic_art] = 0.0
        self.at_upper[self.cols:] = False
        phase_two_cost = np.concatenate([self.cost, np.zeros(self.rows)])
        status = self._run(phase_two_cost)
        values = np.clip(self.x[:self.cols], self.lower[:self.cols], self.upper[:self.cols])
        objective = float(self.cost @ values)
        return LpSolution(status, objective, values, self.iterations)

    def _run(self, cost: np.ndarray) -> str:
        tol = self.tol
        bland = False
        degenerate = 0
        limit = 50 * (self.rows + self.cols) + 1000
        for _ in range(limit):
            if self._factor.eta_count >= tol.refactor_every:
                self._factor = self._refactor()

            y = self._factor.btran(cost[self.basis])
            reduced = cost - self.matrix.T @ y
            movable = self.upper > self.lower
            eligible = ~self.is_basic & movable & (
                (~self.at_upper & (reduced < -tol.optimality))
                | (self.at_upper & (reduced > tol.optimality))
            )
            candidates = np.flatnonzero(eligible)
            if len(candidates) == 0:
                return OPTIMAL
            if bland:
                q = int(candidates[0])
            else:
                q = int(candidates[np.argmax(np.abs(reduced[candidates]))])

            direction = -1.0 if self.at_upper[q] else 1.0
            alpha = self._factor.ftran(self._column(q))
            # rate of change of each basic variable as x_q moves by +theta*direction
            rate = -direction * alpha
            step, r = self._ratio_test(rate, bland)
            flip = self.upper[q] - self.lower[q]
            if r < 0 and not np.isfinite(flip):
                return UNBOUNDED

            self.iterations += 1
            if r < 0 or flip <= step:
                step = flip
                self.x[self.basis] += step * rate
                self.at_upper[q] = not self.at_upper[q]
                self.x[q] = self.upper[q] if self.at_upper[q] else self.lower[q]
            else:
                self.x[self.basis] += step * rate
                self.x[q] += direction * step
                leaving = int(self.basis[r])
                self.at_upper[leaving] = bool(rate[r] > 0)
                self.x[leaving] = self.upper[leaving] if self.at_upper[leaving] else self.lower[leaving]
                self.is_basic[leaving] = False
                self.is_basic[q] = True
                self.at_upper[q] = False
                self.basis[r] = q
                self._factor.update(r, alpha)

            if step <= tol.feasibility:
                degenerate += 1
                if not bland and degenerate >= self.bland_after:
                    logger.debug("Switching to Bland's rule after %d degenerate pivots", degenerate)
                    bland = True
            else:
                degenerate = 0
        raise SimplexError(f"Iteration limit {limit} reached")

    def _ratio_test(self, rate: np.ndarray, bland: bool) -> tuple[float, int]:
        """Return (step, leaving row) of the bounded ratio test; row -1 if nothing blocks."""
        pivot = self.tol.pivot
        x_b = self.x[self.basis]
        ratios = np.full(self.rows, np.inf)
        falling = rate < -pivot
        rising = rate > pivot
        ratios[falling] = (x_b[falling] - self.lower[self.basis][falling]) / -rate[falling]
        upper_b = self.upper[self.basis]
        finite_rise = rising & np.isfinite(upper_b)
        ratios[finite_rise] = (upper_b[finite_rise] - x_b[finite_rise]) / rate[finite_rise]
        np.maximum(ratios, 0.0, out=ratios)
        step = float(ratios.min(initial=np.inf))
        if not np.isfinite(step):
            return step, -1
        ties = np.flatnonzero(ratios <= step + 1e-12)
        if bland:
            r = int(ties[np.argmin(self.basis[ties])])
        else:
            r = int(ties[np.argmax(np.abs(rate[ties]))])
        return step, r


def solve(
    model: LpModel, tolerances: Tolerances | None = None, bland_after: int | None = None
) -> LpSolution:
    """Solve an LpModel to an optimal basic solution.

    bland_after overrides the degenerate-pivot count (default 5 * rows)
    after which pricing switches to Bland's rule.

    Returns:
        LpSolution with status optimal, infeasible or unbounded.

    Raises:
        SimplexError: On internal failures (singular basis, iteration limit).
    """
    tolerances = tolerances or Tolerances()
    solver = BoundedSimplex(
        model.matrix, model.rhs, model.cost, model.lower, model.upper, tolerances, bland_after
    )
    solution = solver.solve()
    if solution.is_optimal:
        residual = model.matrix @ solution.values - model.rhs
        worst = float(np.max(np.abs(residual), initial=0.0))
        if worst > tolerances.feasibility:
            logger.warning("Row residual %.3e exceeds feasibility tolerance", worst)
    logger.debug(
        "Simplex %s after %d iterations, objective %s",
        solution.status, solution.iterations, solution.objective,
    )
    return solution
