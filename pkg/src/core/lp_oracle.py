"""
SwiptMDP - LP Oracle
Dense two-phase tableau simplex with Bland's rule. A LinearProgram keeps its
basis between objectives, so repeated linear minimization over one polytope
(conditional-gradient steps) restarts from the previous optimal vertex.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

import numpy as np
from numpy.typing import NDArray

from debug import log_debug
from core.error_handler import ContractViolation, DomainError, NumericalError

Array = NDArray[np.float64]


class LPStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass
class LPResult:
    x: Optional[Array]
    status: LPStatus
    objective: float
    iterations: int


class LinearProgram:
    """max c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0."""

    REFACTOR_EVERY = 100

    def __init__(self, n_vars: int, a_eq: Optional[Array] = None, b_eq: Optional[Array] = None,
                 a_ub: Optional[Array] = None, b_ub: Optional[Array] = None,
                 tol: float = 1e-9):
        if n_vars < 1:
            raise DomainError("linear program needs at least one variable")
        self.n_vars = n_vars
        self.tol = tol
        a_eq, b_eq = self._block(a_eq, b_eq, n_vars, "equality")
        a_ub, b_ub = self._block(a_ub, b_ub, n_vars, "inequality")
        m_eq, m_ub = a_eq.shape[0], a_ub.shape[0]
        m = m_eq + m_ub
        if m == 0:
            raise DomainError("linear program has no constraints; the polytope is unbounded")

        n_std = n_vars + m_ub
        a_std = np.zeros((m, n_std))
        a_std[:m_eq, :n_vars] = a_eq
        a_std[m_eq:, :n_vars] = a_ub
        a_std[m_eq:, n_vars:] = np.eye(m_ub)
        b_std = np.concatenate([b_eq, b_ub])

        row_scale = np.max(np.abs(a_std), axis=1)
        row_scale = np.where(row_scale > 0, row_scale, 1.0)
        a_std /= row_scale[:, None]
        b_std = b_std / row_scale
        flip = b_std < 0
        a_std[flip] *= -1.0
        b_std[flip] *= -1.0

        self.n_std = n_std
        self._a_std = a_std
        self._b_std = b_std
        self.pivots = 0
        self._since_refactor = 0
        self.feasible = self._phase_one(m_eq, flip)

    @staticmethod
    def _block(a: Optional[Array], b: Optional[Array], n: int, what: str):
        if a is None or b is None:
            if a is not None or b is not None:
                raise DomainError(f"{what} constraints need both a matrix and a right-hand side")
            return np.zeros((0, n)), np.zeros(0)
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        b = np.atleast_1d(np.asarray(b, dtype=np.float64))
        if a.shape != (b.size, n):
            raise DomainError(f"{what} matrix shape {a.shape} does not match ({b.size}, {n})")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise DomainError(f"{what} constraints contain non-finite values")
        return a, b

    def _phase_one(self, m_eq: int, flip: NDArray[np.bool_]) -> bool:
        m = self._a_std.shape[0]
        basis: List[int] = []
        art_rows: List[int] = []
        for row in range(m):
            if row >= m_eq and not flip[row]:
                basis.append(self.n_vars + row - m_eq)
            else:
                basis.append(-1)
                art_rows.append(row)

        n_art = len(art_rows)
        tableau = np.zeros((m, self.n_std + n_art + 1))
        tableau[:, :self.n_std] = self._a_std
        tableau[:, -1] = self._b_std
        for idx, row in enumerate(art_rows):
            tableau[row, self.n_std + idx] = 1.0
            basis[row] = self.n_std + idx
        # Slack columns scaled by the row normalization must be re-normalized to 1.
        for row in range(m):
            col = basis[row]
            tableau[row] /= tableau[row, col]

        self._tableau = tableau
        self._basis = basis
        if n_art:
            cost = np.zeros(self.n_std + n_art)
            cost[self.n_std:] = -1.0
            self._iterate(cost, allowed=self.n_std + n_art)
            infeasibility = float(np.sum(self._tableau[:, -1][np.array(self._basis) >= self.n_std]))
            if infeasibility > self.tol * max(1.0, float(np.max(np.abs(self._b_std)))):
                log_debug(f"LP phase one ended with infeasibility {infeasibility:.3e}", "LP")
                return False
            self._drive_out_artificials()
        self._tableau = np.hstack([self._tableau[:, :self.n_std], self._tableau[:, -1:]])
        return True

    def _drive_out_artificials(self) -> None:
        keep = []
        for row in range(self._tableau.shape[0]):
            if self._basis[row] < self.n_std:
                keep.append(row)
                continue
            candidates = np.nonzero(np.abs(self._tableau[row, :self.n_std]) > self.tol)[0]
            if candidates.size:
                self._pivot(row, int(candidates[0]))
                keep.append(row)
        # Rows whose artificial could not leave are redundant.
        self._tableau = self._tableau[keep]
        self._basis = [self._basis[r] for r in keep]
        self._a_std = self._a_std[keep]
        self._b_std = self._b_std[keep]

    def _pivot(self, row: int, col: int) -> None:
        t = self._tableau
        t[row] /= t[row, col]
        factors = t[:, col].copy()
        factors[row] = 0.0
        t -= np.outer(factors, t[row])
        self._basis[row] = col
        self.pivots += 1
        self._since_refactor += 1

    def _refactor(self) -> None:
        """Recompute the tableau rows from the original data and the current basis."""
        basis_matrix = self._a_std[:, self._basis]
        try:
            rows = np.linalg.solve(basis_matrix, np.column_stack([self._a_std, self._b_std]))
        except np.linalg.LinAlgError:
            return
        self._tableau = rows
        self._since_refactor = 0

    def _iterate(self, cost: Array, allowed: int) -> int:
        t = self._tableau
        m = t.shape[0]
        limit = 50 * (m + allowed) + 100
        for count in range(limit):
            if self._since_refactor >= self.REFACTOR_EVERY and allowed == self.n_std:
                self._refactor()
            t = self._tableau
            rhs = t[:, -1]
            rhs[(rhs < 0) & (rhs > -self.tol)] = 0.0
            reduced = cost[self._basis] @ t[:, :allowed] - cost[:allowed]
            entering = np.nonzero(reduced < -self.tol)[0]
            if entering.size == 0:
                return count
            col = int(entering[0])
            column = t[:, col]
            rows = np.nonzero(column > self.tol)[0]
            if rows.size == 0:
                raise ContractViolation("linear program is unbounded",
                                        {"entering_column": col})
            ratios = rhs[rows] / column[rows]
            best = ratios.min()
            ties = rows[ratios <= best + self.tol * max(1.0, abs(best))]
            row = int(min(ties, key=lambda r: self._basis[r]))
            self._pivot(row, col)
        raise NumericalError("simplex iteration limit reached", {"limit": limit})

    def maximize(self, c: Array) -> LPResult:
        c = np.asarray(c, dtype=np.float64)
        if c.shape != (self.n_vars,):
            raise DomainError(f"objective has shape {c.shape}, expected ({self.n_vars},)")
        if not self.feasible:
            return LPResult(None, LPStatus.INFEASIBLE, float("-inf"), 0)
        scale = float(np.max(np.abs(c)))
        scale = scale if scale > 0 else 1.0
        cost = np.zeros(self.n_std)
        cost[:self.n_vars] = c / scale
        iterations = self._iterate(cost, allowed=self.n_std)
        x_std = np.zeros(self.n_std)
        x_std[self._basis] = np.clip(self._tableau[:, -1], 0.0, None)
        x = x_std[:self.n_vars]
        return LPResult(x, LPStatus.OPTIMAL, float(c @ x), iterations)

    def minimize(self, c: Array) -> LPResult:
        result = self.maximize(-np.asarray(c, dtype=np.float64))
        result.objective = -result.objective
        return result


def lp_oracle(c: Array, a_eq: Optional[Array] = None, b_eq: Optional[Array] = None,
              a_ub: Optional[Array] = None, b_ub: Optional[Array] = None) -> LPResult:
    """One-shot maximization of c.x over a polytope; ties go to the lowest index."""
    c = np.asarray(c, dtype=np.float64)
    return LinearProgram(c.size, a_eq, b_eq, a_ub, b_ub).maximize(c)
