"""Dense dual active-set solver for strictly convex QPs.

    minimize    1/2 v'Qv + c'v
    subject to  lb <= A v <= ub,   var_lb <= v <= var_ub

Every finite bound becomes a one-sided constraint n'v >= b; rows with lb == ub become
equalities, which enter the active set first and are never dropped. The iteration
starts from the unconstrained minimum and adds the most violated constraint until
the iterate is primal feasible, keeping dual feasibility throughout. Directions are
recomputed from a QR factorisation of J'N with J = L^-T and Q = LL'.

LPs are solved as QPs with a vanishing quadratic term (see
``solve_lp_via_regularization``).
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg

from .config import QP_CONFIG
from .errors import (ConvergenceError, DimensionMismatchError, IllConditionedError, OvaeError,
                     UnboundedLpError)

logger = logging.getLogger(__name__)

# fraction of J'n outside the active span below which a direction counts as zero
_DEPENDENCE_TOL = 1e-12


class QpStatus(str, Enum):
    OPTIMAL = 'optimal'
    INFEASIBLE = 'infeasible'


@dataclass
class QuadProgram:
    Q: np.ndarray
    c: np.ndarray
    A: Optional[np.ndarray] = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    var_lb: Optional[np.ndarray] = None
    var_ub: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64).ravel()
        n = self.c.size
        self.Q = np.asarray(self.Q, dtype=np.float64)
        if self.Q.shape != (n, n):
            raise DimensionMismatchError("Q shape", (n, n), self.Q.shape)
        if not np.allclose(self.Q, self.Q.T, rtol=1e-12, atol=1e-14):
            raise OvaeError("Q must be symmetric")

        self.A = np.zeros((0, n)) if self.A is None else np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        m = self.A.shape[0]
        if self.A.shape[1] != n:
            raise DimensionMismatchError("A columns", n, self.A.shape[1])
        self.lb = self._bound(self.lb, m, -np.inf, "lb")
        self.ub = self._bound(self.ub, m, np.inf, "ub")
        self.var_lb = self._bound(self.var_lb, n, -np.inf, "var_lb")
        self.var_ub = self._bound(self.var_ub, n, np.inf, "var_ub")
        if np.any(self.lb > self.ub) or np.any(self.var_lb > self.var_ub):
            raise OvaeError("constraint bounds are inconsistent (lb > ub)")

    @staticmethod
    def _bound(value, size, default, name) -> np.ndarray:
        if value is None:
            return np.full(size, default)
        value = np.asarray(value, dtype=np.float64).ravel()
        if value.size != size:
            raise DimensionMismatchError(f"{name} length", size, value.size)
        return value

    @property
    def n_vars(self) -> int:
        return self.c.size

    def objective(self, v: np.ndarray) -> float:
        return float(0.5 * v @ self.Q @ v + self.c @ v)

    def constraint_system(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, List[Tuple[str, int, str]]]:
        """Columns n_j and offsets b_j of n_j'v >= b_j (or == b_j for equalities)"""
        normals, offsets, equal, origin = [], [], [], []
        eye = np.eye(self.n_vars)
        for kind, rows, lower, upper in (('var', eye, self.var_lb, self.var_ub), ('row', self.A, self.lb, self.ub)):
            for i in range(rows.shape[0]):
                if lower[i] == upper[i]:
                    normals.append(rows[i]); offsets.append(lower[i]); equal.append(True)
                    origin.append((kind, i, 'equal'))
                    continue
                if np.isfinite(lower[i]):
                    normals.append(rows[i]); offsets.append(lower[i]); equal.append(False)
                    origin.append((kind, i, 'lower'))
                if np.isfinite(upper[i]):
                    normals.append(-rows[i]); offsets.append(-upper[i]); equal.append(False)
                    origin.append((kind, i, 'upper'))
        N = np.array(normals).T if normals else np.zeros((self.n_vars, 0))
        return N, np.array(offsets, dtype=np.float64), np.array(equal, dtype=bool), origin


@dataclass
class QpSolution:
    primal: np.ndarray
    objective: float
    active_set: Tuple[int, ...]
    status: QpStatus
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


@dataclass
class KktResiduals:
    stationarity: float
    primal_feasibility: float
    dual_feasibility: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal_feasibility, self.dual_feasibility, self.complementarity)

    def dump(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2))


class DualActiveSetSolver:
    def __init__(self, problem: QuadProgram, feasibility_tol: float = None, max_iter: int = None,
                 condition_limit: float = None):
        self.problem = problem
        self.tol = QP_CONFIG['feasibility_tol'] if feasibility_tol is None else feasibility_tol
        self.max_iter = QP_CONFIG['max_iter'] if max_iter is None else max_iter
        self.condition_limit = QP_CONFIG['condition_limit'] if condition_limit is None else condition_limit

        self.N, self.b, self.is_eq, self.origin = problem.constraint_system()
        self.sign = np.ones(self.b.size)
        self.active: List[int] = []
        self.u = np.zeros(0)
        self.iterations = 0

    def _factor(self):
        Q = self.problem.Q
        condition = float(np.linalg.cond(Q))
        if not np.isfinite(condition) or condition > self.condition_limit:
            raise IllConditionedError(condition, self.condition_limit)
        try:
            L = linalg.cholesky(Q, lower=True)
        except linalg.LinAlgError:
            raise IllConditionedError(np.inf, self.condition_limit)
        self.J = linalg.solve_triangular(L, np.eye(Q.shape[0]), lower=True).T
        self.x = -linalg.cho_solve((L, True), self.problem.c)

    def _slack(self, j: int) -> float:
        return self.sign[j] * (self.N[:, j] @ self.x - self.b[j])

    def _tolerance(self, j: int) -> float:
        return self.tol * max(1.0, abs(self.b[j]))

    def _directions(self, normal: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
        """Primal step z, dual step r and the share of J'n outside the active span"""
        d_full = self.J.T @ normal
        norm2 = float(d_full @ d_full)
        q = len(self.active)
        if q == 0:
            return self.J @ d_full, np.zeros(0), 1.0 if norm2 > 0 else 0.0
        active_normals = self.N[:, self.active] * self.sign[self.active]
        basis, R = np.linalg.qr(self.J.T @ active_normals, mode='complete')
        Jq = self.J @ basis
        d = Jq.T @ normal
        z = Jq[:, q:] @ d[q:]
        r = linalg.solve_triangular(R[:q, :q], d[:q])
        share = float(d[q:] @ d[q:]) / norm2 if norm2 > 0 else 0.0
        return z, r, share

    def _add(self, p: int) -> bool:
        normal = self.sign[p] * self.N[:, p]
        u_p = 0.0
        while True:
            self.iterations += 1
            if self.iterations > self.max_iter:
                raise ConvergenceError(f"dual active-set did not converge in {self.max_iter} iterations")
            s_p = self._slack(p)
            z, r, share = self._directions(normal)

            if share <= _DEPENDENCE_TOL:
                if self.is_eq[p] and abs(s_p) <= self._tolerance(p):
                    return True  # consistent and already implied by the active equalities
                full = np.inf
            else:
                full = max(0.0, -s_p / float(z @ normal))

            partial, block = np.inf, None
            for i, j in enumerate(self.active):
                if not self.is_eq[j] and r[i] > 0:
                    ratio = self.u[i] / r[i]
                    if ratio < partial:
                        partial, block = ratio, i

            step = min(full, partial)
            if not np.isfinite(step):
                return False

            if np.isfinite(full):
                self.x = self.x + step * z
            self.u = self.u - step * r
            u_p += step

            if full <= partial:
                self.active.append(p)
                self.u = np.append(self.u, u_p)
                return True
            del self.active[block]
            self.u = np.delete(self.u, block)

    def _solution(self, status: QpStatus) -> QpSolution:
        multipliers = np.zeros(self.b.size)
        for i, j in enumerate(self.active):
            multipliers[j] = self.sign[j] * self.u[i]
        return QpSolution(self.x.copy(), self.problem.objective(self.x), tuple(self.active),
                          status, multipliers, self.iterations)

    def solve(self) -> QpSolution:
        self._factor()

        for j in np.flatnonzero(self.is_eq):
            if self.N[:, j] @ self.x - self.b[j] > 0:
                self.sign[j] = -1.0
            if not self._add(int(j)):
                logger.debug(f"Inconsistent equality {self.origin[j]}")
                return self._solution(QpStatus.INFEASIBLE)

        inequalities = np.flatnonzero(~self.is_eq)
        while inequalities.size:
            slack = self.N[:, inequalities].T @ self.x - self.b[inequalities]
            slack[np.isin(inequalities, self.active)] = np.inf
            worst = int(np.argmin(slack))
            p = int(inequalities[worst])
            if slack[worst] >= -self._tolerance(p):
                break
            if not self._add(p):
                logger.debug(f"No step restores constraint {self.origin[p]}")
                return self._solution(QpStatus.INFEASIBLE)

        return self._solution(QpStatus.OPTIMAL)


def solve_qp(problem: QuadProgram, **options) -> QpSolution:
    return DualActiveSetSolver(problem, **options).solve()


def refresh_multipliers(problem: QuadProgram, solution: QpSolution) -> QpSolution:
    """Least-squares multipliers for the active set at the reported primal"""
    N, _, _, _ = problem.constraint_system()
    multipliers = np.zeros(N.shape[1])
    if solution.active_set:
        cols = list(solution.active_set)
        gradient = problem.Q @ solution.primal + problem.c
        multipliers[cols] = np.linalg.lstsq(N[:, cols], gradient, rcond=None)[0]
    solution.multipliers = multipliers
    return solution


def kkt_residuals(problem: QuadProgram, solution: QpSolution) -> KktResiduals:
    N, b, is_eq, _ = problem.constraint_system()
    x, u = solution.primal, solution.multipliers
    if u.size != b.size:
        raise DimensionMismatchError("multiplier vector", b.size, u.size)
    slack = N.T @ x - b if b.size else np.zeros(0)
    stationarity = problem.Q @ x + problem.c - N @ u
    violation = np.concatenate([np.maximum(-slack[~is_eq], 0.0), np.abs(slack[is_eq]), [0.0]])
    return KktResiduals(
        stationarity=float(np.max(np.abs(stationarity))) if stationarity.size else 0.0,
        primal_feasibility=float(violation.max()),
        dual_feasibility=float(np.max(np.maximum(-u[~is_eq], 0.0), initial=0.0)),
        complementarity=float(np.max(np.abs(u * slack), initial=0.0))
    )


def _polish(problem: QuadProgram, solution: QpSolution) -> np.ndarray:
    """Minimum-norm correction putting the active constraints exactly at their bounds"""
    if not solution.active_set:
        return solution.primal
    N, b, _, _ = problem.constraint_system()
    cols = list(solution.active_set)
    residual = b[cols] - N[:, cols].T @ solution.primal
    return solution.primal + np.linalg.lstsq(N[:, cols].T, residual, rcond=None)[0]


def solve_lp_via_regularization(c: np.ndarray, A: Optional[np.ndarray] = None,
                                lb: Optional[np.ndarray] = None, ub: Optional[np.ndarray] = None,
                                var_lb: Optional[np.ndarray] = None, var_ub: Optional[np.ndarray] = None,
                                eps_reg: float = None) -> QpSolution:
    """Minimize c'v over the same constraint family as ``QuadProgram``.

    Adds eps_reg*|v|^2/2 with the cost scaled to unit norm, which for small enough
    eps_reg returns the minimum-norm LP optimum. The solve is repeated at eps_reg/10:
    a growing solution norm means the LP is unbounded, a moving objective means
    eps_reg was too large. The returned objective is c'v of the polished primal.
    """
    eps_reg = QP_CONFIG['lp_regularization'] if eps_reg is None else eps_reg
    c = np.asarray(c, dtype=np.float64).ravel()
    n = c.size
    scale = float(np.linalg.norm(c))
    cost = c / scale if scale > 0 else c

    def regularized(eps):
        problem = QuadProgram(eps * np.eye(n), cost, A, lb, ub, var_lb, var_ub)
        return problem, solve_qp(problem)

    problem, coarse = regularized(eps_reg)
    if not coarse.optimal:
        return coarse
    fine_problem, fine = regularized(eps_reg / 10.0)
    if not fine.optimal:
        return fine

    coarse_norm, fine_norm = np.linalg.norm(coarse.primal), np.linalg.norm(fine.primal)
    if fine_norm > 2.0 * coarse_norm + 1e-9:
        raise UnboundedLpError(f"LP appears unbounded: regularized solution norm grew "
                               f"from {coarse_norm:.3e} to {fine_norm:.3e}")

    primal = _polish(problem, coarse)
    fine_objective = float(c @ _polish(fine_problem, fine))
    objective = float(c @ primal)
    shift = abs(objective - fine_objective) / max(1.0, abs(objective))
    if shift > QP_CONFIG['lp_objective_shift_tol']:
        raise ConvergenceError(f"LP objective moved by {shift:.2e} when the regularization was reduced")

    solution = QpSolution(primal, objective, coarse.active_set, QpStatus.OPTIMAL,
                          iterations=coarse.iterations + fine.iterations)
    return refresh_multipliers(problem, solution)
