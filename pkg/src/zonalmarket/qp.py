"""Strictly convex quadratic programs with a diagonal Hessian.

Solves
    min  1/2 x' diag(q) x + a' x
    s.t. G x <= h          (general inequality rows)
         lo <= x <= hi     (box constraints, entries may be infinite)
         e' x  = r         (single balance equality)
with q > 0 elementwise, by a dual active-set scheme in the style of
Goldfarb and Idnani: start from the unconstrained minimiser, repeatedly
pick a violated constraint, and take mixed primal/dual steps, dropping
blocking constraints, until primal feasibility.  The dual iterates stay
dual feasible throughout, so no phase-1 problem is needed and an
infeasible problem is certified by a Farkas-type combination.

The diagonal Hessian keeps every linear solve at the size of the active
set, which stays small for market-clearing instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"

# Constraint kinds used in active-set labels and infeasibility certificates.
KIND_EQUALITY = "equality"
KIND_ROW = "row"
KIND_LOWER = "lower"
KIND_UPPER = "upper"

_DEP_EPS = 1e-12  # threshold for treating a step direction as zero
_FEAS_REL = 1e-9  # feasibility tolerance, relative to constraint scale


class QpInputError(ValueError):
    """Raised when problem data violates the Cqp invariants."""


class QpSolverFailure(RuntimeError):
    """Raised when the active-set iteration fails to make progress."""


@dataclass(frozen=True)
class Cqp:
    """Strictly convex QP data.

    Attributes
    ----------
    diag_hessian : (n,) positive quadratic coefficients.
    linear_cost : (n,) linear cost coefficients.
    ineq_matrix : (m, n) general inequality rows G with G x <= ineq_rhs.
    ineq_rhs : (m,) right-hand sides.
    lower_bounds, upper_bounds : (n,) box bounds; -inf/+inf disable a side.
    eq_vector : (n,) equality coefficients e.
    eq_rhs : equality right-hand side r in e' x = r.
    """

    diag_hessian: np.ndarray
    linear_cost: np.ndarray
    ineq_matrix: np.ndarray
    ineq_rhs: np.ndarray
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray
    eq_vector: np.ndarray
    eq_rhs: float

    def __post_init__(self):
        conv = lambda v: np.atleast_1d(np.asarray(v, dtype=float))
        object.__setattr__(self, "diag_hessian", conv(self.diag_hessian))
        object.__setattr__(self, "linear_cost", conv(self.linear_cost))
        object.__setattr__(self, "ineq_rhs", conv(self.ineq_rhs))
        object.__setattr__(self, "lower_bounds", conv(self.lower_bounds))
        object.__setattr__(self, "upper_bounds", conv(self.upper_bounds))
        object.__setattr__(self, "eq_vector", conv(self.eq_vector))
        object.__setattr__(self, "eq_rhs", float(self.eq_rhs))
        n = self.diag_hessian.shape[0]
        mat = np.asarray(self.ineq_matrix, dtype=float)
        if mat.size == 0:
            mat = mat.reshape(0, n)
        if mat.ndim != 2 or mat.shape[1] != n:
            raise QpInputError(
                f"inequality matrix shape {mat.shape} incompatible with n={n}"
            )
        object.__setattr__(self, "ineq_matrix", mat)
        if not np.all(np.isfinite(self.diag_hessian)) or np.any(self.diag_hessian <= 0.0):
            raise QpInputError("diag_hessian entries must be finite and > 0")
        for name in ("linear_cost", "lower_bounds", "upper_bounds", "eq_vector"):
            if getattr(self, name).shape != (n,):
                raise QpInputError(f"{name} has wrong length for n={n}")
        if self.ineq_rhs.shape != (mat.shape[0],):
            raise QpInputError("ineq_rhs length does not match ineq_matrix rows")
        if np.any(self.lower_bounds > self.upper_bounds):
            raise QpInputError("lower_bounds must not exceed upper_bounds")
        if not np.any(self.eq_vector != 0.0):
            raise QpInputError("eq_vector must be nonzero")

    @property
    def n(self) -> int:
        return self.diag_hessian.shape[0]

    @property
    def n_rows(self) -> int:
        return self.ineq_matrix.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.diag_hessian * x) + self.linear_cost @ x)


@dataclass(frozen=True)
class CqpSolution:
    """Primal/dual solution returned by :func:`solve_cqp`.

    Multiplier signs follow the stationarity convention
        diag(q) x + a + G' mu + nu e - eta_lo + eta_hi = 0
    with mu, eta_lo, eta_hi >= 0 for active constraints.
    """

    x: np.ndarray
    eq_multiplier: float
    ineq_multipliers: np.ndarray
    lower_multipliers: np.ndarray
    upper_multipliers: np.ndarray
    status: str
    kkt_residual: float
    certificate: str | None = None
    active_set: tuple = ()


def _feas_tol(rhs: float) -> float:
    return _FEAS_REL * max(1.0, abs(rhs))


def solve_cqp(problem: Cqp, tol: float = 1e-8,
              warm_start: Sequence[tuple] | CqpSolution | None = None) -> CqpSolution:
    """Solve a strictly convex QP.

    Parameters
    ----------
    problem : Cqp
        Validated problem data.
    tol : float
        Absolute tolerance on the reported KKT residual of optimal returns.
    warm_start : optional
        Hint only: a previous solution (or its ``active_set`` labels).
        Hinted constraints are preferred when selecting which violated
        constraint to activate next; the minimiser is unaffected.

    Returns
    -------
    CqpSolution with status ``optimal`` or ``infeasible``; infeasibility
    names the constraint whose violation cannot be repaired.
    """
    n = problem.n
    m = problem.n_rows
    q = problem.diag_hessian
    a = problem.linear_cost
    G = problem.ineq_matrix
    h = problem.ineq_rhs
    lo = problem.lower_bounds
    hi = problem.upper_bounds
    q_inv = 1.0 / q

    # Constraint ids: 0..m-1 general rows, m..m+n-1 lower bounds,
    # m+n..m+2n-1 upper bounds.  All stored in "normal' x >= rhs" form.
    n_ids = m + 2 * n

    def normal_of(cid: int) -> np.ndarray:
        vec = np.zeros(n)
        if cid < m:
            vec[:] = -G[cid]
        elif cid < m + n:
            vec[cid - m] = 1.0
        else:
            vec[cid - m - n] = -1.0
        return vec

    def rhs_of(cid: int) -> float:
        if cid < m:
            return -h[cid]
        if cid < m + n:
            return lo[cid - m]
        return -hi[cid - m - n]

    def label_of(cid: int) -> tuple:
        if cid < m:
            return (KIND_ROW, cid)
        if cid < m + n:
            return (KIND_LOWER, cid - m)
        return (KIND_UPPER, cid - m - n)

    usable = np.ones(n_ids, dtype=bool)
    usable[m:m + n] = np.isfinite(lo)
    usable[m + n:] = np.isfinite(hi)

    hint_ids: set[int] = set()
    if warm_start is not None:
        labels = warm_start.active_set if isinstance(warm_start, CqpSolution) else warm_start
        lookup = {(KIND_ROW,): 0, (KIND_LOWER,): m, (KIND_UPPER,): m + n}
        for lab in labels:
            if not isinstance(lab, tuple) or len(lab) != 2:
                continue
            kind, idx = lab
            if kind == KIND_EQUALITY:
                continue
            base = lookup.get((kind,))
            if base is not None and 0 <= int(idx) < (m if kind == KIND_ROW else n):
                hint_ids.add(base + int(idx))

    x = -a * q_inv
    active: list[int] = []          # -1 denotes the equality constraint
    multipliers: list[float] = []
    eq_sign = 1.0
    norm_cols = np.zeros((n, 0))

    def rebuild_cols():
        nonlocal norm_cols
        cols = []
        for cid in active:
            cols.append(eq_sign * problem.eq_vector if cid == -1 else normal_of(cid))
        norm_cols = np.column_stack(cols) if cols else np.zeros((n, 0))

    def step_directions(n_p: np.ndarray):
        if not active:
            return q_inv * n_p, np.zeros(0)
        dinv_n = q_inv[:, None] * norm_cols
        gram = norm_cols.T @ dinv_n
        rhs = norm_cols.T @ (q_inv * n_p)
        try:
            r = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by adds
            raise QpSolverFailure("singular active-set system") from exc
        z = q_inv * (n_p - norm_cols @ r)
        return z, r

    def activate(cid: int, n_p: np.ndarray, slack: float) -> str | None:
        """Drive constraint `cid` (slack < 0) into the active set.

        Returns a certificate string if the violation is irreducible.
        """
        nonlocal x
        u_new = 0.0
        droppable = [c != -1 for c in active]
        while True:
            z, r = step_directions(n_p)
            t_dual = np.inf
            k_drop = -1
            for pos, cid_act in enumerate(active):
                if droppable[pos] and r[pos] > _DEP_EPS:
                    ratio = multipliers[pos] / r[pos]
                    if ratio < t_dual - 1e-14 or (
                        abs(ratio - t_dual) <= 1e-14
                        and (k_drop < 0 or cid_act < active[k_drop])
                    ):
                        t_dual = ratio
                        k_drop = pos
            z_dot = float(z @ n_p)
            t_full = -slack / z_dot if z_dot > _DEP_EPS * max(1.0, n_p @ n_p) else np.inf
            step = min(t_dual, t_full)
            if not np.isfinite(step):
                if cid == -1:
                    return "equality constraint e'x = r"
                kind, idx = label_of(cid)
                return f"{kind} constraint {idx}"
            for pos in range(len(active)):
                multipliers[pos] -= step * r[pos]
            u_new += step
            if t_full <= t_dual:
                x = x + step * z
                active.append(cid)
                multipliers.append(u_new)
                rebuild_cols()
                return None
            if np.isfinite(t_full):
                x = x + step * z
                slack = float(n_p @ x) - (problem.eq_rhs * eq_sign if cid == -1 else rhs_of(cid))
            del active[k_drop]
            del multipliers[k_drop]
            del droppable[k_drop]
            rebuild_cols()

    # The balance equality joins the active set first and is never dropped.
    eq_slack = float(problem.eq_vector @ x) - problem.eq_rhs
    eq_sign = -1.0 if eq_slack > 0.0 else 1.0
    cert = activate(-1, eq_sign * problem.eq_vector, eq_sign * eq_slack)
    if cert is None:
        max_outer = 50 * (n_ids + n + 2)
        for _ in range(max_outer):
            slack_rows = h - G @ x if m else np.zeros(0)
            slack_lo = np.where(np.isfinite(lo), x - lo, np.inf)
            slack_hi = np.where(np.isfinite(hi), hi - x, np.inf)
            slacks = np.concatenate([slack_rows, slack_lo, slack_hi])
            tols = np.array([_feas_tol(rhs_of(cid)) if usable[cid] else np.inf
                             for cid in range(n_ids)])
            in_active = np.zeros(n_ids, dtype=bool)
            for cid in active:
                if cid >= 0:
                    in_active[cid] = True
            violated = np.flatnonzero((slacks < -tols) & usable & ~in_active)
            if violated.size == 0:
                cert = None
                break
            hinted = [cid for cid in violated if cid in hint_ids]
            pool = np.asarray(hinted) if hinted else violated
            pick = int(pool[np.argmin(slacks[pool])])
            cert = activate(pick, normal_of(pick), float(slacks[pick]))
            if cert is not None:
                break
        else:  # pragma: no cover - cycle guard
            raise QpSolverFailure("active-set iteration limit exceeded")

    if cert is None and active:
        # Polish: one clean KKT solve on the final active set removes the
        # floating-point drift the incremental multiplier updates accumulate.
        rhs_active = np.array([problem.eq_rhs * eq_sign if cid == -1 else rhs_of(cid)
                               for cid in active])
        dinv_n = q_inv[:, None] * norm_cols
        gram = norm_cols.T @ dinv_n
        try:
            u_polished = np.linalg.solve(gram, rhs_active + dinv_n.T @ a)
            x = q_inv * (norm_cols @ u_polished - a)
            multipliers = [float(u) for u in u_polished]
        except np.linalg.LinAlgError:
            pass  # keep the iterative solution

    eq_mult = 0.0
    mu = np.zeros(m)
    eta_lo = np.zeros(n)
    eta_hi = np.zeros(n)
    labels = []
    for cid, u in zip(active, multipliers):
        if cid == -1:
            eq_mult = -eq_sign * u
            labels.append((KIND_EQUALITY, 0))
        elif cid < m:
            mu[cid] = u
            labels.append(label_of(cid))
        elif cid < m + n:
            eta_lo[cid - m] = u
            labels.append(label_of(cid))
        else:
            eta_hi[cid - m - n] = u
            labels.append(label_of(cid))

    if cert is not None:
        worst = _max_violation(problem, x)
        return CqpSolution(x=x, eq_multiplier=eq_mult, ineq_multipliers=mu,
                           lower_multipliers=eta_lo, upper_multipliers=eta_hi,
                           status=INFEASIBLE, kkt_residual=worst,
                           certificate=cert, active_set=tuple(labels))

    residual = kkt_residual(problem, x, eq_mult, mu, eta_lo, eta_hi)
    scale = max(1.0, abs(problem.eq_rhs), float(np.max(np.abs(problem.linear_cost))))
    if residual > max(tol, 1e-7) * scale:
        raise QpSolverFailure(f"KKT residual {residual:.3e} exceeds tolerance")
    return CqpSolution(x=x, eq_multiplier=eq_mult, ineq_multipliers=mu,
                       lower_multipliers=eta_lo, upper_multipliers=eta_hi,
                       status=OPTIMAL, kkt_residual=residual,
                       certificate=None, active_set=tuple(labels))


def _max_violation(problem: Cqp, x: np.ndarray) -> float:
    viol = [abs(float(problem.eq_vector @ x) - problem.eq_rhs)]
    if problem.n_rows:
        viol.append(float(np.max(problem.ineq_matrix @ x - problem.ineq_rhs)))
    finite_lo = np.isfinite(problem.lower_bounds)
    finite_hi = np.isfinite(problem.upper_bounds)
    if np.any(finite_lo):
        viol.append(float(np.max(problem.lower_bounds[finite_lo] - x[finite_lo])))
    if np.any(finite_hi):
        viol.append(float(np.max(x[finite_hi] - problem.upper_bounds[finite_hi])))
    return max(0.0, max(viol))


def kkt_residual(problem: Cqp, x: np.ndarray, eq_multiplier: float,
                 ineq_multipliers: np.ndarray, lower_multipliers: np.ndarray,
                 upper_multipliers: np.ndarray) -> float:
    """Largest violation of stationarity, feasibility, sign constraints,
    and complementary slackness for the given primal/dual pair."""
    stat = (problem.diag_hessian * x + problem.linear_cost
            + eq_multiplier * problem.eq_vector
            - lower_multipliers + upper_multipliers)
    if problem.n_rows:
        stat = stat + problem.ineq_matrix.T @ ineq_multipliers
    parts = [float(np.max(np.abs(stat))), _max_violation(problem, x)]
    if problem.n_rows:
        parts.append(float(np.max(-ineq_multipliers, initial=0.0)))
        parts.append(float(np.max(np.abs(ineq_multipliers * (problem.ineq_rhs - problem.ineq_matrix @ x)))))
    parts.append(float(np.max(-lower_multipliers, initial=0.0)))
    parts.append(float(np.max(-upper_multipliers, initial=0.0)))
    finite_lo = np.isfinite(problem.lower_bounds)
    finite_hi = np.isfinite(problem.upper_bounds)
    if np.any(finite_lo):
        parts.append(float(np.max(np.abs(
            lower_multipliers[finite_lo] * (x[finite_lo] - problem.lower_bounds[finite_lo])))))
    if np.any(finite_hi):
        parts.append(float(np.max(np.abs(
            upper_multipliers[finite_hi] * (problem.upper_bounds[finite_hi] - x[finite_hi])))))
    return max(parts)
