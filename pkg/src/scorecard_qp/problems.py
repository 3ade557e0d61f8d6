"""The five scorecard formulations, each reduced to one QP or a short QP sequence.

* classic / penalized: one QP on the ``d'S = delta`` scale, then rescaled to
  the weight-of-evidence (WoE) scale ``S'CS = d'S``.
* in-weighting / range engineering: the WoE constraint is moved into the
  objective with multiplier ``phi``; ``phi`` is found by a bracketed root
  search on ``g(phi) = S(phi)'CS(phi) - d'S(phi)``.
* regression: one least-squares QP with an unpenalized intercept.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .constraints import ConstraintSet
from .errors import InfeasibleError, NoRootError, RankError, SolverError, SpecError
from .moments import MomentSet, divergence, woe_gap, woe_scale
from .qp import QpProblem, QpSolution, QpStatus, solve_qp

log = logging.getLogger(__name__)

PROBLEMS = ("classic", "penalized", "inweight", "range", "regression")
DEFAULT_BRACKET = (0.01, 4.0)
ROOT_TOL = 1e-10  # target for the normalized WoE gap
ROOT_ACCEPT = 1e-3  # largest normalized gap accepted as a root


@dataclass
class ScorecardSolution:
    problem: str
    S: np.ndarray
    beta: float = 1.0
    phi_star: float | None = None
    lam: float = 0.0
    delta: float | None = None
    intercept: float | None = None
    woe_factor: float | None = None
    div_dev: float = math.nan
    div_val: float | None = None
    slacks: dict[str, np.ndarray] = field(default_factory=dict)
    trace: list[tuple[float, float]] = field(default_factory=list)
    qp: QpSolution | None = field(default=None, repr=False)


@dataclass(frozen=True)
class RangeTargets:
    """Per-weight emphasis ``R`` (diagonal) and target weights ``T``."""

    R: np.ndarray
    T: np.ndarray

    def __post_init__(self) -> None:
        R = np.asarray(self.R, dtype=float)
        T = np.asarray(self.T, dtype=float)
        if R.shape != T.shape or R.ndim != 1:
            raise SpecError("range emphasis and targets must be vectors of equal length")
        if np.any(R < 0):
            raise SpecError("range emphasis must be nonnegative")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)


def _require_ok(sol: QpSolution, what: str) -> None:
    if sol.status is QpStatus.OPTIMAL:
        return
    detail = "; ".join(sol.events)
    if sol.status is QpStatus.INFEASIBLE:
        raise InfeasibleError(f"{what}: constraints are infeasible ({detail})")
    raise SolverError(f"{what}: QP stopped with status {sol.status.value} ({detail})")


def _finish(
    problem: str,
    S: np.ndarray,
    M: MomentSet,
    CS: ConstraintSet,
    M_val: MomentSet | None,
    **kw,
) -> ScorecardSolution:
    slacks = CS.residuals(S)
    slacks["woe"] = np.array([woe_gap(S, M)])
    div_val = divergence(S, M_val) if M_val is not None else None
    sol = ScorecardSolution(
        problem=problem, S=S, div_dev=divergence(S, M), div_val=div_val, slacks=slacks, **kw
    )
    bounded = np.isfinite(CS.lb) | np.isfinite(CS.ub)
    if np.any(bounded) and (
        slacks["lb"][bounded].max(initial=-np.inf) > 1e-7
        or slacks["ub"][bounded].max(initial=-np.inf) > 1e-7
    ):
        warnings.warn(f"{problem}: final weights violate size bounds after rescaling")
    return sol


# ----------------------------------------------------------------------------
# classic and penalized


def classic_qp(M: MomentSet, CS: ConstraintSet, delta: float, lam: float = 0.0) -> QpProblem:
    p = M.p
    return QpProblem(
        H=2.0 * (M.C + (lam / p) * np.eye(p)),
        f=np.zeros(p),
        Aeq=np.vstack([M.d, CS.Ac]),
        beq=np.concatenate([[delta], np.zeros(CS.Ac.shape[0])]),
        A=CS.Ap,
        b=np.zeros(CS.Ap.shape[0]),
        lb=CS.lb,
        ub=CS.ub,
    )


def _solve_scaled(problem, M, CS, delta, lam, M_val, x0) -> ScorecardSolution:
    if CS.Ai.shape[0]:
        raise SpecError(f"{problem} problem takes no in-weights; drop them from the constraints")
    if not delta > 0:
        raise SpecError("delta must be positive")
    if lam < 0:
        raise SpecError("lambda must be nonnegative")
    qp = classic_qp(M, CS, delta, lam)
    sol = solve_qp(qp, x0)
    if sol.status is QpStatus.INFEASIBLE:
        raise InfeasibleError(
            f"{problem}: no weights satisfy the engineering constraints with d'S = {delta:g}"
        )
    _require_ok(sol, problem)
    scaling = woe_scale(sol.x, M)
    return _finish(
        problem, scaling.W, M, CS, M_val, beta=scaling.beta, lam=lam, delta=delta, qp=sol
    )


def solve_classic(
    M: MomentSet, CS: ConstraintSet, delta: float = 1.0, M_val=None, x0=None
) -> ScorecardSolution:
    """Maximum-divergence weights on the WoE scale.

    Minimizes S'CS subject to Ac S = 0, d'S = delta, Ap S <= 0 and rescales
    the minimizer by beta = d'T / T'CT. The result does not depend on delta.
    """
    return _solve_scaled("classic", M, CS, delta, 0.0, M_val, x0)


def solve_penalized(
    M: MomentSet, CS: ConstraintSet, delta: float = 1.0, lam: float = 0.0, M_val=None, x0=None
) -> ScorecardSolution:
    """Classic problem with ridge term (lam / p) S'S added to the variance."""
    return _solve_scaled("penalized", M, CS, delta, lam, M_val, x0)


def tune_lambda(
    M_dev: MomentSet,
    M_val: MomentSet,
    CS: ConstraintSet,
    delta: float,
    grid: Sequence[float],
) -> tuple[float, list[tuple[float, float]]]:
    """Grid search for the penalty maximizing validation divergence.

    Returns the best lambda and ``(lambda, validation divergence)`` for every
    grid point that solved. Ties go to the smaller lambda.
    """
    if len(grid) == 0:
        raise SpecError("lambda grid is empty")
    results: list[tuple[float, float]] = []
    x0 = None
    for lam in grid:
        try:
            sol = solve_penalized(M_dev, CS, delta, lam, M_val=M_val, x0=x0)
        except (InfeasibleError, SolverError) as exc:
            warnings.warn(f"lambda = {lam:g} skipped: {exc}")
            continue
        x0 = sol.qp.x
        results.append((float(lam), float(sol.div_val)))
    if not results:
        raise SolverError("every lambda in the grid failed")
    best_lam, best_div = results[0]
    for lam, div in results[1:]:
        if div > best_div * (1 + 1e-12) or (abs(div - best_div) <= 1e-12 * abs(best_div) and lam < best_lam):
            best_lam, best_div = lam, div
    return best_lam, results


# ----------------------------------------------------------------------------
# root search on the multiplier of the WoE constraint


def _expand(lo: float, hi: float, side: str) -> float:
    width = hi - lo
    if side == "lo":
        return lo / 2 if lo > 0 else lo - width
    return hi * 2 if hi > 0 else hi + width


def line_search_root(
    g: Callable[[float], float],
    bracket: tuple[float, float],
    tol: float = 1e-6,
    max_evals: int = 100,
    max_expansions: int = 60,
    accept_tol: float | None = None,
) -> float:
    """Root of ``g`` by safeguarded secant steps inside a sign-change bracket.

    If the initial bracket has no sign change it is widened, one end at a
    time: a positive lower end is halved and a positive upper end doubled, so
    a positive bracket stays positive. The end with the smaller ``|g|`` moves.
    Secant steps use the two latest points; a step leaving the bracket, or a
    bracket that failed to halve, triggers bisection.
    """
    lo, hi = float(min(bracket)), float(max(bracket))
    if not lo < hi:
        raise ValueError("bracket must have two distinct ends")
    glo, ghi = g(lo), g(hi)
    best = min((abs(glo), lo), (abs(ghi), hi))
    evals = 2
    for expansions in range(max_expansions + 1):
        if best[0] <= tol:
            return best[1]
        if np.sign(glo) != np.sign(ghi):
            break
        if expansions == max_expansions:
            raise NoRootError(
                f"no sign change after {max_expansions} expansions (bracket [{lo:g}, {hi:g}])"
            )
        if abs(glo) <= abs(ghi):
            new = _expand(lo, hi, "lo")
            hi, ghi = lo, glo
            lo, glo = new, g(new)
            best = min(best, (abs(glo), lo))
        else:
            new = _expand(lo, hi, "hi")
            lo, glo = hi, ghi
            hi, ghi = new, g(new)
            best = min(best, (abs(ghi), hi))

    a, fa, b, fb = lo, glo, hi, ghi
    x_prev, f_prev, x_cur, f_cur = a, fa, b, fb
    force_bisect = False
    for _ in range(max_evals - evals):
        width = b - a
        x_new = math.nan
        if f_cur != f_prev:
            x_new = x_cur - f_cur * (x_cur - x_prev) / (f_cur - f_prev)
        if force_bisect or not a < x_new < b:
            x_new = 0.5 * (a + b)
        f_new = g(x_new)
        best = min(best, (abs(f_new), x_new))
        if abs(f_new) <= tol:
            return x_new
        if np.sign(f_new) == np.sign(fa):
            a, fa = x_new, f_new
        else:
            b, fb = x_new, f_new
        x_prev, f_prev, x_cur, f_cur = x_cur, f_cur, x_new, f_new
        force_bisect = (b - a) > 0.5 * width
        if b - a <= 4 * np.finfo(float).eps * max(1.0, abs(a)):
            break
    if accept_tol is not None and best[0] <= accept_tol:
        return best[1]
    raise NoRootError(f"root search stalled with |g| = {best[0]:.3g}")


class _PhiPath:
    """Evaluates S(phi) with warm starts and records the (phi, g) trace."""

    def __init__(self, M: MomentSet, build: Callable[[float], QpProblem], what: str, x0=None):
        self.M = M
        self.build = build
        self.what = what
        self.x = None if x0 is None else np.asarray(x0, dtype=float)
        self.cache: dict[float, QpSolution] = {}
        self.trace: list[tuple[float, float]] = []

    def __call__(self, phi: float) -> float:
        sol = solve_qp(self.build(phi), self.x)
        _require_ok(sol, f"{self.what} at phi = {phi:g}")
        self.x = sol.x
        self.cache[phi] = sol
        gap = woe_gap(sol.x, self.M)
        self.trace.append((phi, gap))
        log.info("%s: phi = %.6g, g = %.6g", self.what, phi, gap)
        return gap / max(1.0, abs(float(self.M.d @ sol.x)))

    def root(self, bracket) -> tuple[float, QpSolution]:
        phi = line_search_root(self, bracket, tol=ROOT_TOL, accept_tol=ROOT_ACCEPT)
        return phi, self.cache[phi]


# ----------------------------------------------------------------------------
# non-zero in-weighting


def inweight_qp(M: MomentSet, CS: ConstraintSet, lam: float, phi: float) -> QpProblem:
    p = M.p
    return QpProblem(
        H=2.0 * (phi * M.C + (lam / p) * np.eye(p)),
        f=-(1.0 + phi) * M.d,
        Aeq=np.vstack([CS.Ai, CS.Ac]),
        beq=np.concatenate([CS.IW, np.zeros(CS.Ac.shape[0])]),
        A=CS.Ap,
        b=np.zeros(CS.Ap.shape[0]),
        lb=CS.lb,
        ub=CS.ub,
    )


def solve_inweight_at_phi(
    M: MomentSet, CS: ConstraintSet, lam: float, phi: float, x0=None
) -> tuple[np.ndarray, float]:
    sol = solve_qp(inweight_qp(M, CS, lam, phi), x0)
    _require_ok(sol, f"in-weighting QP at phi = {phi:g}")
    return sol.x, woe_gap(sol.x, M)


def solve_inweight(
    M: MomentSet,
    CS: ConstraintSet,
    lam: float = 0.0,
    phi_bracket: tuple[float, float] = DEFAULT_BRACKET,
    M_val=None,
    x0=None,
) -> ScorecardSolution:
    """Maximize d'S - (lam/p) S'S on the WoE scale with weights fixed to IW."""
    path = _PhiPath(M, lambda phi: inweight_qp(M, CS, lam, phi), "in-weighting", x0)
    phi, sol = path.root(phi_bracket)
    return _finish(
        "inweight", sol.x, M, CS, M_val, phi_star=phi, lam=lam, trace=path.trace, qp=sol
    )


# ----------------------------------------------------------------------------
# range engineering


def range_qp(
    M: MomentSet,
    CS: ConstraintSet,
    lam: float,
    targets: RangeTargets,
    div_floor: float,
    phi: float,
) -> QpProblem:
    p = M.p
    if targets.R.shape[0] != p:
        raise SpecError(f"range targets have length {targets.R.shape[0]}, expected {p}")
    return QpProblem(
        H=2.0 * (phi * M.C + np.diag(targets.R) + (lam / p) * np.eye(p)),
        f=-(phi * M.d + 2.0 * targets.R * targets.T),
        Aeq=np.vstack([CS.Ai, CS.Ac]),
        beq=np.concatenate([CS.IW, np.zeros(CS.Ac.shape[0])]),
        A=np.vstack([-M.d, CS.Ap]),
        b=np.concatenate([[-div_floor], np.zeros(CS.Ap.shape[0])]),
        lb=CS.lb,
        ub=CS.ub,
    )


def solve_range(
    M: MomentSet,
    CS: ConstraintSet,
    lam: float,
    targets: RangeTargets,
    div_floor: float,
    phi_bracket: tuple[float, float] = DEFAULT_BRACKET,
    M_val=None,
    x0=None,
) -> ScorecardSolution:
    """Pull weights toward targets while keeping divergence above ``div_floor``."""
    if not div_floor > 0:
        raise SpecError("divergence floor must be positive")
    path = _PhiPath(
        M, lambda phi: range_qp(M, CS, lam, targets, div_floor, phi), "range engineering", x0
    )
    try:
        phi, sol = path.root(phi_bracket)
    except NoRootError as exc:
        raise NoRootError(
            f"range engineering: {exc}; the divergence floor {div_floor:g} may be unreachable "
            "under the constraints, or the targets too close to zero"
        ) from None
    out = _finish("range", sol.x, M, CS, M_val, phi_star=phi, lam=lam, trace=path.trace, qp=sol)
    if out.div_dev < div_floor - 1e-6:
        raise SolverError(
            f"range solution divergence {out.div_dev:.6g} is below the floor {div_floor:.6g}"
        )
    return out


# ----------------------------------------------------------------------------
# score-engineered regression


def regression_qp(X, y, CS: ConstraintSet, lam: float) -> QpProblem:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    Xr = np.hstack([np.ones((n, 1)), X])
    Ir = np.eye(p + 1)
    Ir[0, 0] = 0.0

    def pad(A):
        return np.hstack([np.zeros((A.shape[0], 1)), A])

    return QpProblem(
        H=2.0 * (Xr.T @ Xr + (lam / p) * Ir),
        f=-2.0 * (Xr.T @ y),
        Aeq=np.vstack([pad(CS.Ai), pad(CS.Ac)]),
        beq=np.concatenate([CS.IW, np.zeros(CS.Ac.shape[0])]),
        A=pad(CS.Ap),
        b=np.zeros(CS.Ap.shape[0]),
        lb=np.concatenate([[-np.inf], CS.lb]),
        ub=np.concatenate([[np.inf], CS.ub]),
    )


def solve_regression(
    X, y, CS: ConstraintSet, lam: float = 0.0, M: MomentSet | None = None, M_val=None, x0=None
) -> ScorecardSolution:
    """Least squares with an unpenalized intercept under the engineering constraints.

    No WoE rescaling is applied; when moments are given the factor that
    would bring S onto the WoE scale is reported as ``woe_factor``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise SpecError("X and y have different row counts")
    if lam < 0:
        raise SpecError("lambda must be nonnegative")
    constrained = CS.Ac.shape[0] + CS.Ap.shape[0] + CS.Ai.shape[0] > 0
    if lam == 0 and not constrained:
        Xr = np.hstack([np.ones((X.shape[0], 1)), X])
        if np.linalg.matrix_rank(Xr) < Xr.shape[1]:
            raise RankError("design matrix with intercept is rank deficient; use lambda > 0")
    sol = solve_qp(regression_qp(X, y, CS, lam), x0)
    _require_ok(sol, "regression")
    intercept, S = float(sol.x[0]), sol.x[1:]

    slacks = CS.residuals(S)
    woe_factor = div_dev = None
    div_val = None
    if M is not None:
        slacks["woe"] = np.array([woe_gap(S, M)])
        if float(M.d @ S) > 0:
            woe_factor = woe_scale(S, M).beta
        div_dev = divergence(S, M)
        if M_val is not None:
            div_val = divergence(S, M_val)
    return ScorecardSolution(
        problem="regression",
        S=S,
        lam=lam,
        intercept=intercept,
        woe_factor=woe_factor,
        div_dev=math.nan if div_dev is None else div_dev,
        div_val=div_val,
        slacks=slacks,
        qp=sol,
    )
