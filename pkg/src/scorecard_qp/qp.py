"""Dense primal active-set solver for convex quadratic programs.

Solves::

    minimize    1/2 x'Hx + f'x
    subject to  Aeq x = beq
                A x <= b
                lb <= x <= ub

Equality-constrained subproblems are solved in the null space of the
working set (QR of the working-set rows). Zero-curvature directions of a
semidefinite reduced Hessian are followed as rays, so an unbounded problem
is reported rather than regularized away. A feasible start is found by a
slack-minimizing phase-1 problem solved with the same machinery.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import InfeasibleError, SolverError

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9
KKT_TOL = 1e-6
RANK_TOL = 1e-10
PHASE1_RIDGE = 1e-8


class QpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITERATIONS = "max_iterations"


def _matrix(M, n: int, name: str) -> np.ndarray:
    if M is None:
        return np.zeros((0, n))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros((0, n))
    if M.shape[1] != n:
        raise ValueError(f"{name} has {M.shape[1]} columns, expected {n}")
    return M


def _vector(v, m: int, name: str, fill: float = 0.0) -> np.ndarray:
    if v is None:
        return np.full(m, fill)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != m:
        raise ValueError(f"{name} has length {v.shape[0]}, expected {m}")
    return v


@dataclass(frozen=True)
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    Aeq: np.ndarray | None = None
    beq: np.ndarray | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self) -> None:
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = H.shape[0]
        if H.shape != (n, n):
            raise ValueError("H must be square")
        scale = max(np.abs(H).max(initial=0.0), 1e-300)
        if np.abs(H - H.T).max(initial=0.0) > 1e-10 * scale:
            raise ValueError("H must be symmetric")
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("H", 0.5 * (H + H.T))
        set_("f", _vector(self.f, n, "f"))
        set_("Aeq", _matrix(self.Aeq, n, "Aeq"))
        set_("beq", _vector(self.beq, self.Aeq.shape[0], "beq"))
        set_("A", _matrix(self.A, n, "A"))
        set_("b", _vector(self.b, self.A.shape[0], "b"))
        set_("lb", _vector(self.lb, n, "lb", -np.inf))
        set_("ub", _vector(self.ub, n, "ub", np.inf))
        if np.any(self.lb > self.ub):
            raise ValueError("lb must not exceed ub")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.H @ x + self.f @ x)


class KktResiduals(NamedTuple):
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    def worst(self) -> float:
        return max(self)


@dataclass
class QpSolution:
    x: np.ndarray
    mult_eq: np.ndarray
    mult_ineq: np.ndarray
    mult_lower: np.ndarray
    mult_upper: np.ndarray
    status: QpStatus
    iterations: int
    objective: float = np.nan
    kkt: KktResiduals | None = None
    trace: list[float] = field(default_factory=list)
    events: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def kkt_residuals(prob: QpProblem, sol: QpSolution) -> KktResiduals:
    """Infinity-norm KKT residuals of ``sol`` for ``prob``."""
    x = np.asarray(sol.x, dtype=float)
    lb_fin = np.isfinite(prob.lb)
    ub_fin = np.isfinite(prob.ub)
    nu_l = np.where(lb_fin, sol.mult_lower, 0.0)
    nu_u = np.where(ub_fin, sol.mult_upper, 0.0)

    grad = prob.H @ x + prob.f + prob.Aeq.T @ sol.mult_eq + prob.A.T @ sol.mult_ineq
    grad = grad - nu_l + nu_u
    stationarity = float(np.abs(grad).max(initial=0.0))

    slack_a = prob.A @ x - prob.b
    slack_l = np.where(lb_fin, prob.lb - x, 0.0)
    slack_u = np.where(ub_fin, x - prob.ub, 0.0)
    primal = max(
        float(np.abs(prob.Aeq @ x - prob.beq).max(initial=0.0)),
        float(slack_a.max(initial=0.0)),
        float(slack_l.max(initial=0.0)),
        float(slack_u.max(initial=0.0)),
        0.0,
    )
    mins = [m.min(initial=0.0) for m in (sol.mult_ineq, nu_l, nu_u)]
    dual = max(0.0, -float(min(mins)))
    comp = max(
        float(np.abs(sol.mult_ineq * slack_a).max(initial=0.0)),
        float(np.abs(nu_l * slack_l).max(initial=0.0)),
        float(np.abs(nu_u * slack_u).max(initial=0.0)),
    )
    return KktResiduals(stationarity, primal, dual, comp)


# ----------------------------------------------------------------------------
# internal standard form: E x = e, G x <= h with rows scaled to unit inf-norm


@dataclass
class _Standard:
    E: np.ndarray
    e: np.ndarray
    e_rows: np.ndarray  # original Aeq row of each kept equality
    e_scale: np.ndarray
    G: np.ndarray
    h: np.ndarray
    g_kind: np.ndarray  # 0 = A row, 1 = upper bound, 2 = lower bound
    g_index: np.ndarray  # row of A or variable index
    g_scale: np.ndarray
    events: list[str]


def _standardize(prob: QpProblem) -> _Standard:
    n = prob.n
    events: list[str] = []

    E = prob.Aeq
    e = prob.beq
    s = np.abs(E).max(axis=1) if E.shape[0] else np.zeros(0)
    zero = s == 0
    if np.any(np.abs(e[zero]) > FEAS_TOL):
        raise InfeasibleError("an all-zero equality row has a non-zero right-hand side")
    keep = np.flatnonzero(~zero)
    E, e, s = E[keep] / s[keep, None], e[keep] / s[keep], s[keep]

    if E.shape[0]:
        _, R, piv = sla.qr(E.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        rank = int(np.sum(diag > RANK_TOL * max(diag[0], 1e-300)))
        if rank < E.shape[0]:
            sel = np.sort(piv[:rank])
            x_ls = np.linalg.lstsq(E[sel], e[sel], rcond=None)[0]
            resid = np.abs(E @ x_ls - e).max()
            if resid > FEAS_TOL * max(1.0, np.abs(e).max()):
                raise InfeasibleError(
                    f"equality constraints are inconsistent (residual {resid:.3g})"
                )
            events.append(f"dropped {E.shape[0] - rank} dependent equality rows")
            E, e, s, keep = E[sel], e[sel], s[sel], keep[sel]

    A, b = prob.A, prob.b
    sa = np.abs(A).max(axis=1) if A.shape[0] else np.zeros(0)
    if np.any(b[sa == 0] < -FEAS_TOL):
        raise InfeasibleError("an all-zero inequality row has a negative right-hand side")
    rows_a = np.flatnonzero(sa > 0)
    ub_idx = np.flatnonzero(np.isfinite(prob.ub))
    lb_idx = np.flatnonzero(np.isfinite(prob.lb))
    G = np.vstack(
        [A[rows_a] / sa[rows_a, None], np.eye(n)[ub_idx], -np.eye(n)[lb_idx]]
    ) if (rows_a.size + ub_idx.size + lb_idx.size) else np.zeros((0, n))
    h = np.concatenate([b[rows_a] / sa[rows_a], prob.ub[ub_idx], -prob.lb[lb_idx]])
    kind = np.concatenate(
        [np.zeros(rows_a.size), np.ones(ub_idx.size), np.full(lb_idx.size, 2)]
    ).astype(int)
    index = np.concatenate([rows_a, ub_idx, lb_idx]).astype(int)
    gscale = np.concatenate([sa[rows_a], np.ones(ub_idx.size + lb_idx.size)])
    return _Standard(E, e, keep, s, G, h, kind, index, gscale, events)


class _Basis:
    """Incrementally grown orthonormal basis used to pick independent rows."""

    def __init__(self, n: int) -> None:
        self.Q = np.zeros((n, 0))

    def try_add(self, a: np.ndarray) -> bool:
        norm = np.linalg.norm(a)
        if norm == 0:
            return False
        r = a - self.Q @ (self.Q.T @ a)
        r = r - self.Q @ (self.Q.T @ r)
        rn = np.linalg.norm(r)
        if rn <= 1e-8 * norm:
            return False
        self.Q = np.column_stack([self.Q, r / rn])
        return True


def _initial_working_set(E, G, h, x) -> list[int]:
    basis = _Basis(x.shape[0])
    for row in E:
        basis.try_add(row)
    work = []
    slack = h - G @ x
    for i in np.flatnonzero(slack <= FEAS_TOL):
        if basis.try_add(G[i]):
            work.append(int(i))
    return work


@dataclass
class _Result:
    x: np.ndarray
    lam_e: np.ndarray
    nu_g: np.ndarray
    status: QpStatus
    iterations: int
    trace: list[float]


def _active_set(H, f, E, e, G, h, x, work, max_iter) -> _Result:
    """Primal active-set iterations from a feasible ``x``."""
    n = x.shape[0]
    mE = E.shape[0]
    hscale = max(np.abs(H).max(initial=0.0), 1e-300)
    curv_tol = 1e-12 * hscale
    fscale = np.abs(f).max(initial=0.0)
    work = list(work)
    in_work = np.zeros(G.shape[0], dtype=bool)
    in_work[work] = True
    trace = [float(0.5 * x @ H @ x + f @ x)]
    at_min = False
    bland = False
    status = QpStatus.MAX_ITERATIONS
    lam = np.zeros(mE + len(work))
    it = 0

    for it in range(1, max_iter + 1):
        g = H @ x + f
        scale = max(1.0, hscale * np.abs(x).max(initial=0.0) + fscale)
        K = np.vstack([E, G[work]]) if (mE or work) else np.zeros((0, n))
        k = K.shape[0]
        if k:
            Q, R = sla.qr(K.T)
            Q1, Z, R1 = Q[:, :k], Q[:, k:], R[:k, :]
        else:
            Q1, Z, R1 = np.zeros((n, 0)), np.eye(n), np.zeros((0, 0))

        gz = Z.T @ g
        stationary = at_min or np.abs(gz).max(initial=0.0) <= 1e-11 * scale
        ray = False
        if not stationary:
            Hz = Z.T @ H @ Z
            w, V = np.linalg.eigh(Hz)
            if w.size and w[0] < -1e-8 * hscale:
                raise SolverError(
                    "H is not positive semidefinite on the feasible subspace "
                    f"(eigenvalue {w[0]:.3g})"
                )
            flat = w <= curv_tol
            if np.any(flat):
                g0 = V[:, flat].T @ gz
                if np.abs(g0).max() > 1e-11 * scale:
                    p = -Z @ (V[:, flat] @ g0)
                    ray = True
            if not ray:
                pos = ~flat
                p = -Z @ (V[:, pos] @ ((V[:, pos].T @ gz) / w[pos]))
            if np.abs(p).max(initial=0.0) <= 1e-15 * max(1.0, np.abs(x).max(initial=0.0)):
                stationary = True

        if stationary:
            lam = sla.solve_triangular(R1, Q1.T @ (-g)) if k else np.zeros(0)
            nu = lam[mE:]
            mtol = 1e-10 * max(1.0, np.abs(g).max(initial=0.0))
            negative = np.flatnonzero(nu < -mtol)
            if negative.size == 0:
                status = QpStatus.OPTIMAL
                break
            if bland:
                drop = min(negative, key=lambda j: work[j])
            else:
                drop = int(negative[np.argmin(nu[negative])])
            in_work[work[drop]] = False
            del work[drop]
            at_min = False
            continue

        # ratio test against constraints outside the working set
        Gp = G @ p
        pn = np.linalg.norm(p)
        cand = np.flatnonzero(~in_work & (Gp > 1e-11 * pn))
        alpha = np.inf if ray else 1.0
        block = -1
        if cand.size:
            slack = np.maximum(h[cand] - G[cand] @ x, 0.0)
            ratios = slack / Gp[cand]
            amin = ratios.min()
            if amin <= alpha:
                alpha = amin
                ties = cand[ratios <= amin + 1e-14 * max(1.0, amin)]
                block = int(ties.min())
        if block < 0 and ray:
            status = QpStatus.UNBOUNDED
            break
        x = x + alpha * p
        trace.append(float(0.5 * x @ H @ x + f @ x))
        if block >= 0:
            work.append(block)
            in_work[block] = True
            at_min = False
            bland = alpha <= 1e-14
        else:
            at_min = True
            bland = False
        log.debug("iter %d obj %.12g |W|=%d alpha=%.3g", it, trace[-1], len(work), alpha)

    nu_g = np.zeros(G.shape[0])
    lam_e = np.zeros(mE)
    if status is QpStatus.OPTIMAL:
        lam_e = lam[:mE]
        nu_g[work] = lam[mE:]
    return _Result(x, lam_e, nu_g, status, it, trace)


def _phase1(std: _Standard, n: int) -> np.ndarray:
    E, e, G, h = std.E, std.e, std.G, std.h
    if E.shape[0]:
        x0 = np.linalg.lstsq(E, e, rcond=None)[0]
    else:
        x0 = np.zeros(n)
    mG = G.shape[0]
    if mG == 0 or np.all(G @ x0 - h <= FEAS_TOL):
        return x0
    t0 = np.maximum(G @ x0 - h, 0.0)
    I = np.eye(mG)
    E1 = np.hstack([E, np.zeros((E.shape[0], mG))])
    G1 = np.vstack([np.hstack([G, -I]), np.hstack([np.zeros((mG, n)), -I])])
    h1 = np.concatenate([h, np.zeros(mG)])
    H1 = PHASE1_RIDGE * np.eye(n + mG)
    f1 = np.concatenate([np.zeros(n), np.ones(mG)])
    z0 = np.concatenate([x0, t0])
    work = _initial_working_set(E1, G1, h1, z0)
    res = _active_set(H1, f1, E1, e, G1, h1, z0, work, 50 * (n + 2 * mG + E.shape[0]))
    x = res.x[:n]
    viol = float(np.max(G @ x - h, initial=0.0))
    if viol > FEAS_TOL:
        raise InfeasibleError(
            f"phase-1 minimum slack {res.x[n:].sum():.3g} > 0; constraints are infeasible"
        )
    return x


def phase1_feasible(prob: QpProblem) -> np.ndarray:
    """A point satisfying all constraints of ``prob``; raises if none exists."""
    std = _standardize(prob)
    x = _phase1(std, prob.n)
    return x


def _is_feasible(std: _Standard, x: np.ndarray) -> bool:
    if std.E.shape[0] and np.abs(std.E @ x - std.e).max() > FEAS_TOL:
        return False
    return bool(np.all(std.G @ x - std.h <= FEAS_TOL))


def solve_qp(prob: QpProblem, x0=None, max_iter: int | None = None) -> QpSolution:
    n = prob.n
    me, ma = prob.Aeq.shape[0], prob.A.shape[0]

    def empty(status, x, events, iterations=0):
        sol = QpSolution(
            x=x,
            mult_eq=np.zeros(me),
            mult_ineq=np.zeros(ma),
            mult_lower=np.zeros(n),
            mult_upper=np.zeros(n),
            status=status,
            iterations=iterations,
            objective=prob.objective(x) if np.all(np.isfinite(x)) else np.nan,
            events=events,
        )
        sol.kkt = kkt_residuals(prob, sol)
        return sol

    try:
        std = _standardize(prob)
    except InfeasibleError as exc:
        return empty(QpStatus.INFEASIBLE, np.full(n, np.nan), [str(exc)])
    events = list(std.events)

    x = None
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        if x0.shape != (n,):
            raise ValueError(f"x0 has shape {x0.shape}, expected ({n},)")
        if _is_feasible(std, x0):
            x = x0.copy()
        else:
            events.append("x0 infeasible; running phase 1")
    if x is None:
        try:
            x = _phase1(std, n)
        except InfeasibleError as exc:
            return empty(QpStatus.INFEASIBLE, np.full(n, np.nan), events + [str(exc)])

    if max_iter is None:
        max_iter = 50 * (n + me + std.G.shape[0])
    work = _initial_working_set(std.E, std.G, std.h, x)
    res = _active_set(prob.H, prob.f, std.E, std.e, std.G, std.h, x, work, max_iter)

    mult_eq = np.zeros(me)
    mult_eq[std.e_rows] = res.lam_e / std.e_scale
    nu = res.nu_g / std.g_scale
    mult_ineq = np.zeros(ma)
    mult_lower = np.zeros(n)
    mult_upper = np.zeros(n)
    for kind, target in ((0, mult_ineq), (1, mult_upper), (2, mult_lower)):
        sel = std.g_kind == kind
        target[std.g_index[sel]] = nu[sel]

    sol = QpSolution(
        x=res.x,
        mult_eq=mult_eq,
        mult_ineq=mult_ineq,
        mult_lower=mult_lower,
        mult_upper=mult_upper,
        status=res.status,
        iterations=res.iterations,
        objective=prob.objective(res.x),
        trace=res.trace,
        events=events,
    )
    sol.kkt = kkt_residuals(prob, sol)
    # residuals scale with the data; only warn when they are large relative to it
    scale = max(1.0, np.abs(prob.H).max(initial=0.0) * np.abs(res.x).max(initial=0.0),
                np.abs(prob.f).max(initial=0.0))
    if res.status is QpStatus.OPTIMAL and sol.kkt.worst() > KKT_TOL * scale:
        log.warning("QP optimal but KKT residuals %s exceed %.0e", sol.kkt, KKT_TOL)
    return sol
