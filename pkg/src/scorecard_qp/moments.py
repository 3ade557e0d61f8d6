"""Class-conditional score moments, divergence and weight-of-evidence scaling."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateClassError, WoeSignError, ZeroVarianceError


@dataclass(frozen=True)
class MomentSet:
    MG: np.ndarray
    MB: np.ndarray
    CG: np.ndarray
    CB: np.ndarray
    nG: float
    nB: float

    @property
    def p(self) -> int:
        return self.MG.shape[0]

    @cached_property
    def C(self) -> np.ndarray:
        """Pooled covariance (CG + CB) / 2."""
        return 0.5 * (self.CG + self.CB)

    @cached_property
    def d(self) -> np.ndarray:
        return self.MG - self.MB

    @cached_property
    def e(self) -> np.ndarray:
        """Centering weights MG + MB."""
        return self.MG + self.MB


@dataclass(frozen=True)
class WoeScaling:
    beta: float
    W: np.ndarray


def _class_moments(X: np.ndarray, w: np.ndarray | None, label: str):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{label} rows must be a 2-D matrix")
    if w is None:
        n = X.shape[0]
        if n < 2:
            raise DegenerateClassError(f"{label} class has {n} rows; need at least 2")
        mean = X.mean(axis=0)
        R = X - mean
        cov = R.T @ R / (n - 1)
        return mean, cov, float(n)
    w = np.asarray(w, dtype=float)
    if w.shape != (X.shape[0],):
        raise ValueError(f"{label} weights must have one entry per row")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError(f"{label} weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise DegenerateClassError(f"{label} class has all-zero weights")
    if total <= 1 or np.count_nonzero(w) < 2:
        raise DegenerateClassError(
            f"{label} class has effective size {total:g}; need more than 1"
        )
    mean = w @ X / total
    R = X - mean
    cov = (R * w[:, None]).T @ R / (total - 1)
    return mean, cov, float(total)


def compute_moments(goods, bads, good_weights=None, bad_weights=None) -> MomentSet:
    """Means and unbiased covariances of the indicator rows, per class.

    Weights are frequency weights: a row with weight 2 counts as two copies,
    so the covariance divisor is ``sum(w) - 1``.
    """
    MG, CG, nG = _class_moments(goods, good_weights, "good")
    MB, CB, nB = _class_moments(bads, bad_weights, "bad")
    if MG.shape != MB.shape:
        raise ValueError("good and bad rows have different column counts")
    # symmetrize against round-off in the weighted product
    CG = 0.5 * (CG + CG.T)
    CB = 0.5 * (CB + CB.T)
    return MomentSet(MG=MG, MB=MB, CG=CG, CB=CB, nG=nG, nB=nB)


def _variance_floor(S: np.ndarray) -> float:
    return 1e-14 * max(1.0, float(S @ S))


def divergence(S, M: MomentSet) -> float:
    """(d'S)^2 / S'CS."""
    S = np.asarray(S, dtype=float)
    var = float(S @ M.C @ S)
    if var <= _variance_floor(S):
        raise ZeroVarianceError("score has zero pooled variance")
    return float(M.d @ S) ** 2 / var


def woe_scale(T, M: MomentSet) -> WoeScaling:
    T = np.asarray(T, dtype=float)
    var = float(T @ M.C @ T)
    if var <= _variance_floor(T):
        raise ZeroVarianceError("cannot rescale a score with zero pooled variance")
    dT = float(M.d @ T)
    if dT <= 0:
        raise WoeSignError(f"d'T = {dT:.3g} <= 0; rescaling would flip or zero the score")
    beta = dT / var
    return WoeScaling(beta=beta, W=beta * T)


def woe_gap(S, M: MomentSet) -> float:
    """S'CS - d'S, zero exactly on the weight-of-evidence scale."""
    S = np.asarray(S, dtype=float)
    return float(S @ M.C @ S - M.d @ S)


def check_woe(S, M: MomentSet, tol: float = 1e-6) -> bool:
    S = np.asarray(S, dtype=float)
    return abs(woe_gap(S, M)) <= tol * max(1.0, abs(float(M.d @ S)))
