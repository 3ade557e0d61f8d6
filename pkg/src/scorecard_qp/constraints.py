"""Assembly of score-engineering constraint matrices.

Equality rows (``Ac @ S = 0``) stack centering, no-inform and restriction
rows in that order. Pattern rows form ``Ap @ S <= 0``. In-weights are kept
apart as ``Ai @ S = IW`` since they are the only non-zero targets.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import SpecError
from .layout import GE, EngineeringSpec, IndexMap, InWeight, Pattern, spec_violations
from .moments import MomentSet


@dataclass(frozen=True)
class ConstraintSet:
    Ac: np.ndarray
    Ap: np.ndarray
    Ai: np.ndarray
    IW: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    ac_kinds: tuple[str, ...] = field(default=())

    @property
    def p(self) -> int:
        return self.Ac.shape[1]

    def shapes(self) -> dict[str, tuple[int, int]]:
        return {"Ac": self.Ac.shape, "Ap": self.Ap.shape, "Ai": self.Ai.shape}

    def without_inweights(self) -> "ConstraintSet":
        return ConstraintSet(
            Ac=self.Ac,
            Ap=self.Ap,
            Ai=np.zeros((0, self.p)),
            IW=np.zeros(0),
            lb=self.lb,
            ub=self.ub,
            ac_kinds=self.ac_kinds,
        )

    def residuals(self, S) -> dict[str, np.ndarray]:
        """Per-row constraint residuals at ``S`` (feasible: eq ~ 0, Ap <= 0)."""
        S = np.asarray(S, dtype=float)
        return {
            "Ac": self.Ac @ S,
            "Ap": self.Ap @ S,
            "Ai": self.Ai @ S - self.IW,
            "lb": self.lb - S,
            "ub": S - self.ub,
        }


def _unit(p: int, index: int) -> np.ndarray:
    row = np.zeros(p)
    row[index - 1] = 1.0
    return row


def _stack(rows: Sequence[np.ndarray], p: int) -> np.ndarray:
    if not rows:
        return np.zeros((0, p))
    return np.vstack(rows)


def centering_rows(e, imap: IndexMap) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    rows = []
    for c, (lo, hi) in enumerate(zip(imap.low, imap.high), start=1):
        row = np.zeros(e.shape[0])
        row[lo - 1 : hi] = e[lo - 1 : hi]
        if not np.any(row):
            warnings.warn(f"centering row for characteristic {c} is all zero", stacklevel=2)
        rows.append(row)
    return _stack(rows, e.shape[0])


def noinform_rows(imap: IndexMap) -> np.ndarray:
    p = imap.high[-1]
    return _stack([_unit(p, hi) for hi in imap.high], p)


def restriction_rows(
    fixes: Iterable[int], equalities: Iterable[tuple[int, int]], p: int
) -> np.ndarray:
    rows = [_unit(p, t) for t in fixes]
    for i, j in equalities:
        row = _unit(p, i)
        row[j - 1] = -1.0
        rows.append(row)
    return _stack(rows, p)


def pattern_rows(patterns: Iterable[Pattern], p: int) -> np.ndarray:
    """One row per ordering; ``S_j >= S_k`` becomes ``-S_j + S_k <= 0``."""
    rows = []
    seen = set()
    for pat in patterns:
        if pat.j == pat.k:
            raise SpecError(f"pattern ({pat.j}, {pat.k}): j != k required")
        key = (pat.j, pat.k, pat.sense)
        if key in seen:
            warnings.warn(f"duplicate pattern {key}; redundant row kept", stacklevel=2)
        seen.add(key)
        sign = -1.0 if pat.sense == GE else 1.0
        row = np.zeros(p)
        row[pat.j - 1] = sign
        row[pat.k - 1] = -sign
        rows.append(row)
    return _stack(rows, p)


def inweight_rows(inweights: Iterable[InWeight], p: int) -> tuple[np.ndarray, np.ndarray]:
    rows, values, seen = [], [], set()
    for iw in inweights:
        if iw.index in seen:
            raise SpecError(f"duplicate in-weight index {iw.index}")
        seen.add(iw.index)
        rows.append(_unit(p, iw.index))
        values.append(float(iw.value))
    return _stack(rows, p), np.asarray(values, dtype=float)


def assemble(spec: EngineeringSpec, M: MomentSet | np.ndarray, imap: IndexMap) -> ConstraintSet:
    """Build the full constraint set.

    ``M`` may be a :class:`MomentSet` or the centering-weight vector ``e``
    itself (useful for shape checks without data).
    """
    e = M.e if isinstance(M, MomentSet) else np.asarray(M, dtype=float)
    p = e.shape[0]
    if imap.high[-1] != p:
        raise SpecError(f"index map covers {imap.high[-1]} weights but moments have {p}")
    n_chars = len(imap.high)
    bad = spec_violations(spec, p)
    if bad:
        raise SpecError("; ".join(bad))

    blocks, kinds = [], []
    if spec.centering:
        blocks.append(centering_rows(e, imap))
        kinds += ["centering"] * n_chars
    if spec.noinform:
        blocks.append(noinform_rows(imap))
        kinds += ["noinform"] * n_chars
    restr = restriction_rows(spec.fixes, spec.equalities, p)
    blocks.append(restr)
    kinds += ["fix"] * len(spec.fixes) + ["equality"] * len(spec.equalities)
    Ac = np.vstack(blocks) if blocks else np.zeros((0, p))

    Ap = pattern_rows(spec.patterns, p)
    Ai, IW = inweight_rows(spec.inweights, p)
    lb = np.full(p, -np.inf)
    ub = np.full(p, np.inf)
    for t, (lo, hi) in spec.bounds.items():
        lb[t - 1] = lo
        ub[t - 1] = hi
    return ConstraintSet(Ac=Ac, Ap=Ap, Ai=Ai, IW=IW, lb=lb, ub=ub, ac_kinds=tuple(kinds))

