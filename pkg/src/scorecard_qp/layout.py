"""Scorecard index space and score-engineering specification.

All indices exposed here are 1-based, matching attribute numbering in
printed scorecards. Conversion to 0-based array positions happens in
:mod:`scorecard_qp.constraints`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import SpecError

LE = "<="
GE = ">="


@dataclass(frozen=True)
class Characteristic:
    name: str
    attribute_labels: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "attribute_labels", tuple(self.attribute_labels))
        if len(self.attribute_labels) < 1:
            raise SpecError(f"characteristic {self.name!r} has no attributes")


@dataclass(frozen=True)
class ScorecardLayout:
    """Ordered characteristics; the last attribute of each is its no-inform slot."""

    characteristics: tuple[Characteristic, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "characteristics", tuple(self.characteristics))
        if not self.characteristics:
            raise SpecError("layout has no characteristics")

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], prefix: str = "char") -> "ScorecardLayout":
        chars = []
        for c, size in enumerate(sizes, start=1):
            labels = [f"a{a}" for a in range(1, size)] + ["NO INFORMATION"]
            chars.append(Characteristic(f"{prefix}{c}", tuple(labels)))
        return cls(tuple(chars))

    @property
    def sizes(self) -> list[int]:
        return [len(c.attribute_labels) for c in self.characteristics]

    @property
    def p(self) -> int:
        return sum(self.sizes)

    def column_names(self) -> list[str]:
        """Indicator column names ``v<c>_<a>``; the no-inform slot is ``a = 0``."""
        names = []
        for c, size in enumerate(self.sizes, start=1):
            names.extend(f"v{c}_{a}" for a in range(1, size))
            names.append(f"v{c}_0")
        return names


@dataclass(frozen=True)
class IndexMap:
    low: tuple[int, ...]
    high: tuple[int, ...]

    def owner(self, index: int) -> int:
        """0-based position of the characteristic owning 1-based ``index``."""
        for c, (lo, hi) in enumerate(zip(self.low, self.high)):
            if lo <= index <= hi:
                return c
        raise IndexError(index)


def build_index_map(layout: ScorecardLayout) -> IndexMap:
    low, high = [], []
    last = 0
    for size in layout.sizes:
        low.append(last + 1)
        last += size
        high.append(last)
    return IndexMap(tuple(low), tuple(high))


@dataclass(frozen=True)
class Pattern:
    """Ordering between two weights: ``S_j <= S_k`` or ``S_j >= S_k``."""

    j: int
    k: int
    sense: str

    def __post_init__(self) -> None:
        if self.sense not in (LE, GE):
            raise SpecError(f"pattern sense must be '<=' or '>=', got {self.sense!r}")


@dataclass(frozen=True)
class InWeight:
    index: int
    value: float


@dataclass(frozen=True)
class EngineeringSpec:
    centering: bool = True
    noinform: bool = True
    fixes: tuple[int, ...] = ()
    equalities: tuple[tuple[int, int], ...] = ()
    patterns: tuple[Pattern, ...] = ()
    inweights: tuple[InWeight, ...] = ()
    bounds: Mapping[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "fixes", tuple(int(t) for t in self.fixes))
        object.__setattr__(
            self, "equalities", tuple((int(i), int(j)) for i, j in self.equalities)
        )
        object.__setattr__(self, "patterns", tuple(self.patterns))
        object.__setattr__(self, "inweights", tuple(self.inweights))
        object.__setattr__(self, "bounds", dict(self.bounds))

    def without_inweights(self) -> "EngineeringSpec":
        return EngineeringSpec(
            centering=self.centering,
            noinform=self.noinform,
            fixes=self.fixes,
            equalities=self.equalities,
            patterns=self.patterns,
            bounds=self.bounds,
        )


def validate_spec(spec: EngineeringSpec, layout: ScorecardLayout) -> list[str]:
    """Return every violated invariant of ``spec``; an empty list means it is valid."""
    return spec_violations(spec, layout.p)


def spec_violations(spec: EngineeringSpec, p: int) -> list[str]:
    problems: list[str] = []

    def check(index: int, what: str) -> None:
        if not 1 <= index <= p:
            problems.append(f"{what}: index {index} out of range [1, {p}]")

    for t in spec.fixes:
        check(t, "fix")
    for i, j in spec.equalities:
        check(i, "equality")
        check(j, "equality")
        if i == j:
            problems.append(f"equality ({i}, {j}): i != j required")
    for pat in spec.patterns:
        check(pat.j, "pattern")
        check(pat.k, "pattern")
        if pat.j == pat.k:
            problems.append(f"pattern ({pat.j}, {pat.k}): j != k required")
    seen: set[int] = set()
    for iw in spec.inweights:
        check(iw.index, "inweight")
        if iw.index in seen:
            problems.append(f"inweight: duplicate index {iw.index}")
        seen.add(iw.index)
    for t in sorted(seen & set(spec.fixes)):
        problems.append(f"index {t} appears in both fixes and inweights")
    for t, (lo, hi) in spec.bounds.items():
        check(t, "bound")
        if lo > hi:
            problems.append(f"bound at index {t}: lower {lo} > upper {hi}")
    return problems
