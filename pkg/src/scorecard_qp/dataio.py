"""Config files, indicator datasets, synthetic data, reports and solution files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import DataFormatError, SpecError
from .layout import (
    GE,
    Characteristic,
    EngineeringSpec,
    InWeight,
    Pattern,
    ScorecardLayout,
    build_index_map,
)
from .problems import PROBLEMS, DEFAULT_BRACKET, RangeTargets, ScorecardSolution

SCHEMA_VERSION = 1
BUILTIN_PREFIX = "builtin:"


# ----------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    layout: ScorecardLayout
    spec: EngineeringSpec
    problems: list[str] = field(default_factory=lambda: ["classic"])
    delta: float = 1.0
    lam: float = 0.0
    lambda_grid: list[float] | None = None
    div_floor: float | None = None
    div_floor_fraction: float | None = None
    phi_bracket: tuple[float, float] = DEFAULT_BRACKET
    range_targets: RangeTargets | None = None
    split_keys: tuple[int, ...] = ()
    data_path: Path | None = None
    synth: dict = field(default_factory=dict)
    source: Path | None = None

    def check_problem(self, name: str) -> None:
        """Raise if parameters needed by problem ``name`` are missing."""
        if name not in PROBLEMS:
            raise SpecError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")
        if name == "range":
            if self.range_targets is None:
                raise SpecError("range problem needs a [range] section")
            if self.div_floor is None and self.div_floor_fraction is None:
                raise SpecError("range problem needs div_floor or div_floor_fraction")


def resolve_config_path(path: str | Path) -> Path:
    text = str(path)
    if text.startswith(BUILTIN_PREFIX):
        name = text[len(BUILTIN_PREFIX):]
        ref = resources.files("scorecard_qp") / "data" / f"{name}.toml"
        if not ref.is_file():
            raise SpecError(f"no builtin config named {name!r}")
        return Path(str(ref))
    return Path(path)


def _patterns(raw) -> list[Pattern]:
    out = []
    for item in raw:
        if isinstance(item, dict):
            out.append(Pattern(int(item["j"]), int(item["k"]), str(item["sense"])))
        else:
            j, sense, k = item
            out.append(Pattern(int(j), int(k), str(sense)))
    return out


def _range_targets(raw: dict, p: int) -> RangeTargets:
    idx = [int(i) for i in raw["indices"]]
    if any(not 1 <= i <= p for i in idx):
        raise SpecError("range indices out of range")

    def expand(value, name):
        if isinstance(value, (int, float)):
            return [float(value)] * len(idx)
        if len(value) != len(idx):
            raise SpecError(f"range {name} must match indices in length")
        return [float(v) for v in value]

    R = np.zeros(p)
    T = np.zeros(p)
    R[np.array(idx) - 1] = expand(raw.get("emphasis", 1.0), "emphasis")
    T[np.array(idx) - 1] = expand(raw["targets"], "targets")
    return RangeTargets(R, T)


def parse_config(raw: dict, source: Path | None = None) -> RunConfig:
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SpecError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    try:
        chars = [
            Characteristic(str(c["name"]), tuple(str(a) for a in c["attributes"]))
            for c in raw["characteristics"]
        ]
    except KeyError as exc:
        raise SpecError(f"characteristic entry missing key {exc}") from None
    layout = ScorecardLayout(tuple(chars))

    eng = raw.get("engineering", {})
    spec = EngineeringSpec(
        centering=bool(eng.get("centering", True)),
        noinform=bool(eng.get("noinform", True)),
        fixes=tuple(eng.get("fixes", ())),
        equalities=tuple(tuple(e) for e in eng.get("equalities", ())),
        patterns=tuple(_patterns(eng.get("patterns", ()))),
        inweights=tuple(
            InWeight(int(w["index"]), float(w["value"])) for w in eng.get("inweights", ())
        ),
        bounds={
            int(b["index"]): (float(b.get("lower", -math.inf)), float(b.get("upper", math.inf)))
            for b in eng.get("bounds", ())
        },
    )

    prob = raw.get("problem", {})
    names = prob.get("name", "classic")
    problems = [names] if isinstance(names, str) else list(names)
    base = source.parent if source is not None else Path.cwd()
    data = raw.get("data", {})
    cfg = RunConfig(
        layout=layout,
        spec=spec,
        problems=problems,
        delta=float(prob.get("delta", 1.0)),
        lam=float(prob.get("lambda", 0.0)),
        lambda_grid=[float(v) for v in prob["lambda_grid"]] if "lambda_grid" in prob else None,
        div_floor=float(prob["div_floor"]) if "div_floor" in prob else None,
        div_floor_fraction=(
            float(prob["div_floor_fraction"]) if "div_floor_fraction" in prob else None
        ),
        phi_bracket=tuple(float(v) for v in prob.get("phi_bracket", DEFAULT_BRACKET)),
        range_targets=_range_targets(raw["range"], layout.p) if "range" in raw else None,
        split_keys=tuple(int(k) for k in data.get("split_keys", ())),
        data_path=(base / data["path"]) if "path" in data else None,
        synth=dict(raw.get("synth", {})),
        source=source,
    )
    if "log_odds" in cfg.synth and len(cfg.synth["log_odds"]) != layout.p:
        raise SpecError(f"[synth] log_odds must have {layout.p} entries")
    for name in cfg.problems:
        if name not in PROBLEMS:
            raise SpecError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = resolve_config_path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise SpecError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"{path}: {exc}") from None
    return parse_config(raw, path)


# ----------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    rows: np.ndarray
    outcome: np.ndarray
    split_key: np.ndarray
    weights: np.ndarray | None = None

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        same_w = (self.weights is None) == (other.weights is None) and (
            self.weights is None or np.array_equal(self.weights, other.weights)
        )
        return (
            np.array_equal(self.rows, other.rows)
            and np.array_equal(self.outcome, other.outcome)
            and np.array_equal(self.split_key, other.split_key)
            and same_w
        )


@dataclass
class Partition:
    """Development / validation rows split by outcome; iterates as 4 matrices."""

    dev_goods: np.ndarray
    dev_bads: np.ndarray
    val_goods: np.ndarray
    val_bads: np.ndarray
    dev_good_w: np.ndarray | None = None
    dev_bad_w: np.ndarray | None = None
    val_good_w: np.ndarray | None = None
    val_bad_w: np.ndarray | None = None

    def __iter__(self):
        return iter((self.dev_goods, self.dev_bads, self.val_goods, self.val_bads))

    @property
    def has_validation(self) -> bool:
        return self.val_goods.shape[0] >= 2 and self.val_bads.shape[0] >= 2

    def dev_xy(self) -> tuple[np.ndarray, np.ndarray]:
        X = np.vstack([self.dev_goods, self.dev_bads])
        y = np.concatenate([np.ones(len(self.dev_goods)), np.zeros(len(self.dev_bads))])
        return X, y


def check_one_hot(rows: np.ndarray, layout: ScorecardLayout, first_line: int = 2) -> None:
    imap = build_index_map(layout)
    for c, (lo, hi) in enumerate(zip(imap.low, imap.high)):
        sums = rows[:, lo - 1 : hi].sum(axis=1)
        bad = np.flatnonzero(sums != 1)
        if bad.size:
            name = layout.characteristics[c].name
            raise DataFormatError(
                f"line {first_line + bad[0]}: characteristic {name} has "
                f"{sums[bad[0]]:g} indicators set; exactly one required"
            )


def read_dataset(path: str | Path, layout: ScorecardLayout) -> Dataset:
    path = Path(path)
    columns = layout.column_names()
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataFormatError(f"data file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file")
        header = [h.strip() for h in header]
        lead = ["split_key", "outcome"]
        weighted = len(header) > 2 and header[2] == "weight"
        expected = lead + (["weight"] if weighted else []) + columns
        if header != expected:
            raise DataFormatError(
                f"{path}: header does not match layout (expected split_key, outcome, "
                f"[weight], then {len(columns)} indicator columns v<c>_<a>)"
            )
        values = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(expected):
                raise DataFormatError(f"line {lineno}: expected {len(expected)} fields, got {len(rec)}")
            try:
                values.append([float(v) for v in rec])
            except ValueError as exc:
                raise DataFormatError(f"line {lineno}: {exc}") from None
    arr = np.asarray(values, dtype=float).reshape(-1, len(expected))
    off = 3 if weighted else 2
    rows = arr[:, off:]
    outcome = arr[:, 1]
    if not np.all(np.isin(outcome, (0.0, 1.0))):
        line = 2 + int(np.flatnonzero(~np.isin(outcome, (0.0, 1.0)))[0])
        raise DataFormatError(f"line {line}: outcome must be 0 or 1")
    if not np.all(np.isin(rows, (0.0, 1.0))):
        line = 2 + int(np.flatnonzero(~np.all(np.isin(rows, (0.0, 1.0)), axis=1))[0])
        raise DataFormatError(f"line {line}: indicator values must be 0 or 1")
    check_one_hot(rows, layout)
    return Dataset(
        rows=rows.astype(np.int8),
        outcome=outcome.astype(int),
        split_key=arr[:, 0].astype(int),
        weights=arr[:, 2].copy() if weighted else None,
    )


def write_dataset(ds: Dataset, layout: ScorecardLayout, path: str | Path) -> None:
    header = ["split_key", "outcome"] + (["weight"] if ds.weights is not None else [])
    header += layout.column_names()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.rows.shape[0]):
            lead = [int(ds.split_key[i]), int(ds.outcome[i])]
            if ds.weights is not None:
                lead.append(repr(float(ds.weights[i])))
            w.writerow(lead + ds.rows[i].astype(int).tolist())


def split_dataset(ds: Dataset, split_keys: Iterable[int]) -> Partition:
    val = np.isin(ds.split_key, list(split_keys))
    parts = {}
    for tag, mask in (("dev", ~val), ("val", val)):
        for cls, label in (("good", 1), ("bad", 0)):
            sel = mask & (ds.outcome == label)
            parts[f"{tag}_{cls}s"] = ds.rows[sel].astype(float)
            if ds.weights is not None:
                parts[f"{tag}_{cls}_w"] = ds.weights[sel]
    if parts["dev_goods"].shape[0] == 0 or parts["dev_bads"].shape[0] == 0:
        raise DataFormatError("development sample has an empty class")
    return Partition(**parts)


def load_dataset(path, layout: ScorecardLayout, split_keys: Iterable[int] = ()) -> Partition:
    return split_dataset(read_dataset(path, layout), split_keys)


# ----------------------------------------------------------------------------
# synthetic data


def _default_log_odds(layout: ScorecardLayout, rng: np.random.Generator) -> np.ndarray:
    out = []
    for size in layout.sizes:
        if size == 1:
            out.append(np.zeros(1))
            continue
        trend = rng.choice((-1.0, 1.0)) * np.linspace(-1.0, 1.0, size - 1)
        trend = trend + 0.25 * rng.normal(size=size - 1)
        out.append(np.append(trend, 0.0))
    return np.concatenate(out)


def pattern_log_odds(layout: ScorecardLayout, spec: EngineeringSpec, seed: int) -> np.ndarray:
    """Per-attribute good/bad log-odds directions that respect the pattern orderings.

    Random normal values are swapped pairwise until no pattern is violated,
    which sorts every pattern chain without flattening it. Equalities are then
    averaged and fixed or no-inform weights zeroed.
    """
    rng = np.random.default_rng(seed)
    z = rng.normal(size=layout.p)
    pairs = []
    for pat in spec.patterns:
        hi, lo = (pat.j, pat.k) if pat.sense == GE else (pat.k, pat.j)
        pairs.append((hi - 1, lo - 1))
    for _ in range(10 * len(pairs) + 1):
        swapped = False
        for hi, lo in pairs:
            if z[hi] < z[lo]:
                z[hi], z[lo] = z[lo], z[hi]
                swapped = True
        if not swapped:
            break
    for i, j in spec.equalities:
        z[i - 1] = z[j - 1] = 0.5 * (z[i - 1] + z[j - 1])
    for t in spec.fixes:
        z[t - 1] = 0.0
    if spec.noinform:
        z[np.array(build_index_map(layout).high) - 1] = 0.0
    return z


def generate_synthetic(
    layout: ScorecardLayout,
    seed: int,
    n_good: int,
    n_bad: int,
    separation: float,
    log_odds: Sequence[float] | None = None,
    n_keys: int = 10,
) -> Dataset:
    """Random one-hot indicator data with class separation ``separation``.

    Each characteristic draws one attribute per row. Goods and bads share a
    random base distribution tilted by ``exp(+-separation * log_odds / 2)``,
    so ``separation = 0`` gives identical class distributions.
    """
    if n_good < 2 or n_bad < 2:
        raise SpecError("need at least 2 goods and 2 bads")
    rng = np.random.default_rng(seed)
    z = _default_log_odds(layout, rng) if log_odds is None else np.asarray(log_odds, float)
    if z.shape != (layout.p,):
        raise SpecError(f"log_odds must have length {layout.p}")
    imap = build_index_map(layout)
    n = n_good + n_bad
    rows = np.zeros((n, layout.p), dtype=np.int8)
    for lo, hi in zip(imap.low, imap.high):
        size = hi - lo + 1
        base = rng.normal(0.0, 0.5, size)
        base[-1] -= 1.5  # no-inform slot is rarer
        zc = z[lo - 1 : hi]
        for start, count, sign in ((0, n_good, 1.0), (n_good, n_bad, -1.0)):
            logits = base + sign * 0.5 * separation * zc
            prob = np.exp(logits - logits.max())
            prob = 0.97 * prob / prob.sum() + 0.03 / size
            pick = np.searchsorted(np.cumsum(prob), rng.random(count) * prob.sum())
            pick = np.minimum(pick, size - 1)
            rows[np.arange(start, start + count), lo - 1 + pick] = 1
    outcome = np.concatenate([np.ones(n_good, int), np.zeros(n_bad, int)])
    split_key = rng.integers(0, n_keys, n)
    order = rng.permutation(n)
    return Dataset(rows=rows[order], outcome=outcome[order], split_key=split_key[order])


# ----------------------------------------------------------------------------
# reports


REPORT_HEAD = ["Char", "Attribute", "Att. #", "Constraint"]
DEV_ROW = "Development Divergence"
VAL_ROW = "Validation Divergence"


def constraint_notes(spec: EngineeringSpec | None, layout: ScorecardLayout) -> list[str]:
    """Per-attribute constraint annotations in scorecard style (``= 0``, ``> 3``)."""
    notes: list[list[str]] = [[] for _ in range(layout.p)]
    if spec is None:
        return [""] * layout.p
    fixed = set(spec.fixes)
    if spec.noinform:
        fixed |= set(build_index_map(layout).high)
    for t in sorted(fixed):
        notes[t - 1].append("= 0")
    for iw in spec.inweights:
        notes[iw.index - 1].append(f"= {iw.value:g}")
    for i, j in spec.equalities:
        notes[j - 1].append(f"= {i}")
    for pat in spec.patterns:
        notes[pat.j - 1].append(f"{'>' if pat.sense == GE else '<'} {pat.k}")
    return [" & ".join(n) for n in notes]


def _fmt(v: float | None) -> str:
    if v is None or math.isnan(v):
        return ""
    text = f"{v:.3f}"
    return "0.000" if text == "-0.000" else text


def write_report(
    solutions: Sequence[ScorecardSolution],
    layout: ScorecardLayout,
    path: str | Path,
    spec: EngineeringSpec | None = None,
    labels: Sequence[str] | None = None,
) -> None:
    """Delimited scorecard table: one row per attribute, one column per solution."""
    p = layout.p
    for sol in solutions:
        if sol.S.shape[0] != p:
            raise SpecError(f"solution {sol.problem!r} has {sol.S.shape[0]} weights, layout has {p}")
    labels = list(labels) if labels is not None else [s.problem for s in solutions]
    if len(labels) != len(solutions):
        raise SpecError("one label per solution required")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEAD + labels)
        if not solutions:
            return
        notes = constraint_notes(spec, layout)
        t = 0
        for char in layout.characteristics:
            for label in char.attribute_labels:
                w.writerow(
                    [char.name, label, t + 1, notes[t]] + [_fmt(float(s.S[t])) for s in solutions]
                )
                t += 1
        w.writerow([DEV_ROW, "", "", ""] + [_fmt(s.div_dev) for s in solutions])
        w.writerow([VAL_ROW, "", "", ""] + [_fmt(s.div_val) for s in solutions])


def read_report(path: str | Path) -> tuple[list[str], np.ndarray, dict[str, list[float | None]]]:
    """Parse a report back into (labels, p x k weight matrix, footer rows)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    labels = rows[0][len(REPORT_HEAD):]
    body = [r for r in rows[1:] if r[0] not in (DEV_ROW, VAL_ROW)]
    weights = np.array([[float(v) for v in r[len(REPORT_HEAD):]] for r in body]).reshape(
        len(body), len(labels)
    )
    footers = {
        r[0]: [float(v) if v else None for v in r[len(REPORT_HEAD):]]
        for r in rows[1:]
        if r[0] in (DEV_ROW, VAL_ROW)
    }
    return labels, weights, footers


# ----------------------------------------------------------------------------
# machine-readable solution files

_META_KEYS = (
    "problem",
    "beta",
    "phi_star",
    "lambda",
    "delta",
    "intercept",
    "woe_factor",
    "div_dev",
    "div_val",
    "div_floor",
)


@dataclass
class StoredSolution:
    problem: str
    S: np.ndarray
    meta: dict[str, float | None]


def write_solution(sol: ScorecardSolution, path: str | Path, div_floor: float | None = None) -> None:
    meta = {
        "problem": sol.problem,
        "beta": sol.beta,
        "phi_star": sol.phi_star,
        "lambda": sol.lam,
        "delta": sol.delta,
        "intercept": sol.intercept,
        "woe_factor": sol.woe_factor,
        "div_dev": sol.div_dev,
        "div_val": sol.div_val,
        "div_floor": div_floor,
    }
    lines = ["# scorecard weights", f"schema_version = {SCHEMA_VERSION}"]
    for key in _META_KEYS:
        value = meta[key]
        if isinstance(value, str):
            lines.append(f"{key} = {value}")
        else:
            lines.append(f"{key} = {'' if value is None else repr(float(value))}")
    lines.append("[weights]")
    lines.extend(f"{t} {float(v)!r}" for t, v in enumerate(sol.S, start=1))
    Path(path).write_text("\n".join(lines) + "\n")


def read_solution(path: str | Path) -> StoredSolution:
    meta: dict[str, float | None] = {}
    weights: list[tuple[int, float]] = []
    problem = None
    in_weights = False
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise DataFormatError(f"solution file not found: {path}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line == "[weights]":
            in_weights = True
            continue
        try:
            if in_weights:
                idx, val = line.split()
                weights.append((int(idx), float(val)))
            else:
                key, _, val = (s.strip() for s in line.partition("="))
                if key == "problem":
                    problem = val
                elif key == "schema_version":
                    if int(val) != SCHEMA_VERSION:
                        raise DataFormatError(f"unsupported solution schema {val}")
                else:
                    meta[key] = float(val) if val else None
        except ValueError:
            raise DataFormatError(f"{path}, line {lineno}: cannot parse {line!r}") from None
    if problem is None:
        raise DataFormatError(f"{path}: missing problem name")
    idx = [i for i, _ in weights]
    if idx != list(range(1, len(idx) + 1)):
        raise DataFormatError(f"{path}: weight indices must run 1..p in order")
    return StoredSolution(problem, np.array([v for _, v in weights]), meta)
