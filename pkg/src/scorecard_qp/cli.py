"""Command-line entry point: ``scorecard-qp {solve,synth,check,kkt}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dataio
from .constraints import ConstraintSet, assemble
from .errors import ScorecardError, SpecError
from .layout import build_index_map
from .moments import MomentSet, compute_moments, divergence, woe_gap
from .problems import (
    PROBLEMS,
    ScorecardSolution,
    solve_classic,
    solve_inweight,
    solve_penalized,
    solve_range,
    solve_regression,
    tune_lambda,
)

log = logging.getLogger("scorecard_qp")

EQ_TOL = 1e-7
INWEIGHT_TOL = 1e-9
WOE_TOL = 1e-6
WOE_PROBLEMS = ("classic", "penalized", "inweight", "range")


def _split_keys(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(int(k) for k in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"split keys must be comma-separated integers: {text!r}")


def _problems(text: str) -> list[str]:
    if text == "all":
        return list(PROBLEMS)
    names = [t.strip() for t in text.split(",") if t.strip()]
    bad = [n for n in names if n not in PROBLEMS]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown problem {', '.join(bad) or text!r}; choose from {', '.join(PROBLEMS)} or 'all'"
        )
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scorecard-qp",
        description="Score-engineered scorecard weights by quadratic programming.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p, data=True):
        p.add_argument(
            "--config",
            required=True,
            help="TOML config file, or builtin:fraud_case for the bundled 171-weight layout",
        )
        if data:
            p.add_argument("--data", help="indicator CSV (overrides [data] path in the config)")
            p.add_argument(
                "--split-keys",
                type=_split_keys,
                help="comma-separated split_key values held out for validation",
            )

    solve = sub.add_parser("solve", help="solve one or more problems and write a report")
    common(solve)
    solve.add_argument("--out", required=True, help="output directory")
    solve.add_argument("--problem", type=_problems, help="comma list of problems, or 'all'")
    solve.add_argument("--delta", type=float, help="scale constant for classic/penalized")
    solve.add_argument("--lambda", dest="lam", type=float, help="ridge penalty")
    solve.add_argument("--div-floor", type=float, help="divergence floor for range engineering")

    synth = sub.add_parser("synth", help="write a synthetic indicator dataset")
    common(synth, data=False)
    synth.add_argument("--out", required=True, help="output CSV path")
    synth.add_argument("--seed", type=int)
    synth.add_argument("--n-good", type=int)
    synth.add_argument("--n-bad", type=int)
    synth.add_argument("--separation", type=float)

    check = sub.add_parser("check", help="validate config and data, print constraint shapes")
    common(check)

    kkt = sub.add_parser("kkt", help="re-verify a stored solution against the data")
    common(kkt)
    kkt.add_argument("--solution", required=True, help="solution file written by solve")
    return parser


# ----------------------------------------------------------------------------
# helpers


def _data_path(args, cfg: dataio.RunConfig) -> Path:
    path = Path(args.data) if args.data else cfg.data_path
    if path is None:
        raise SpecError("no data file given; pass --data or set [data] path in the config")
    if not path.is_file():
        raise SpecError(f"data file not found: {path} (set with --data)")
    return path


def _load(args, cfg: dataio.RunConfig):
    keys = args.split_keys if args.split_keys is not None else cfg.split_keys
    part = dataio.load_dataset(_data_path(args, cfg), cfg.layout, keys)
    M = compute_moments(part.dev_goods, part.dev_bads, part.dev_good_w, part.dev_bad_w)
    M_val = None
    if part.has_validation:
        M_val = compute_moments(part.val_goods, part.val_bads, part.val_good_w, part.val_bad_w)
    CS = assemble(cfg.spec, M, build_index_map(cfg.layout))
    return part, M, M_val, CS


def _fmt_shape(shape) -> str:
    return f"{shape[0]}x{shape[1]}"


def verify_solution(
    problem: str,
    S: np.ndarray,
    M: MomentSet,
    CS: ConstraintSet,
    div_floor: float | None = None,
) -> list[tuple[str, float, float, bool]]:
    """Feasibility and WoE checks for stored weights: (name, value, limit, ok) rows."""
    if S.shape[0] != CS.p:
        raise SpecError(f"solution has {S.shape[0]} weights, layout has {CS.p}")
    res = CS.residuals(S)
    out = []

    def add(name, value, limit):
        out.append((name, float(value), float(limit), bool(value <= limit)))

    add("centering/restrictions |Ac S|", np.abs(res["Ac"]).max(initial=0.0), EQ_TOL)
    add("patterns max(Ap S)", max(res["Ap"].max(initial=0.0), 0.0), EQ_TOL)
    if problem != "classic" and problem != "penalized":
        add("in-weights |Ai S - IW|", np.abs(res["Ai"]).max(initial=0.0), INWEIGHT_TOL)
    bound_viol = max(res["lb"].max(initial=0.0), res["ub"].max(initial=0.0), 0.0)
    if np.isfinite(bound_viol):
        add("bounds", bound_viol, EQ_TOL)
    if problem in WOE_PROBLEMS:
        scale = max(1.0, abs(float(M.d @ S)))
        add("WoE |S'CS - d'S| / scale", abs(woe_gap(S, M)) / scale, WOE_TOL)
    if problem == "range" and div_floor is not None:
        add("divergence shortfall", max(div_floor - divergence(S, M), 0.0), WOE_TOL)
    return out


# ----------------------------------------------------------------------------
# subcommands


def _cmd_check(args, cfg) -> int:
    imap = build_index_map(cfg.layout)
    if args.data or cfg.data_path is not None:
        part, M, _, CS = _load(args, cfg)
        print(
            f"data: {len(part.dev_goods)} dev goods, {len(part.dev_bads)} dev bads, "
            f"{len(part.val_goods)} val goods, {len(part.val_bads)} val bads"
        )
    else:
        # shapes only depend on the layout; unit centering weights stand in for data
        CS = assemble(cfg.spec, np.ones(cfg.layout.p), imap)
    print(f"characteristics {len(cfg.layout.characteristics)}, weights p = {cfg.layout.p}")
    for name, shape in CS.shapes().items():
        print(f"{name} {_fmt_shape(shape)}")
    if CS.IW.size:
        print("IW " + ", ".join(f"{v:g}" for v in CS.IW))
    for name in cfg.problems:
        cfg.check_problem(name)
    print("ok")
    return 0


def _cmd_synth(args, cfg) -> int:
    synth = cfg.synth
    seed = args.seed if args.seed is not None else int(synth.get("seed", 0))
    n_good = args.n_good if args.n_good is not None else int(synth.get("n_good", 1000))
    n_bad = args.n_bad if args.n_bad is not None else int(synth.get("n_bad", 1000))
    sep = args.separation if args.separation is not None else float(synth.get("separation", 0.5))
    z = synth.get("log_odds")
    if z is None:
        z = dataio.pattern_log_odds(cfg.layout, cfg.spec, seed)
    ds = dataio.generate_synthetic(cfg.layout, seed, n_good, n_bad, sep, log_odds=z)
    dataio.write_dataset(ds, cfg.layout, args.out)
    print(f"wrote {n_good + n_bad} rows to {args.out}")
    return 0


def _range_floor(args, cfg, base: ScorecardSolution | None) -> float:
    """Explicit floor, or a fraction of the in-weighted solution's divergence."""
    if args.div_floor is not None:
        return args.div_floor
    if cfg.div_floor is not None:
        return cfg.div_floor
    return cfg.div_floor_fraction * base.div_dev


def _cmd_solve(args, cfg) -> int:
    problems = args.problem or cfg.problems
    if args.div_floor is None:
        for name in problems:
            cfg.check_problem(name)
    elif "range" in problems and cfg.range_targets is None:
        raise SpecError("range problem needs a [range] section")
    delta = args.delta if args.delta is not None else cfg.delta
    part, M, M_val, CS = _load(args, cfg)
    CS0 = CS.without_inweights()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    lam = args.lam if args.lam is not None else cfg.lam
    if args.lam is None and cfg.lambda_grid and M_val is not None:
        lam, scores = tune_lambda(M, M_val, CS0, delta, cfg.lambda_grid)
        for l, dv in scores:
            log.info("lambda %g: validation divergence %.6f", l, dv)
        print(f"lambda = {lam:g} (validation grid search)")

    inweighted = None
    solutions: list[ScorecardSolution] = []
    floors: dict[str, float | None] = {}
    warm = None
    for name in problems:
        floor = None
        if name == "classic":
            sol = solve_classic(M, CS0, delta, M_val=M_val, x0=warm)
        elif name == "penalized":
            sol = solve_penalized(M, CS0, delta, lam, M_val=M_val, x0=warm)
        elif name == "inweight":
            sol = solve_inweight(M, CS, lam, cfg.phi_bracket, M_val=M_val, x0=warm)
        elif name == "range":
            if inweighted is None and args.div_floor is None and cfg.div_floor is None:
                inweighted = solve_inweight(M, CS, lam, cfg.phi_bracket, M_val=M_val, x0=warm)
            floor = _range_floor(args, cfg, inweighted)
            sol = solve_range(
                M, CS, lam, cfg.range_targets, floor, cfg.phi_bracket, M_val=M_val, x0=warm
            )
        else:
            X, y = part.dev_xy()
            sol = solve_regression(X, y, CS, lam, M=M, M_val=M_val)
        if name == "inweight":
            inweighted = sol
        if name != "regression":
            warm = sol.S
        floors[name] = floor
        solutions.append(sol)
        dataio.write_solution(sol, out / f"solution_{name}.txt", div_floor=floor)
        val = "" if sol.div_val is None else f", validation divergence {sol.div_val:.3f}"
        extra = "" if sol.phi_star is None else f", phi* = {sol.phi_star:.4g}"
        print(f"{name}: development divergence {sol.div_dev:.3f}{val}{extra}")

    dataio.write_report(solutions, cfg.layout, out / "report.csv", spec=cfg.spec)
    print(f"wrote {out / 'report.csv'}")
    return 0


def _cmd_kkt(args, cfg) -> int:
    stored = dataio.read_solution(args.solution)
    _, M, _, CS = _load(args, cfg)
    rows = verify_solution(stored.problem, stored.S, M, CS, stored.meta.get("div_floor"))
    stored_div = stored.meta.get("div_dev")
    if stored_div is not None:
        diff = abs(divergence(stored.S, M) - stored_div) / max(1.0, abs(stored_div))
        rows.append(("stored divergence mismatch", diff, 1e-9, diff <= 1e-9))
    ok = True
    print(f"problem {stored.problem}")
    for name, value, limit, passed in rows:
        print(f"{'PASS' if passed else 'FAIL'} {name}: {value:.3g} (limit {limit:g})")
        ok &= passed
    return 0 if ok else 1


COMMANDS = {"solve": _cmd_solve, "synth": _cmd_synth, "check": _cmd_check, "kkt": _cmd_kkt}


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = dataio.load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (ScorecardError, OSError) as exc:
        print(f"scorecard-qp {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
