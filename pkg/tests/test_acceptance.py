"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line."""

import time

import numpy as np
import pytest

from scorecard_qp import (
    ConstraintSet,
    RangeTargets,
    assemble,
    build_index_map,
    compute_moments,
    kkt_residuals,
    solve_classic,
    solve_inweight,
    solve_penalized,
    solve_qp,
    solve_range,
    solve_regression,
)
from scorecard_qp import dataio
from scorecard_qp.cli import run_cli

from conftest import record_criterion
from qp_cases import grid_minimum, kkt_linear_solve, pattern_box_qp, random_qp


def woe_ratio(S, M):
    return abs(S @ M.C @ S - M.d @ S) / max(1.0, abs(M.d @ S))


def check(number, passed, detail):
    record_criterion(number, passed, detail)
    assert passed, detail


def test_criterion_01_qp_kernel():
    worst_kkt, worst_rel, n_eq, failures = 0.0, 0.0, 0, 0
    start = time.perf_counter()
    for seed in range(100):
        kind = "equality" if seed % 4 == 0 else "mixed"
        prob = random_qp(1000 + seed, kind)
        sol = solve_qp(prob)
        if not sol.ok:
            failures += 1
            continue
        worst_kkt = max(worst_kkt, kkt_residuals(prob, sol).worst())
        if kind == "equality":
            n_eq += 1
            x = kkt_linear_solve(prob)
            worst_rel = max(worst_rel, np.linalg.norm(sol.x - x) / max(1.0, np.linalg.norm(x)))
    elapsed = time.perf_counter() - start
    ok = failures == 0 and worst_kkt <= 1e-6 and worst_rel <= 1e-8 and elapsed < 5.0
    check(1, ok, f"100 QPs, {failures} failed, max KKT {worst_kkt:.1e}, "
                 f"{n_eq} equality-only max rel err {worst_rel:.1e}, {elapsed:.2f} s")


def test_criterion_02_brute_force():
    worst = -np.inf
    for seed in range(20):
        prob = pattern_box_qp(2000 + seed)
        sol = solve_qp(prob)
        assert sol.ok
        worst = max(worst, sol.objective - grid_minimum(prob, 100))
    check(2, worst <= 1e-6, f"20 p=3 instances, max(solver - grid best) = {worst:.2e}")


def test_criterion_03_delta_invariance(fraud_data):
    _, M, _, CS = fraud_data
    CS0 = CS.without_inweights()
    shapes = (CS0.Ac.shape, CS0.Ap.shape)
    S = {d: solve_classic(M, CS0, d).S for d in (0.5, 1.753, 3.0)}
    gap = max(np.abs(S[d] - S[1.753]).max() for d in S)
    ok = gap <= 1e-6 and shapes == ((59, 171), (106, 171))
    check(3, ok, f"p=171, Ac {shapes[0]}, Ap {shapes[1]}, max |S(delta) - S(1.753)| = {gap:.1e}")


@pytest.fixture(scope="module")
def fraud_solutions(fraud_data, fraud_config):
    _, M, M_val, CS = fraud_data
    CS0 = CS.without_inweights()
    cfg = fraud_config
    out = {
        "classic": solve_classic(M, CS0, cfg.delta, M_val=M_val),
        "penalized": solve_penalized(M, CS0, cfg.delta, cfg.lam, M_val=M_val),
        "inweight": solve_inweight(M, CS, cfg.lam, cfg.phi_bracket, M_val=M_val),
    }
    out["range"] = solve_range(M, CS, cfg.lam, cfg.range_targets, cfg.div_floor,
                               cfg.phi_bracket, M_val=M_val, x0=out["inweight"].S)
    return out


def test_criterion_04_woe_identity(fraud_data, fraud_solutions):
    M = fraud_data[1]
    ratios = {k: woe_ratio(s.S, M) for k, s in fraud_solutions.items()}
    worst = max(ratios.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in ratios.items())
    check(4, worst <= 1e-6, f"|S'CS - d'S| / max(1, |d'S|): {detail}")


def test_criterion_05_penalized(fraud_data, fraud_solutions):
    _, M, _, CS = fraud_data
    classic = fraud_solutions["classic"]
    tiny = solve_penalized(M, CS.without_inweights(), 1.753, 1e-8)
    gap = np.abs(tiny.S - classic.S).max()
    pen = fraud_solutions["penalized"]
    ok = gap <= 1e-4 and pen.div_dev <= classic.div_dev
    check(5, ok, f"|S(1e-8) - S_classic| = {gap:.1e}; dev div {pen.div_dev:.6f} (lambda .095) "
                 f"<= {classic.div_dev:.6f} (classic)")


def test_criterion_06_inweighting(fraud_data, fraud_solutions):
    _, M, _, CS = fraud_data
    sol = fraud_solutions["inweight"]
    classic = fraud_solutions["classic"]
    iw_err = np.abs(CS.Ai @ sol.S - CS.IW).max()
    g_ratio = woe_ratio(sol.S, M)
    empty = solve_inweight(M, CS.without_inweights(), 0.0)
    gap = np.abs(empty.S - classic.S).max()
    ok = iw_err <= 1e-9 and g_ratio <= 1e-3 and gap <= 1e-5 and sol.div_dev <= classic.div_dev
    check(6, ok, f"|Ai S - IW| = {iw_err:.1e}, |g|/scale = {g_ratio:.1e} at phi* = "
                 f"{sol.phi_star:.4f}, empty-IW vs classic {gap:.1e}, dev div "
                 f"{sol.div_dev:.4f} <= {classic.div_dev:.4f}")


def test_criterion_07_range(fraud_data, fraud_solutions, fraud_config):
    _, M, _, CS = fraud_data
    sol = fraud_solutions["range"]
    floor = fraud_config.div_floor
    classic = fraud_solutions["classic"]
    back = solve_range(M, CS.without_inweights(), 0.0, RangeTargets(np.ones(M.p), classic.S),
                       0.5 * classic.div_dev)
    gap = np.abs(back.S - classic.S).max()
    ok = sol.div_dev >= floor - 1e-6 and gap <= 1e-4
    check(7, ok, f"dev div {sol.div_dev:.6f} >= floor {floor} - 1e-6 (phi* = {sol.phi_star:.4g}); "
                 f"T = classic, R = 1 returns within {gap:.1e}")


def ridge_kkt(X, y, Aeq, beq, lam):
    n, p = X.shape
    Xr = np.hstack([np.ones((n, 1)), X])
    Ir = np.eye(p + 1)
    Ir[0, 0] = 0
    Ar = np.hstack([np.zeros((Aeq.shape[0], 1)), Aeq])
    m = Ar.shape[0]
    K = np.block([[Xr.T @ Xr + lam / p * Ir, Ar.T], [Ar, np.zeros((m, m))]])
    return np.linalg.solve(K, np.concatenate([Xr.T @ y, beq]))[: p + 1]


def test_criterion_08_regression(fraud_data):
    part, M, _, CS = fraud_data
    X, y = part.dev_xy()
    eq_only = ConstraintSet(CS.Ac, np.zeros((0, M.p)), CS.Ai, CS.IW, CS.lb, CS.ub)
    sol = solve_regression(X, y, eq_only, 0.095)
    ref = ridge_kkt(X, y, np.vstack([CS.Ai, CS.Ac]), np.r_[CS.IW, np.zeros(59)], 0.095)
    closed = np.abs(np.r_[sol.intercept, sol.S] - ref).max()

    base = solve_regression(X, y, CS, 0.095)
    shifted = solve_regression(X, y + 10.0, CS, 0.095)
    shift_s0 = abs(shifted.intercept - base.intercept - 10.0)
    shift_s = np.abs(shifted.S - base.S).max()

    const = solve_regression(X, np.full(len(y), 0.37), CS.without_inweights(), 0.095)
    const_err = max(abs(const.intercept - 0.37), np.abs(const.S).max())
    ok = closed <= 1e-8 and shift_s0 <= 1e-8 and shift_s <= 1e-8 and const_err <= 1e-8
    check(8, ok, f"closed-form gap {closed:.1e}; y+10 moves S0 by 10 +- {shift_s0:.1e}, "
                 f"S by {shift_s:.1e}; constant y error {const_err:.1e}")


def test_criterion_09_performance(tmp_path, fraud_config):
    cfg = fraud_config
    s = cfg.synth
    ds = dataio.generate_synthetic(cfg.layout, s["seed"], s["n_good"], s["n_bad"],
                                   s["separation"], log_odds=s["log_odds"])
    path = tmp_path / "fraud.csv"
    dataio.write_dataset(ds, cfg.layout, path)

    start = time.perf_counter()
    part = dataio.load_dataset(path, cfg.layout, cfg.split_keys)
    M = compute_moments(part.dev_goods, part.dev_bads)
    CS = assemble(cfg.spec, M, build_index_map(cfg.layout))
    classic = solve_classic(M, CS.without_inweights(), cfg.delta)
    t_classic = time.perf_counter() - start
    inw = solve_inweight(M, CS, cfg.lam, cfg.phi_bracket, x0=classic.S)
    elapsed = time.perf_counter() - start
    n_eq = CS.Ai.shape[0] + CS.Ac.shape[0]
    ok = elapsed < 10.0 and n_eq == 61 and CS.Ap.shape[0] == 106
    check(9, ok, f"load + moments + classic {t_classic:.2f} s; + in-weighted root search "
                 f"({n_eq} equality rows, {CS.Ap.shape[0]} inequalities, "
                 f"{len(inw.trace)} QPs) total {elapsed:.2f} s")


def test_criterion_10_fixture_shapes(fraud_config, capsys):
    cfg = fraud_config
    CS = assemble(cfg.spec, np.ones(cfg.layout.p), build_index_map(cfg.layout))
    shapes_ok = CS.shapes() == {"Ac": (59, 171), "Ap": (106, 171), "Ai": (2, 171)}
    iw_ok = np.array_equal(CS.IW, [0.5, 0.3])
    code = run_cli(["check", "--config", "builtin:fraud_case"])
    lines = capsys.readouterr().out.splitlines()
    cli_ok = code == 0 and {"Ac 59x171", "Ap 106x171", "Ai 2x171"} <= set(lines)
    check(10, shapes_ok and iw_ok and cli_ok,
          f"Ac {CS.Ac.shape}, Ap {CS.Ap.shape}, Ai {CS.Ai.shape}, IW {CS.IW.tolist()}; "
          f"check printed {[l for l in lines if 'x171' in l]}")


def test_criterion_11_pipeline(tmp_path, capsys):
    data = tmp_path / "fraud.csv"
    out = tmp_path / "out"
    codes = {"synth": run_cli(["synth", "--config", "builtin:fraud_case", "--out", str(data)])}
    codes["solve"] = run_cli(["solve", "--config", "builtin:fraud_case", "--data", str(data),
                              "--out", str(out), "--problem", "all"])
    for name in ("classic", "penalized", "inweight", "range", "regression"):
        codes[f"kkt {name}"] = run_cli(["kkt", "--config", "builtin:fraud_case", "--data",
                                        str(data), "--solution", str(out / f"solution_{name}.txt")])
    text = capsys.readouterr().out
    ok = all(c == 0 for c in codes.values()) and "FAIL" not in text
    check(11, ok, "exit codes " + ", ".join(f"{k}={v}" for k, v in codes.items()))
