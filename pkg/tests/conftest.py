import numpy as np
import pytest

from scorecard_qp import build_index_map, compute_moments
from scorecard_qp import dataio

FRAUD_SIZES = [7, 7, 7, 13, 8, 11, 4, 7, 4, 3, 7, 7, 4, 8, 4, 6, 5, 5, 3, 4, 16, 5, 6, 10, 10]


@pytest.fixture(scope="session")
def fraud_config():
    return dataio.load_config("builtin:fraud_case")


@pytest.fixture(scope="session")
def fraud_data(fraud_config):
    """Full-scale synthetic instance on the fraud layout (14000 rows, 3 held-out keys)."""
    cfg = fraud_config
    synth = cfg.synth
    ds = dataio.generate_synthetic(
        cfg.layout,
        synth["seed"],
        synth["n_good"],
        synth["n_bad"],
        synth["separation"],
        log_odds=synth["log_odds"],
    )
    part = dataio.split_dataset(ds, cfg.split_keys)
    M = compute_moments(part.dev_goods, part.dev_bads)
    M_val = compute_moments(part.val_goods, part.val_bads)
    from scorecard_qp import assemble

    CS = assemble(cfg.spec, M, build_index_map(cfg.layout))
    return part, M, M_val, CS


def random_moments(rng, n_good=200, n_bad=150, sizes=(3, 4, 3), shift=0.8):
    """Moments of random one-hot data with a class-dependent tilt."""
    from scorecard_qp import ScorecardLayout

    layout = ScorecardLayout.from_sizes(list(sizes))
    z = rng.normal(size=layout.p)
    ds = dataio.generate_synthetic(layout, int(rng.integers(1 << 30)), n_good, n_bad, shift, log_odds=z)
    goods = ds.rows[ds.outcome == 1].astype(float)
    bads = ds.rows[ds.outcome == 0].astype(float)
    return layout, compute_moments(goods, bads)


ACCEPTANCE_RESULTS: dict[int, str] = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE_RESULTS[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[number])
