"""Metrics tests: PSNR, Spearman rank correlation, evaluation sweep rows."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anysr import dispatch as dp
from anysr import metrics as mt
from anysr import supernet as sn
from anysr.resample import resize_bicubic

CFG = sn.SupernetConfig()


# -------------------------------------------------------------------- psnr

def test_psnr_identical_capped():
    x = np.random.default_rng(0).uniform(0, 255, (3, 8, 8))
    assert mt.psnr(x, x) == mt.PSNR_CAP_DB


def test_psnr_full_range_error_is_zero_db():
    a = np.zeros((3, 4, 4))
    b = np.full((3, 4, 4), 255.0)
    assert mt.psnr(a, b) == pytest.approx(0.0)


def test_psnr_uniform_error_16_hand_value():
    a = np.zeros((3, 4, 4))
    b = np.full((3, 4, 4), 16.0)
    assert mt.psnr(a, b) == pytest.approx(10 * np.log10(255 ** 2 / 256), abs=1e-9)


def test_psnr_symmetry_and_noise_mononicity():
    rng = np.random.default_rng(1)
    a = rng.uniform(0, 255, (3, 16, 16))
    b = np.clip(a + rng.normal(0, 4, a.shape), 0, 255)
    c = np.clip(a + rng.normal(0, 16, a.shape), 0, 255)
    assert mt.psnr(a, b) == mt.psnr(b, a)
    assert mt.psnr(a, b) > mt.psnr(a, c)


def test_psnr_dim_mismatch_errors():
    with pytest.raises(ValueError):
        mt.psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


# ---------------------------------------------------------------- spearman

def test_spearman_perfect_and_reversed():
    xs = [1.0, 2.0, 5.0, 9.0]
    assert mt.spearman(xs, xs) == pytest.approx(1.0)
    assert mt.spearman(xs, [-x for x in xs]) == pytest.approx(-1.0)


def test_spearman_monotone_transform_invariant():
    rng = np.random.default_rng(2)
    xs = rng.uniform(0, 10, 50)
    assert mt.spearman(xs, np.exp(xs / 3)) == pytest.approx(1.0)


def test_spearman_hand_computed_with_tie():
    xs = [1.0, 2.0, 3.0, 4.0, 5.0]
    ys = [10.0, 20.0, 20.0, 40.0, 50.0]
    # ranks of ys: 1, 2.5, 2.5, 4, 5 (average-rank ties); Pearson of
    # (1..5) against those ranks computed by hand:
    rx = np.array([1, 2, 3, 4, 5], dtype=float)
    ry = np.array([1, 2.5, 2.5, 4, 5])
    want = (np.mean(rx * ry) - rx.mean() * ry.mean()) / (rx.std() * ry.std())
    assert mt.spearman(xs, ys) == pytest.approx(want)
    assert mt.spearman(xs, ys) == pytest.approx(0.9746794, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=20, unique=True))
def test_spearman_bounds(xs):
    rng = np.random.default_rng(0)
    ys = rng.uniform(-1, 1, len(xs))
    if np.ptp(ys) == 0:
        return
    rho = mt.spearman(xs, ys)
    assert -1.0 - 1e-9 <= rho <= 1.0 + 1e-9


# ---------------------------------------------------------------- evaluate

def _session(seed=0, p=8):
    store = sn.build(CFG, seed=seed)
    rng = np.random.default_rng(seed)
    patches = []
    for _ in range(30):
        hr = rng.uniform(0, 255, (3, 4 * p, 4 * p)) * rng.uniform(0.05, 1)
        patches.append((resize_bicubic(hr, p, p), hr))
    tables = dp.build_tables(store, CFG.widths, patches, bins=8)
    costs = dp.branch_costs(CFG, (p, p))
    return store, tables, costs


def _pairs(seed=3, n=2, size=16):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        hr = rng.uniform(0, 255, (3, 4 * size, 4 * size))
        pairs.append((resize_bicubic(hr, size, size), hr))
    return pairs


def test_evaluate_row_per_eta_and_schema():
    store, tables, costs = _session()
    rows = mt.evaluate(_pairs(), store, tables, costs,
                       etas=[0.0, 0.01, 100.0], patch=8, stride=8)
    assert [r.eta for r in rows] == [0.0, 0.01, 100.0]
    csv = mt.rows_to_csv(rows)
    lines = csv.strip().split("\n")
    assert lines[0] == "eta,mean_psnr_db,mean_flops,frac_branch0," \
                       "frac_branch1,frac_branch2,frac_branch3"
    assert len(lines) == 4
    for r in rows:
        assert sum(r.branch_fractions) == pytest.approx(1.0)


def test_evaluate_eta_zero_is_all_interpolation():
    store, tables, costs = _session()
    rows = mt.evaluate(_pairs(), store, tables, costs, etas=[0.0],
                       patch=8, stride=8)
    assert rows[0].branch_fractions[0] == 1.0
    full = sn.flops(CFG, 1.0, (8, 8))
    assert rows[0].mean_flops == pytest.approx(costs.values[0] * full)


def test_evaluate_large_eta_flops_bounded_by_full():
    store, tables, costs = _session()
    rows = mt.evaluate(_pairs(), store, tables, costs, etas=[1e6],
                       patch=8, stride=8)
    assert rows[0].mean_flops <= sn.flops(CFG, 1.0, (8, 8))


def test_evaluate_reproducible():
    store, tables, costs = _session()
    a = mt.rows_to_csv(mt.evaluate(_pairs(), store, tables, costs,
                                   etas=[0.0, 0.02], patch=8, stride=8))
    b = mt.rows_to_csv(mt.evaluate(_pairs(), store, tables, costs,
                                   etas=[0.0, 0.02], patch=8, stride=8))
    assert a == b


def test_evaluate_dim_mismatch_errors():
    store, tables, costs = _session()
    bad = [(np.zeros((3, 8, 8)), np.zeros((3, 30, 32)))]
    with pytest.raises(ValueError):
        mt.evaluate(bad, store, tables, costs, etas=[0.0], patch=8, stride=8)
