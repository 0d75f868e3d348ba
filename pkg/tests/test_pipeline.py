"""Pipeline tests: tiling geometry, merge coverage, routing, FLOPs report."""
import numpy as np
import pytest

from anysr import dispatch as dp
from anysr import pipeline as pl
from anysr import supernet as sn
from anysr.resample import cubic_kernel, resize_bicubic

CFG = sn.SupernetConfig()


# ------------------------------------------------------------------- split

def test_split_64_64_nonoverlapping():
    img = np.random.default_rng(0).uniform(0, 255, (3, 64, 64))
    grid, patches = pl.split(img, patch=32, stride=32)
    assert grid.origins == [(0, 0), (0, 32), (32, 0), (32, 32)]
    assert patches.shape == (4, 3, 32, 32)
    np.testing.assert_array_equal(patches[3], img[:, 32:, 32:])


def test_split_50_50_clamps_final_origins():
    img = np.zeros((3, 50, 50))
    grid, patches = pl.split(img, patch=32, stride=32)
    assert grid.origins == [(0, 0), (0, 18), (18, 0), (18, 18)]
    assert patches.shape == (4, 3, 32, 32)


def test_split_single_patch():
    img = np.zeros((3, 32, 32))
    grid, patches = pl.split(img, patch=32, stride=32)
    assert grid.origins == [(0, 0)]


def test_split_too_small_errors():
    with pytest.raises(pl.TilingError):
        pl.split(np.zeros((3, 16, 40)), patch=32, stride=32)


def test_split_overlapping_covers_everything():
    img = np.zeros((3, 70, 45))
    grid, _ = pl.split(img, patch=32, stride=16)
    cover = np.zeros((70, 45), dtype=int)
    for y, x in grid.origins:
        cover[y:y + 32, x:x + 32] += 1
    assert cover.min() >= 1


# ------------------------------------------------------------------- merge

def test_merge_reassembles_identity():
    img = np.random.default_rng(1).uniform(0, 255, (3, 50, 50))
    for stride in (32, 16):
        grid, patches = pl.split(img, patch=32, stride=stride)
        out = pl.merge(grid, patches, scale=1)
        np.testing.assert_allclose(out, img, atol=1e-9)


def test_merge_overlap_weights_sum_to_one():
    # merging all-ones patches must give exactly ones everywhere
    grid, patches = pl.split(np.zeros((3, 70, 45)), patch=32, stride=16)
    out = pl.merge(grid, np.ones_like(patches), scale=1)
    np.testing.assert_allclose(out, 1.0)


def test_merge_at_scale_4_geometry():
    img = np.random.default_rng(2).uniform(0, 255, (3, 50, 50))
    grid, patches = pl.split(img, patch=32, stride=32)
    sr = np.stack([np.kron(p, np.ones((1, 4, 4))) for p in patches])
    out = pl.merge(grid, sr, scale=4)
    assert out.shape == (3, 200, 200)


# --------------------------------------------------------------- interp

def test_interp_constant_patch():
    out = pl.interp_upscale(np.full((3, 8, 8), 133.0), scale=4)
    np.testing.assert_allclose(out, 133.0, atol=1e-9)
    assert out.shape == (3, 32, 32)


def test_interp_clamped_to_pixel_range():
    rng = np.random.default_rng(3)
    patch = rng.choice([0.0, 255.0], size=(3, 8, 8))
    out = pl.interp_upscale(patch, scale=4)
    assert out.min() >= 0.0 and out.max() <= 255.0


def _interp_loop_oracle(patch, scale):
    """Separable Catmull-Rom resize with replicate borders, per axis."""
    def axis_resize(x, n_out):
        n_in = x.shape[-1]
        ratio = n_in / n_out
        out = np.zeros(x.shape[:-1] + (n_out,))
        for o in range(n_out):
            center = (o + 0.5) * ratio - 0.5
            lo = int(np.floor(center)) - 1
            taps = np.arange(lo, lo + 4)
            w = cubic_kernel(center - taps)
            w /= w.sum()
            src = np.clip(taps, 0, n_in - 1)
            out[..., o] = (x[..., src] * w).sum(axis=-1)
        return out

    up_w = axis_resize(patch, patch.shape[2] * scale)
    up = axis_resize(up_w.swapaxes(1, 2), patch.shape[1] * scale)
    return up.swapaxes(1, 2)


def test_interp_matches_separable_loop_oracle():
    rng = np.random.default_rng(4)
    patch = rng.uniform(20, 235, (3, 6, 5))
    got = pl.interp_upscale(patch, scale=4)
    want = _interp_loop_oracle(patch, 4)
    np.testing.assert_allclose(got, np.clip(want, 0, 255), rtol=1e-9,
                               atol=1e-9)


# ---------------------------------------------------------------- sr_image

def _session(seed=0, p=8):
    store = sn.build(CFG, seed=seed)
    rng = np.random.default_rng(seed)
    patches = []
    for _ in range(30):
        hr = rng.uniform(0, 255, (3, 4 * p, 4 * p)) * rng.uniform(0.05, 1)
        patches.append((resize_bicubic(hr, p, p), hr))
    tables = dp.build_tables(store, CFG.widths, patches, bins=10)
    costs = dp.branch_costs(CFG, (p, p))
    return store, tables, costs


def test_sr_image_geometry_and_counts():
    store, tables, costs = _session()
    img = np.random.default_rng(5).uniform(0, 255, (3, 20, 12))
    out, report = pl.sr_image(img, store, tables, costs, eta=0.02, patch=8)
    assert out.shape == (3, 80, 48)
    assert sum(report.branch_counts) == report.total_patches
    assert report.total_patches == len(report.routing)


def test_sr_image_eta_zero_is_tiled_bicubic():
    store, tables, costs = _session()
    img = np.random.default_rng(6).uniform(0, 255, (3, 16, 16))
    out, report = pl.sr_image(img, store, tables, costs, eta=0.0, patch=8)
    assert report.branch_counts[0] == report.total_patches
    grid, patches = pl.split(img, patch=8, stride=8)
    want = pl.merge(grid, np.stack([pl.interp_upscale(p, 4)
                                    for p in patches]), scale=4)
    np.testing.assert_allclose(out, want, atol=1e-9)


def test_sr_image_single_patch_equals_direct_branch_forward():
    store, tables, costs = _session()
    img = np.random.default_rng(7).uniform(0, 255, (3, 8, 8))
    for branch in range(4):
        out, report = pl.sr_image(img, store, tables, costs, eta=0.02,
                                  patch=8, force_branch=branch)
        if branch == 0:
            want = pl.interp_upscale(img, 4)
        else:
            want = np.clip(sn.forward(store, CFG.widths[branch - 1],
                                      img.astype(np.float32)), 0, 255)
        np.testing.assert_allclose(out, want, atol=1e-5)


def test_sr_image_routing_deterministic():
    store, tables, costs = _session()
    img = np.random.default_rng(8).uniform(0, 255, (3, 24, 24))
    a = pl.sr_image(img, store, tables, costs, eta=0.02, patch=8)
    b = pl.sr_image(img, store, tables, costs, eta=0.02, patch=8)
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1].routing == b[1].routing


# ------------------------------------------------------------------- flops

def test_avg_flops_all_full_width():
    costs = dp.CostSet((0.001, 0.3, 0.5, 1.0))
    full = 1_000_000
    assert pl.avg_flops_of_counts([0, 0, 0, 10], costs, full) == full


def test_avg_flops_even_split_arithmetic():
    costs = dp.CostSet((0.001, 0.5, 0.75, 1.0))
    got = pl.avg_flops_of_counts([0, 5, 0, 5], costs, 1000)
    assert got == pytest.approx(750.0)


def test_avg_flops_matches_per_patch_oracle():
    rng = np.random.default_rng(9)
    costs = dp.CostSet((0.001, 0.3, 0.5, 1.0))
    full = 467_877_888
    routing = rng.integers(0, 4, 57)
    counts = np.bincount(routing, minlength=4)
    want = sum(costs.values[j] * full for j in routing) / len(routing)
    assert pl.avg_flops_of_counts(counts, costs, full) == pytest.approx(want)
