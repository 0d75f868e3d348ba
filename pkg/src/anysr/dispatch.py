"""Edge-score-to-PSNR lookup tables and per-patch branch selection.

Branch indices run 0..M: branch 0 is the interpolation (bicubic) branch,
branches 1..M are the configured subnet widths in increasing order. The
tables map an edge-score bin to each branch's average validation PSNR;
selection maximizes eta * predicted_psnr - normalized_cost.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import supernet
from .edge import EdgeOperator, edge_score
from .metrics import psnr
from .resample import bicubic_flops, resize_bicubic

DEFAULT_BINS = 30


class TablesError(ValueError):
    """Lookup-table construction or (de)serialization failure."""


@dataclass(frozen=True)
class CostSet:
    """Per-branch computation costs normalized by the full-width cost."""

    values: tuple[float, ...]  # index 0 = interpolation branch

    def __post_init__(self):
        v = self.values
        if len(v) < 2:
            raise TablesError("need at least the interpolation branch and one subnet")
        if v[0] < 0 or any(v[i] >= v[i + 1] for i in range(len(v) - 1)):
            raise TablesError(f"costs must be strictly increasing from c0 >= 0: {v}")
        if abs(v[-1] - 1.0) > 1e-9:
            raise TablesError("full-width cost must normalize to 1.0")

    def __len__(self):
        return len(self.values)


@dataclass
class EdgePsnrTables:
    e_min: float
    e_max: float
    bins: int
    values: np.ndarray        # (M+1, K) average PSNR in dB, row 0 = interpolation
    counts: np.ndarray        # (K,) validation patches per bin
    edge_op: str = EdgeOperator.LAPLACIAN.value
    checkpoint_hash: str = ""

    def __post_init__(self):
        if not self.e_min < self.e_max:
            raise TablesError(f"need e_min < e_max, got [{self.e_min}, {self.e_max}]")
        if self.values.shape != (self.values.shape[0], self.bins):
            raise TablesError("table shape inconsistent with bin count")
        if not np.all(np.isfinite(self.values)):
            raise TablesError("non-finite table entries after fill-in")


def branch_costs(config: supernet.SupernetConfig,
                 lr_size: tuple[int, int] = (32, 32)) -> CostSet:
    """Normalized costs: bicubic branch, then each configured width."""
    full = supernet.flops(config, 1.0, lr_size)
    c0 = bicubic_flops(lr_size, config.scale, config.color_channels) / full
    subs = [supernet.flops(config, a, lr_size) / full for a in config.widths]
    return CostSet(tuple([c0] + subs))


def bin_bounds(e_min: float, e_max: float, bins: int, k: int) -> tuple[float, float]:
    """[lo, hi] of the k-th (1-based) equal-width subinterval of [e_min, e_max]."""
    if not 1 <= k <= bins:
        raise TablesError(f"bin index {k} outside 1..{bins}")
    step = (e_max - e_min) / bins
    return (e_min + step * (k - 1), e_min + step * k)


def bin_index(e: float, tables: EdgePsnrTables) -> int:
    """floor((e - e_min) * K / (e_max - e_min) + 1), clamped to [1, K]."""
    k = int(np.floor((e - tables.e_min) * tables.bins
                     / (tables.e_max - tables.e_min) + 1.0))
    return min(max(k, 1), tables.bins)


def _fill_empty_bins(sums: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Bin means with empty bins linearly interpolated from filled neighbors."""
    filled = counts > 0
    if not filled.any():
        raise TablesError("no validation patches fell into any bin")
    means = np.zeros_like(sums)
    means[filled] = sums[filled] / counts[filled]
    if filled.all():
        return means
    idx = np.arange(len(counts), dtype=np.float64)
    return np.interp(idx, idx[filled], means[filled])


def build_tables(store: supernet.ParameterStore, widths, val_patches,
                 edge_op: EdgeOperator = EdgeOperator.LAPLACIAN,
                 bins: int = DEFAULT_BINS,
                 checkpoint_hash: str = "") -> EdgePsnrTables:
    """Offline table construction from validation (lr, hr) patch pairs.

    For every branch the per-patch PSNR is computed, patches are binned by
    LR edge score over [min(E), max(E)], and each bin stores the mean PSNR.
    """
    val_patches = list(val_patches)
    if not val_patches:
        raise TablesError("empty validation set")
    widths = list(widths)
    scale = store.config.scale
    scores = np.array([edge_score(lr, edge_op) for lr, _ in val_patches])
    e_min, e_max = float(scores.min()), float(scores.max())
    if not e_min < e_max:
        raise TablesError("degenerate edge-score range on the validation set")
    k_of = np.clip(np.floor((scores - e_min) * bins / (e_max - e_min) + 1.0),
                   1, bins).astype(int) - 1

    n_branches = len(widths) + 1
    sums = np.zeros((n_branches, bins), dtype=np.float64)
    counts = np.zeros(bins, dtype=np.int64)
    for i, (lr, hr) in enumerate(val_patches):
        counts[k_of[i]] += 1
        for j in range(n_branches):
            if j == 0:
                sr = resize_bicubic(lr, lr.shape[1] * scale, lr.shape[2] * scale)
            else:
                sr = supernet.forward(store, widths[j - 1], lr)
            sr = np.clip(sr, 0.0, 255.0)
            sums[j, k_of[i]] += psnr(sr, hr)

    values = np.stack([_fill_empty_bins(sums[j], counts)
                       for j in range(n_branches)])
    return EdgePsnrTables(e_min=e_min, e_max=e_max, bins=bins, values=values,
                          counts=counts, edge_op=edge_op.value,
                          checkpoint_hash=checkpoint_hash)


def select_branch(e: float, tables: EdgePsnrTables, costs: CostSet,
                  eta: float) -> int:
    """argmax_j eta * predicted_psnr[j] - cost[j]; ties go to the lower cost."""
    k = bin_index(e, tables) - 1
    best_j, best_obj = 0, None
    for j in range(len(costs)):  # ascending cost order
        obj = eta * float(tables.values[j, k]) - costs.values[j]
        if best_obj is None or obj > best_obj:
            best_j, best_obj = j, obj
    return best_j


def quantile_thresholds(scores, n_branches: int) -> list[float]:
    """Edge-score thresholds splitting validation scores into equal-mass classes."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise TablesError("empty score set")
    qs = [(j + 1) / n_branches for j in range(n_branches - 1)]
    return [float(np.quantile(scores, q)) for q in qs]


def select_by_threshold(e: float, thresholds) -> int:
    """Manual baseline: branch index = number of thresholds strictly below e."""
    return int(sum(e > t for t in thresholds))


TABLES_FORMAT_VERSION = 1


def save_tables(tables: EdgePsnrTables, costs: CostSet, path) -> None:
    doc = {
        "format_version": TABLES_FORMAT_VERSION,
        "e_min": tables.e_min,
        "e_max": tables.e_max,
        "bins": tables.bins,
        "edge_op": tables.edge_op,
        "checkpoint_hash": tables.checkpoint_hash,
        "costs": list(costs.values),
        "psnr_db": [[float(x) for x in row] for row in tables.values],
        "bin_counts": [int(c) for c in tables.counts],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_tables(path, checkpoint_hash: str | None = None):
    """Returns (EdgePsnrTables, CostSet); warns if the checkpoint hash differs."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise TablesError(f"unparsable tables file: {e}") from e
    if doc.get("format_version") != TABLES_FORMAT_VERSION:
        raise TablesError("unsupported tables format version")
    tables = EdgePsnrTables(
        e_min=float(doc["e_min"]), e_max=float(doc["e_max"]),
        bins=int(doc["bins"]),
        values=np.array(doc["psnr_db"], dtype=np.float64),
        counts=np.array(doc["bin_counts"], dtype=np.int64),
        edge_op=doc["edge_op"], checkpoint_hash=doc.get("checkpoint_hash", ""))
    costs = CostSet(tuple(float(c) for c in doc["costs"]))
    if checkpoint_hash and tables.checkpoint_hash and \
            checkpoint_hash != tables.checkpoint_hash:
        warnings.warn("lookup tables were built for a different checkpoint",
                      RuntimeWarning, stacklevel=2)
    return tables, costs
