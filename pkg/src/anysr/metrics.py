"""PSNR, Spearman rank correlation, and the FLOPs-vs-PSNR sweep."""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

PSNR_CAP_DB = 100.0  # returned for zero MSE so averages stay finite


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 255.0) -> float:
    """10 * log10(peak^2 / MSE) over all channels and pixels."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean(np.square(a.astype(np.float64) - b.astype(np.float64))))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / mse))


def _ranks(xs: np.ndarray) -> np.ndarray:
    """Fractional ranks (1-based) with average-rank tie handling."""
    order = np.argsort(xs, kind="stable")
    ranks = np.empty(len(xs), dtype=np.float64)
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Pearson correlation of the fractional ranks of xs and ys."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("spearman expects two equal-length 1-D sequences")
    if len(xs) < 2:
        raise ValueError("need at least two points")
    rx, ry = _ranks(xs), _ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0.0:
        raise ValueError("rank variance is zero (all values tied)")
    return float((rx * ry).sum() / denom)


@dataclass
class EvalRow:
    eta: float
    mean_psnr_db: float
    mean_flops: float
    branch_fractions: tuple[float, ...]


CSV_HEADER_PREFIX = "eta,mean_psnr_db,mean_flops"


def rows_to_csv(rows: list[EvalRow]) -> str:
    if not rows:
        return CSV_HEADER_PREFIX + "\n"
    n_branches = len(rows[0].branch_fractions)
    header = CSV_HEADER_PREFIX + "".join(
        f",frac_branch{j}" for j in range(n_branches))
    out = io.StringIO()
    out.write(header + "\n")
    for r in rows:
        fracs = ",".join(f"{f:.6f}" for f in r.branch_fractions)
        out.write(f"{r.eta:g},{r.mean_psnr_db:.4f},{r.mean_flops:.1f},{fracs}\n")
    return out.getvalue()


def evaluate(pairs, store, tables, costs, etas, edge_op=None,
             patch: int = 32, stride: int | None = None) -> list[EvalRow]:
    """Run the routed SR pipeline over (lr, hr) image pairs at each eta.

    Per eta: mean PSNR over images, mean per-patch FLOPs over all patches,
    and per-branch usage fractions.
    """
    from . import pipeline  # deferred: pipeline depends on this module
    from .edge import EdgeOperator
    from .supernet import flops as model_flops

    if edge_op is None:
        edge_op = EdgeOperator.LAPLACIAN
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty evaluation set")
    scale = store.config.scale
    for lr, hr in pairs:
        if (3 * scale * lr.shape[1], scale * lr.shape[2]) != (3 * hr.shape[1], hr.shape[2]):
            raise ValueError(f"HR shape {hr.shape} is not {scale}x the LR "
                             f"shape {lr.shape}")
    full = model_flops(store.config, 1.0, (patch, patch))
    rows = []
    for eta in etas:
        psnrs = []
        counts = np.zeros(len(costs.values), dtype=np.int64)
        for lr, hr in pairs:
            sr, report = pipeline.sr_image(lr, store, tables, costs, eta,
                                           edge_op, patch=patch, stride=stride)
            psnrs.append(psnr(sr, hr))
            counts += np.asarray(report.branch_counts)
        total = int(counts.sum())
        mean_flops = float(np.dot(counts, costs.values) * full / total)
        rows.append(EvalRow(eta=float(eta),
                            mean_psnr_db=float(np.mean(psnrs)),
                            mean_flops=mean_flops,
                            branch_fractions=tuple(counts / total)))
    return rows
