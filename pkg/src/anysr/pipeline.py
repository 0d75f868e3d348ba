"""End-to-end routed super-resolution over a tiled LR image."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import supernet
from .dispatch import CostSet, EdgePsnrTables, select_branch
from .edge import EdgeOperator, edge_score
from .nn import DTYPE
from .resample import resize_bicubic

DEFAULT_PATCH = 32


class TilingError(ValueError):
    """Image cannot be decomposed into the requested patch grid."""


@dataclass
class PatchGrid:
    patch: int
    stride: int
    origins: list[tuple[int, int]]  # (y, x) in LR space
    height: int
    width: int


@dataclass
class SrReport:
    branch_counts: list[int]          # index 0 = interpolation branch
    total_patches: int
    avg_flops: float
    routing: list[tuple[int, int, int]] = field(default_factory=list)  # (y, x, branch)


def _axis_origins(extent: int, patch: int, stride: int) -> list[int]:
    origins = list(range(0, extent - patch + 1, stride))
    if origins[-1] != extent - patch:  # clamp the final tile to the border
        origins.append(extent - patch)
    return origins


def split(image: np.ndarray, patch: int = DEFAULT_PATCH,
          stride: int | None = None):
    """Full-coverage tiling into exactly patch x patch LR tiles.

    Returns (PatchGrid, array (n, c, patch, patch)). Origins sit on the
    stride grid with the last row/column clamped so no tile leaves the
    image; with stride < patch the tiles overlap.
    """
    if image.ndim != 3:
        raise TilingError(f"expected (c, h, w) image, got shape {image.shape}")
    _, h, w = image.shape
    if stride is None:
        stride = patch
    if not 1 <= stride <= patch:
        raise TilingError(f"stride must be in [1, patch]: {stride}")
    if h < patch or w < patch:
        raise TilingError(f"image {h}x{w} smaller than patch size {patch}")
    origins = [(y, x) for y in _axis_origins(h, patch, stride)
               for x in _axis_origins(w, patch, stride)]
    patches = np.stack([image[:, y:y + patch, x:x + patch] for y, x in origins])
    return PatchGrid(patch, stride, origins, h, w), patches


def merge(grid: PatchGrid, sr_patches: np.ndarray, scale: int) -> np.ndarray:
    """Reassemble SR tiles; overlapping pixels are uniformly averaged."""
    c = sr_patches.shape[1]
    ph = grid.patch * scale
    acc = np.zeros((c, grid.height * scale, grid.width * scale), dtype=np.float64)
    weight = np.zeros((grid.height * scale, grid.width * scale), dtype=np.float64)
    for (y, x), tile in zip(grid.origins, sr_patches):
        ys, xs = y * scale, x * scale
        acc[:, ys:ys + ph, xs:xs + ph] += tile
        weight[ys:ys + ph, xs:xs + ph] += 1.0
    if not (weight > 0).all():
        raise TilingError("tiling left uncovered output pixels")
    return (acc / weight).astype(DTYPE)


def interp_upscale(patch: np.ndarray, scale: int) -> np.ndarray:
    """Bicubic x-scale upscaling, clamped to the [0, 255] pixel range."""
    out = resize_bicubic(patch, patch.shape[-2] * scale, patch.shape[-1] * scale)
    return np.clip(out, 0.0, 255.0)


def sr_image(image: np.ndarray, store: supernet.ParameterStore,
             tables: EdgePsnrTables, costs: CostSet, eta: float,
             edge_op: EdgeOperator = EdgeOperator.LAPLACIAN,
             patch: int = DEFAULT_PATCH, stride: int | None = None,
             force_branch: int | None = None):
    """Route each LR tile through its selected branch and merge the result.

    Returns (sr image (3, scale*h, scale*w) clamped to [0, 255], SrReport).
    ``force_branch`` bypasses selection, e.g. to measure the
    full-width-everywhere reference.
    """
    config = store.config
    scale = config.scale
    grid, patches = split(image, patch, stride)
    n_branches = len(costs)
    if force_branch is None:
        branches = [select_branch(edge_score(p, edge_op), tables, costs, eta)
                    for p in patches]
    else:
        if not 0 <= force_branch < n_branches:
            raise ValueError(f"branch {force_branch} out of range")
        branches = [force_branch] * len(patches)

    sr_patches = np.empty((len(patches), 3, patch * scale, patch * scale),
                          dtype=DTYPE)
    order = np.asarray(branches)
    for j in range(n_branches):
        idx = np.nonzero(order == j)[0]
        if idx.size == 0:
            continue
        if j == 0:
            for i in idx:
                sr_patches[i] = interp_upscale(patches[i], scale)
        else:
            out = supernet.forward(store, config.widths[j - 1], patches[idx])
            sr_patches[idx] = np.clip(out, 0.0, 255.0)

    out_img = merge(grid, sr_patches, scale)
    counts = [int((order == j).sum()) for j in range(n_branches)]
    full = supernet.flops(config, 1.0, (patch, patch))
    report = SrReport(
        branch_counts=counts,
        total_patches=len(patches),
        avg_flops=avg_flops_of_counts(counts, costs, full),
        routing=[(y, x, int(b)) for (y, x), b in zip(grid.origins, branches)])
    return out_img, report


def avg_flops_of_counts(counts, costs: CostSet, full_flops: int) -> float:
    total = int(sum(counts))
    if total == 0:
        raise ValueError("no patches")
    return float(sum(n * c for n, c in zip(counts, costs.values))
                 * full_flops / total)


def avg_flops(report: SrReport, costs: CostSet, full_flops: int) -> float:
    """Mean per-patch FLOPs implied by a routing report."""
    return avg_flops_of_counts(report.branch_counts, costs, full_flops)
