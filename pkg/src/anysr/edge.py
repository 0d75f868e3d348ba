"""Edge response of LR patches: grayscale conversion, 3x3 operators, scalar score."""
from __future__ import annotations

import enum

import numpy as np



class EdgeOperator(enum.Enum):
    LAPLACIAN = "laplacian"
    SOBEL = "sobel"
    PREWITT = "prewitt"


# 4-neighbor Laplacian; entries sum to zero so flat regions respond with 0.
LAPLACIAN_KERNEL = np.array([[0, 1, 0],
                             [1, -4, 1],
                             [0, 1, 0]], dtype=np.float64)
SOBEL_GX = np.array([[-1, 0, 1],
                     [-2, 0, 2],
                     [-1, 0, 1]], dtype=np.float64)
PREWITT_GX = np.array([[-1, 0, 1],
                       [-1, 0, 1],
                       [-1, 0, 1]], dtype=np.float64)

# Rec.601 luma weights on [0, 255] RGB
LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def to_gray(patch: np.ndarray) -> np.ndarray:
    """(3, h, w) RGB in [0, 255] -> (h, w) luma."""
    if patch.ndim != 3 or patch.shape[0] != 3:
        raise ValueError(f"expected (3, h, w) patch, got {patch.shape}")
    return np.tensordot(LUMA, patch.astype(np.float64), axes=(0, 0))


def _correlate3(gray: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """3x3 cross-correlation with replicate (edge-clamp) padding."""
    gp = np.pad(gray.astype(np.float64), 1, mode="edge")
    out = np.zeros_like(gray, dtype=np.float64)
    for u in range(3):
        for v in range(3):
            k = float(kernel[u, v])
            if k != 0.0:
                out += k * gp[u:u + gray.shape[0], v:v + gray.shape[1]]
    return out


def edge_map(gray: np.ndarray, op: EdgeOperator = EdgeOperator.LAPLACIAN) -> np.ndarray:
    """Non-negative edge response per pixel."""
    if op is EdgeOperator.LAPLACIAN:
        return np.abs(_correlate3(gray, LAPLACIAN_KERNEL))
    gx_kernel = SOBEL_GX if op is EdgeOperator.SOBEL else PREWITT_GX
    gx = _correlate3(gray, gx_kernel)
    gy = _correlate3(gray, gx_kernel.T)
    return np.hypot(gx, gy)


def edge_score(patch: np.ndarray, op: EdgeOperator = EdgeOperator.LAPLACIAN) -> float:
    """Mean edge response of the grayscale patch; the routing difficulty proxy."""
    return float(np.mean(edge_map(to_gray(patch), op)))
