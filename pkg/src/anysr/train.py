"""Supernet training: patch preparation, computation-aware sampling, Adam loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import supernet
from .nn import AdamState, adam_step, l1_loss, l1_loss_grad
from .resample import resize_bicubic

log = logging.getLogger(__name__)

DEFAULT_PATCH = 32
DEFAULT_HR_STRIDE = 128  # non-overlapping at p=32, x4


@dataclass
class PatchDataset:
    pairs: list[tuple[np.ndarray, np.ndarray]]  # (lr 3xpxp, hr 3x4px4p)

    def __len__(self):
        return len(self.pairs)


@dataclass(frozen=True)
class SamplerConfig:
    exponent: float = 2.0

    def __post_init__(self):
        if self.exponent < 0:
            raise ValueError("sampling exponent must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch: int = 16
    lr: float = 1e-3
    lr_drop_epochs: tuple[int, ...] = (10, 15)  # halve at these epoch indices
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    augment: bool = True
    grad_clip: float | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch size must be positive")


def prepare_patches(hr_images, patch: int = DEFAULT_PATCH, scale: int = 4,
                    stride: int = DEFAULT_HR_STRIDE) -> PatchDataset:
    """Crop HR images on an HR-space stride grid; LR = bicubic downscale.

    Images smaller than one HR crop (scale * patch) are skipped with a
    warning.
    """
    hp = patch * scale
    pairs = []
    for idx, img in enumerate(hr_images):
        _, h, w = img.shape
        if h < hp or w < hp:
            log.warning("image %d (%dx%d) smaller than HR crop %d, skipped",
                        idx, h, w, hp)
            continue
        ys = list(range(0, h - hp + 1, stride))
        xs = list(range(0, w - hp + 1, stride))
        for y in ys:
            for x in xs:
                hr = np.ascontiguousarray(img[:, y:y + hp, x:x + hp])
                lr = resize_bicubic(hr, patch, patch)
                pairs.append((lr, hr))
    return PatchDataset(pairs)


def sampling_probabilities(flops_list, n: float) -> np.ndarray:
    """p_j = flops_j^n / sum_k flops_k^n (n=0 gives uniform sampling)."""
    f = np.asarray(flops_list, dtype=np.float64)
    if f.size == 0:
        raise ValueError("empty FLOPs list")
    if np.any(f <= 0):
        raise ValueError("FLOPs must be positive")
    weights = f ** n
    return weights / weights.sum()


def sample_subnet(probs, rng: np.random.Generator) -> int:
    """Categorical draw over subnets; returns a 1-based index in 1..M."""
    probs = np.asarray(probs, dtype=np.float64)
    return int(rng.choice(len(probs), p=probs / probs.sum())) + 1


def augment_pair(lr: np.ndarray, hr: np.ndarray, rng: np.random.Generator):
    """Random 90-degree rotation plus horizontal/vertical flips, applied
    identically to both patches."""
    k = int(rng.integers(0, 4))
    if k:
        lr = np.rot90(lr, k, axes=(1, 2))
        hr = np.rot90(hr, k, axes=(1, 2))
    if rng.integers(0, 2):
        lr, hr = lr[:, :, ::-1], hr[:, :, ::-1]
    if rng.integers(0, 2):
        lr, hr = lr[:, ::-1, :], hr[:, ::-1, :]
    return np.ascontiguousarray(lr), np.ascontiguousarray(hr)


def train_step(store: supernet.ParameterStore, batch_lr: np.ndarray,
               batch_hr: np.ndarray, subnet_index: int, state: AdamState,
               lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
               eps: float = 1e-8, grad_clip: float | None = None) -> float:
    """One l1 optimization step of the chosen subnet.

    Only the alpha-prefix slice of every parameter (and of its Adam
    moments) is touched; everything outside the slice stays bit-identical.
    """
    widths = store.config.widths
    if not 1 <= subnet_index <= len(widths):
        raise ValueError(f"subnet index {subnet_index} outside 1..{len(widths)}")
    alpha = widths[subnet_index - 1]
    pred, cache = supernet.forward_train(store, alpha, batch_lr)
    loss = l1_loss(pred, batch_hr)
    if not np.isfinite(loss):
        raise RuntimeError(
            f"non-finite loss {loss!r} at width {alpha} "
            f"(pred range [{np.nanmin(pred)}, {np.nanmax(pred)}])")
    grads = supernet.backward_train(store, alpha, cache,
                                    l1_loss_grad(pred, batch_hr))
    if grad_clip is not None:
        norm = float(np.sqrt(sum(float(np.square(g).sum())
                                 for g in grads.values())))
        if norm > grad_clip:
            scale = grad_clip / norm
            grads = {k: g * scale for k, g in grads.items()}
    adam_step(store.params_dict(), grads, state, lr=lr, beta1=beta1,
              beta2=beta2, eps=eps,
              slices=supernet.param_slices(store.config, alpha))
    return loss


def train(store: supernet.ParameterStore, dataset: PatchDataset,
          train_cfg: TrainConfig = TrainConfig(),
          sampler_cfg: SamplerConfig = SamplerConfig(),
          patch: int = DEFAULT_PATCH,
          progress=None) -> list[float]:
    """Full training loop; returns the per-iteration loss log.

    Each iteration samples one subnet with probability proportional to
    FLOPs^n and optimizes only that subnet's slice.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    cfg = store.config
    flops_list = [supernet.flops(cfg, a, (patch, patch)) for a in cfg.widths]
    probs = sampling_probabilities(flops_list, sampler_cfg.exponent)
    rng = np.random.default_rng(train_cfg.seed)
    state = AdamState()
    losses: list[float] = []
    lr = train_cfg.lr
    n = len(dataset)
    for epoch in range(train_cfg.epochs):
        if epoch in train_cfg.lr_drop_epochs:
            lr *= 0.5
        order = rng.permutation(n)
        for start in range(0, n, train_cfg.batch):
            idx = order[start:start + train_cfg.batch]
            batch = [dataset.pairs[i] for i in idx]
            if train_cfg.augment:
                batch = [augment_pair(l, h, rng) for l, h in batch]
            batch_lr = np.stack([b[0] for b in batch])
            batch_hr = np.stack([b[1] for b in batch])
            j = sample_subnet(probs, rng)
            loss = train_step(store, batch_lr, batch_hr, j, state, lr=lr,
                              beta1=train_cfg.beta1, beta2=train_cfg.beta2,
                              eps=train_cfg.eps, grad_clip=train_cfg.grad_clip)
            losses.append(loss)
        if progress is not None:
            progress(epoch, losses[-1])
    return losses
