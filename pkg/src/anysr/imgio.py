"""8-bit RGB image I/O (PNG and PPM) and dataset directory scanning.

Pixel data is exposed as float32 tensors shaped (3, h, w) in [0, 255].
Grayscale files are replicated to 3 channels; anything that is not 8-bit
gray/RGB is rejected rather than silently converted.
"""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .nn import DTYPE

log = logging.getLogger(__name__)

SUPPORTED_EXTENSIONS = (".png", ".ppm")


class ImageIOError(IOError):
    """Unreadable, truncated, or unsupported image file."""


def read_image(path) -> np.ndarray:
    """Decode an 8-bit RGB (or gray) PNG/PPM into a (3, h, w) float tensor."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode == "L":
                im = im.convert("RGB")
            if im.mode != "RGB":
                raise ImageIOError(
                    f"{path}: unsupported image mode {im.mode!r} "
                    "(only 8-bit grayscale/RGB is handled)")
            arr = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as e:
        raise ImageIOError(f"{path}: cannot decode image ({e})") from e
    return np.ascontiguousarray(arr.transpose(2, 0, 1).astype(DTYPE))


def write_image(path, tensor: np.ndarray) -> None:
    """Encode a (3, h, w) tensor; values are rounded and clamped here."""
    if tensor.ndim != 3 or tensor.shape[0] != 3:
        raise ImageIOError(f"expected (3, h, w) tensor, got {tensor.shape}")
    path = Path(path)
    if path.suffix.lower() not in SUPPORTED_EXTENSIONS:
        raise ImageIOError(f"unsupported output format {path.suffix!r}")
    arr = np.clip(np.rint(tensor), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr, mode="RGB").save(path)


def scan_dataset(directory, extensions=SUPPORTED_EXTENSIONS) -> list[Path]:
    """Deterministic lexicographic list of image files under a directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ImageIOError(f"{directory}: not a directory")
    files = []
    for p in sorted(directory.iterdir()):
        if not p.is_file():
            continue
        if p.suffix.lower() in extensions:
            files.append(p)
        else:
            log.warning("skipping non-image file %s", p)
    return files
