"""Width-slicable FSRCNN-style backbone over one shared parameter store.

Layer stack (full width D=56, shrink d=12, m=4 mapping layers, x4 scale):

    feat    5x5 conv  3 -> D, pad 2, PReLU
    shrink  1x1 conv  D -> d, PReLU
    map x m 3x3 conv  d -> d, pad 1, PReLU
    expand  1x1 conv  d -> D, PReLU
    up      9x9 transposed conv D -> 3, stride 4

Every subnet of width multiplier a is the prefix slice [0 : round(a * D)]
of the feature-width channel axes; the shrink width d and the 3 color I/O
channels stay fixed (slicing the d-channel bottleneck makes narrow subnets
untrainable). The transposed layer crops its full scatter output
asymmetrically (3 leading, 2 trailing at k=9, stride 4) so an h x w input
maps to exactly 4h x 4w.
"""
from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .nn import (DTYPE, ConvSpec, LayerWeights, conv2d_backward,
                 conv2d_forward, prelu, prelu_backward)

CHECKPOINT_MAGIC = b"ANYSRCKP"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    """Invalid architecture or width configuration."""


class CheckpointError(IOError):
    """Checkpoint file is corrupt, truncated, or incompatible."""


def round_channels(alpha: float, channels: int) -> int:
    """Half-up rounding of alpha * channels, floored at 1 channel."""
    return max(1, int(np.floor(alpha * channels + 0.5)))


@dataclass(frozen=True)
class SupernetConfig:
    base_width: int = 56
    shrink_width: int = 12
    mapping_depth: int = 4
    scale: int = 4
    color_channels: int = 3
    widths: tuple[float, ...] = (0.29, 0.46, 1.0)

    def __post_init__(self):
        if not self.widths:
            raise ConfigError("widths must be non-empty")
        if any(not 0.0 < a <= 1.0 for a in self.widths):
            raise ConfigError(f"widths must lie in (0, 1]: {self.widths}")
        if list(self.widths) != sorted(set(self.widths)):
            raise ConfigError(f"widths must be strictly increasing: {self.widths}")
        if self.widths[-1] != 1.0:
            raise ConfigError("largest width must be exactly 1.0")
        for c in (self.base_width, self.shrink_width, self.mapping_depth,
                  self.scale, self.color_channels):
            if c < 1:
                raise ConfigError("architecture sizes must be positive")

    def to_text(self) -> str:
        lines = [f"base_width = {self.base_width}",
                 f"shrink_width = {self.shrink_width}",
                 f"mapping_depth = {self.mapping_depth}",
                 f"scale = {self.scale}",
                 f"color_channels = {self.color_channels}",
                 "widths = " + ",".join(repr(a) for a in self.widths)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SupernetConfig":
        kv = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"bad config line: {raw!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            kv[k] = v
        try:
            return cls(
                base_width=int(kv["base_width"]),
                shrink_width=int(kv["shrink_width"]),
                mapping_depth=int(kv["mapping_depth"]),
                scale=int(kv["scale"]),
                color_channels=int(kv["color_channels"]),
                widths=tuple(float(a) for a in kv["widths"].split(",")),
            )
        except KeyError as e:
            raise ConfigError(f"config missing key {e.args[0]!r}") from e


def layer_specs(config: SupernetConfig) -> list[tuple[str, ConvSpec]]:
    """Full-width ConvSpec per layer, in forward order."""
    D, d, c = config.base_width, config.shrink_width, config.color_channels
    k = 2 * config.scale + 1  # 9-tap upsampling kernel at scale 4
    crop = k - config.scale   # total crop so out = in * scale
    specs = [("feat", ConvSpec(c, D, (5, 5), padding=2)),
             ("shrink", ConvSpec(D, d, (1, 1)))]
    for i in range(config.mapping_depth):
        specs.append((f"map{i}", ConvSpec(d, d, (3, 3), padding=1)))
    specs.append(("expand", ConvSpec(d, D, (1, 1))))
    specs.append(("up", ConvSpec(D, c, (k, k), stride=config.scale,
                                 padding=((crop + 1) // 2, crop // 2),
                                 transposed=True)))
    return specs


@dataclass
class ParameterStore:
    """All supernet weights; subnets are prefix views, never copies."""

    config: SupernetConfig
    layers: list[LayerWeights]

    def num_parameters(self) -> int:
        total = 0
        for lw in self.layers:
            total += lw.kernel.size + lw.bias.size
            if lw.prelu_slope is not None:
                total += lw.prelu_slope.size
        return total

    def params_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for i, lw in enumerate(self.layers):
            out[f"{i}.kernel"] = lw.kernel
            out[f"{i}.bias"] = lw.bias
            if lw.prelu_slope is not None:
                out[f"{i}.slope"] = lw.prelu_slope
        return out


def build(config: SupernetConfig, seed: int = 0) -> ParameterStore:
    """Kaiming fan-in init for kernels, PReLU slopes 0.25, zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    specs = layer_specs(config)
    last = len(specs) - 1
    for i, (_, spec) in enumerate(specs):
        kh, kw = spec.kernel
        fan_in = spec.in_channels * kh * kw
        kernel = (rng.standard_normal(
            (spec.out_channels, spec.in_channels, kh, kw), dtype=np.float64)
            * np.sqrt(2.0 / fan_in)).astype(DTYPE)
        bias = np.zeros(spec.out_channels, dtype=DTYPE)
        slope = None if i == last else np.full(spec.out_channels, 0.25, DTYPE)
        layers.append(LayerWeights(kernel, bias, slope))
    return ParameterStore(config, layers)


def _check_width(config: SupernetConfig, alpha: float) -> None:
    if not any(abs(alpha - a) < 1e-9 for a in config.widths):
        raise ConfigError(f"width {alpha} not in configured set {config.widths}")


def slice_plan(config: SupernetConfig, alpha: float) -> list[tuple[int, int]]:
    """(out_channels, in_channels) per layer at width alpha."""
    _check_width(config, alpha)
    D = round_channels(alpha, config.base_width)
    # The shrink width stays fixed across widths: slicing the mapping
    # bottleneck below ~6 channels makes narrow subnets untrainable, while
    # the feature width alone already sets the compute budget (the feature
    # extraction and upsampling layers dominate FLOPs).
    d = config.shrink_width
    c = config.color_channels
    plan = [(D, c), (d, D)]
    plan += [(d, d)] * config.mapping_depth
    plan += [(D, d), (c, D)]
    return plan


def param_slices(config: SupernetConfig, alpha: float) -> dict[str, tuple]:
    """Index tuples selecting the alpha-prefix region of every parameter."""
    slices = {}
    n = len(layer_specs(config))
    for i, (oc, ic) in enumerate(slice_plan(config, alpha)):
        slices[f"{i}.kernel"] = (slice(0, oc), slice(0, ic))
        slices[f"{i}.bias"] = (slice(0, oc),)
        if i != n - 1:
            slices[f"{i}.slope"] = (slice(0, oc),)
    return slices


def _sliced_layers(store: ParameterStore, alpha: float):
    """Per-layer (sliced LayerWeights view, sliced ConvSpec)."""
    specs = layer_specs(store.config)
    plan = slice_plan(store.config, alpha)
    out = []
    for (name, spec), lw, (oc, ic) in zip(specs, store.layers, plan):
        w = LayerWeights(lw.kernel[:oc, :ic], lw.bias[:oc],
                         None if lw.prelu_slope is None else lw.prelu_slope[:oc])
        s = ConvSpec(ic, oc, spec.kernel, spec.stride, spec.padding,
                     spec.transposed)
        out.append((w, s))
    return out


# Pixel values are scaled to [0, 1] at the network boundary so parameter
# magnitudes stay O(1); Adam-style optimizers move parameters by about lr
# per step, which on raw [0, 255] data would take tens of thousands of
# steps just to reach the data mean. External contracts remain [0, 255].
PIXEL_SCALE = DTYPE(255.0)


def forward(store: ParameterStore, alpha: float, x: np.ndarray) -> np.ndarray:
    """SR forward at width alpha; (3,h,w) -> (3,scale*h,scale*w), or batched."""
    h = np.ascontiguousarray(x, dtype=DTYPE) / PIXEL_SCALE
    for w, spec in _sliced_layers(store, alpha):
        h = conv2d_forward(h, w, spec)
        if w.prelu_slope is not None:
            h = prelu(h, w.prelu_slope)
    return h * PIXEL_SCALE


def forward_train(store: ParameterStore, alpha: float, x: np.ndarray):
    """Forward keeping per-layer inputs/pre-activations for backward."""
    h = np.ascontiguousarray(x, dtype=DTYPE) / PIXEL_SCALE
    cache = []
    for w, spec in _sliced_layers(store, alpha):
        z = conv2d_forward(h, w, spec)
        cache.append((h, z))
        h = prelu(z, w.prelu_slope) if w.prelu_slope is not None else z
    return h * PIXEL_SCALE, cache


def backward_train(store: ParameterStore, alpha: float, cache,
                   grad_out: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the forward pass, keyed and shaped like the alpha slice."""
    grads: dict[str, np.ndarray] = {}
    g = grad_out * PIXEL_SCALE
    layers = _sliced_layers(store, alpha)
    for i in reversed(range(len(layers))):
        w, spec = layers[i]
        x_in, z = cache[i]
        if w.prelu_slope is not None:
            g, gslope = prelu_backward(z, w.prelu_slope, g)
            grads[f"{i}.slope"] = gslope
        g, wgrads = conv2d_backward(x_in, w, spec, g)
        grads[f"{i}.kernel"] = wgrads.kernel
        grads[f"{i}.bias"] = wgrads.bias
    return grads


def flops(config: SupernetConfig, alpha: float, lr_size: tuple[int, int] = (32, 32)) -> int:
    """2 x multiply-accumulates over all conv layers at width alpha.

    Each layer is charged out_ch * in_ch * kh * kw per output pixel; the
    transposed layer is charged at its upscaled output resolution. Bias
    and activation ops are excluded. This is the convention under which
    the full-width model on a 32x32 patch at x4 costs 467,877,888 FLOPs.
    """
    h, w = lr_size
    specs = layer_specs(config)
    plan = slice_plan(config, alpha)
    macs = 0
    for (name, spec), (oc, ic) in zip(specs, plan):
        kh, kw = spec.kernel
        if spec.transposed:
            area = (h * config.scale) * (w * config.scale)
        else:
            area = h * w  # stride-1 same-size layers
        macs += oc * ic * kh * kw * area
    return 2 * macs


def _write_array(buf: io.BytesIO, arr: np.ndarray) -> None:
    buf.write(struct.pack("<B", arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_array(buf: io.BytesIO) -> np.ndarray:
    head = buf.read(1)
    if len(head) != 1:
        raise CheckpointError("truncated checkpoint: missing array header")
    ndim = struct.unpack("<B", head)[0]
    raw = buf.read(4 * ndim)
    if len(raw) != 4 * ndim:
        raise CheckpointError("truncated checkpoint: missing shape")
    shape = struct.unpack(f"<{ndim}I", raw)
    n = int(np.prod(shape))
    data = buf.read(4 * n)
    if len(data) != 4 * n:
        raise CheckpointError("truncated checkpoint: missing array payload")
    return np.frombuffer(data, dtype="<f4").reshape(shape).astype(DTYPE)


def save_checkpoint(store: ParameterStore, path) -> None:
    """Little-endian binary: magic, version, config text, arrays, CRC32."""
    payload = io.BytesIO()
    cfg = store.config.to_text().encode("utf-8")
    payload.write(struct.pack("<I", len(cfg)))
    payload.write(cfg)
    payload.write(struct.pack("<I", len(store.layers)))
    for lw in store.layers:
        payload.write(struct.pack("<B", 0 if lw.prelu_slope is None else 1))
        _write_array(payload, lw.kernel)
        _write_array(payload, lw.bias)
        if lw.prelu_slope is not None:
            _write_array(payload, lw.prelu_slope)
    body = payload.getvalue()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(body)
        f.write(struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


def load_checkpoint(path, expected_config: SupernetConfig | None = None) -> ParameterStore:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(CHECKPOINT_MAGIC) + 8:
        raise CheckpointError("truncated checkpoint file")
    if blob[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic bytes: not a checkpoint file")
    off = len(CHECKPOINT_MAGIC)
    version = struct.unpack_from("<I", blob, off)[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    body, crc_stored = blob[off + 4:-4], struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise CheckpointError("checkpoint CRC mismatch: file is corrupt")
    buf = io.BytesIO(body)
    cfg_len = struct.unpack("<I", buf.read(4))[0]
    config = SupernetConfig.from_text(buf.read(cfg_len).decode("utf-8"))
    if expected_config is not None and config != expected_config:
        raise CheckpointError("checkpoint config does not match the expected "
                              "configuration")
    n_layers = struct.unpack("<I", buf.read(4))[0]
    specs = layer_specs(config)
    if n_layers != len(specs):
        raise CheckpointError(f"checkpoint has {n_layers} layers, config "
                              f"implies {len(specs)}")
    layers = []
    for i, (_, spec) in enumerate(specs):
        has_slope = struct.unpack("<B", buf.read(1))[0]
        kernel = _read_array(buf)
        bias = _read_array(buf)
        slope = _read_array(buf) if has_slope else None
        kh, kw = spec.kernel
        if kernel.shape != (spec.out_channels, spec.in_channels, kh, kw):
            raise CheckpointError(
                f"layer {i} kernel shape {kernel.shape} does not match the "
                f"embedded config")
        layers.append(LayerWeights(kernel, bias, slope))
    return ParameterStore(config, layers)


def checkpoint_hash(path) -> str:
    """Stable identity of a checkpoint file for pairing with lookup tables."""
    import hashlib
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()
