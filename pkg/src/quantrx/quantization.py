"""Symmetric uniform post-training weight quantization.

Zero-point is fixed at 0, so real zero is always exactly representable.
Two scale rules are provided:

  - ``absrange`` (default): s = (max|x| - min|x|) / (2^b - 1)
  - ``maxabs``:   s = max|x| / (2^(b-1) - 1) signed,
                  s = max|x| / (2^b - 1)     unsigned

``absrange`` collapses to zero whenever all magnitudes in the tensor are
equal; the fallback policy is: all-zero tensor -> s = 1.0, otherwise the
``maxabs`` scale, and the result is flagged as degenerate either way.

Granularity is per-tensor (one scale) or per-channel (one scale per slice
along a designated channel axis, the output-channel axis for conv kernels).
Rounding is round-half-to-even; values are clamped to [0, 2^b - 1]
(unsigned) or [-2^(b-1), 2^(b-1) - 1] (signed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "QuantConfig",
    "Float16Model",
    "QuantizedTensor",
    "QuantizedModel",
    "ScaleResult",
    "AccessCostEstimate",
    "LayerWeightStats",
    "compute_scale",
    "compute_scale_per_channel",
    "quantize_with_scale",
    "quantize",
    "dequantize",
    "quantize_model",
    "model_to_float16",
    "memory_access_cost",
    "weight_stats",
]

SCALE_MODES = ("absrange", "maxabs")
GRANULARITIES = ("per_tensor", "per_channel")


@dataclass(frozen=True)
class QuantConfig:
    """Quantizer parameters: bit-width, signedness, granularity, scale rule."""

    bit_width: int = 8
    signed: bool = True
    granularity: str = "per_tensor"
    channel_axis: int = -1
    scale_mode: str = "absrange"

    def __post_init__(self):
        if not 2 <= self.bit_width <= 16:
            raise ValueError(f"bit_width must be in [2, 16], got {self.bit_width}")
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}")
        if self.scale_mode not in SCALE_MODES:
            raise ValueError(f"scale_mode must be one of {SCALE_MODES}")

    @property
    def int_range(self) -> tuple:
        if self.signed:
            return -(2 ** (self.bit_width - 1)), 2 ** (self.bit_width - 1) - 1
        return 0, 2**self.bit_width - 1

    @property
    def container_dtype(self) -> np.dtype:
        if self.bit_width <= 8:
            return np.dtype(np.int8 if self.signed else np.uint8)
        return np.dtype(np.int16 if self.signed else np.uint16)


class ScaleResult(NamedTuple):
    scale: float
    degenerate: bool


@dataclass
class QuantizedTensor:
    """Integer values plus the scale(s) needed to map them back to reals."""

    values: np.ndarray  # container dtype per config
    scales: np.ndarray  # float32; shape () per-tensor, (C,) per-channel
    config: QuantConfig
    shape: tuple
    degenerate: np.ndarray  # bool; same shape as scales

    def __post_init__(self):
        if self.values.shape != self.shape:
            raise ValueError(
                f"values shape {self.values.shape} != declared shape {self.shape}"
            )

    @property
    def num_elements(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    def payload_nbytes(self) -> int:
        """Serialized weight payload size (4-bit values pack two per byte)."""
        n = self.num_elements
        if self.config.bit_width == 4:
            return (n + 1) // 2
        return n * self.config.container_dtype.itemsize


def _scale_from_magnitudes(
    mags: np.ndarray, bit_width: int, mode: str, signed: bool
) -> ScaleResult:
    mmax = float(mags.max())
    mmin = float(mags.min())
    if mmax == 0.0:
        return ScaleResult(1.0, True)  # all-zero tensor
    if mode == "maxabs":
        denom = (2 ** (bit_width - 1) - 1) if signed else (2**bit_width - 1)
        return ScaleResult(mmax / denom, False)
    s = (mmax - mmin) / (2**bit_width - 1)
    if s <= 0.0:
        # all |x| equal: absrange collapses; fall back to the maxabs rule
        denom = (2 ** (bit_width - 1) - 1) if signed else (2**bit_width - 1)
        return ScaleResult(mmax / denom, True)
    return ScaleResult(s, False)


def compute_scale(
    x: np.ndarray, bit_width: int, mode: str = "absrange", signed: bool = True
) -> ScaleResult:
    """Quantizer step size for one tensor; flags degenerate fallbacks."""
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("cannot compute a scale for an empty tensor")
    if mode not in SCALE_MODES:
        raise ValueError(f"scale mode must be one of {SCALE_MODES}, got {mode!r}")
    return _scale_from_magnitudes(np.abs(x), bit_width, mode, signed)


def compute_scale_per_channel(
    w: np.ndarray,
    bit_width: int,
    mode: str = "absrange",
    signed: bool = True,
    channel_axis: int = -1,
) -> tuple:
    """Per-output-channel scales; returns (scales[C], degenerate[C])."""
    w = np.asarray(w)
    if w.size == 0:
        raise ValueError("cannot compute scales for an empty tensor")
    moved = np.moveaxis(w, channel_axis, -1).reshape(-1, w.shape[channel_axis])
    scales = np.empty(moved.shape[1], dtype=np.float32)
    degenerate = np.zeros(moved.shape[1], dtype=bool)
    for c in range(moved.shape[1]):
        s, d = _scale_from_magnitudes(np.abs(moved[:, c]), bit_width, mode, signed)
        scales[c] = s
        degenerate[c] = d
    return scales, degenerate


def quantize_with_scale(
    x: np.ndarray, scale, bit_width: int, signed: bool = True
) -> np.ndarray:
    """Round x/scale half-to-even and clamp to the signedness range."""
    lo, hi = QuantConfig(bit_width=bit_width, signed=signed).int_range
    q = np.rint(np.asarray(x, dtype=np.float64) / np.asarray(scale, dtype=np.float64))
    q = np.clip(q, lo, hi)
    dtype = QuantConfig(bit_width=bit_width, signed=signed).container_dtype
    return q.astype(dtype)


def quantize(x: np.ndarray, config: QuantConfig) -> QuantizedTensor:
    """Quantize a real tensor per the config's granularity and scale rule."""
    x = np.asarray(x, dtype=np.float32)
    if config.granularity == "per_tensor":
        s, d = compute_scale(x, config.bit_width, config.scale_mode, config.signed)
        scales = np.float32(s)  # quantize against the scale as stored
        degenerate = np.bool_(d)
        values = quantize_with_scale(x, float(scales), config.bit_width, config.signed)
    else:
        scales, degenerate = compute_scale_per_channel(
            x, config.bit_width, config.scale_mode, config.signed, config.channel_axis
        )
        axis = config.channel_axis % x.ndim
        bshape = [1] * x.ndim
        bshape[axis] = x.shape[axis]
        values = quantize_with_scale(
            x, scales.reshape(bshape), config.bit_width, config.signed
        )
    return QuantizedTensor(
        values=values,
        scales=np.asarray(scales, dtype=np.float32),
        config=config,
        shape=x.shape,
        degenerate=np.asarray(degenerate),
    )


def dequantize(q: QuantizedTensor) -> np.ndarray:
    """Map integers back to reals: scale * value (per-channel broadcast)."""
    if q.config.granularity == "per_tensor":
        out = q.scales.astype(np.float32) * q.values.astype(np.float32)
    else:
        axis = q.config.channel_axis % len(q.shape)
        bshape = [1] * len(q.shape)
        bshape[axis] = q.shape[axis]
        out = q.scales.reshape(bshape) * q.values.astype(np.float32)
    return out.astype(np.float32)


@dataclass
class QuantizedModel:
    """Weight-only quantized receiver: integer conv kernels, float everything else."""

    kernels: dict  # name -> QuantizedTensor
    floats: dict  # name -> float32 ndarray (conv biases, norm gamma/beta)
    config: QuantConfig
    model_config: dict  # receiver config echo, opaque here
    degenerate_layers: list = field(default_factory=list)


def quantize_model(model, config: QuantConfig) -> QuantizedModel:
    """Quantize every conv kernel; biases and norm parameters stay float32.

    ``model`` must expose ``conv_layers()``, ``norm_layers()`` and
    ``config_dict()``; the original model is not modified.
    """
    kernels = {}
    floats = {}
    degenerate_layers = []
    for name, layer in model.conv_layers():
        q = quantize(layer.kernel.data, config)
        kernels[name + ".kernel"] = q
        floats[name + ".bias"] = layer.bias.data.copy()
        if bool(np.any(q.degenerate)):
            degenerate_layers.append(name + ".kernel")
    for name, layer in model.norm_layers():
        floats[name + ".gamma"] = layer.gamma.data.copy()
        floats[name + ".beta"] = layer.beta.data.copy()
    return QuantizedModel(
        kernels=kernels,
        floats=floats,
        config=config,
        model_config=model.config_dict(),
        degenerate_layers=degenerate_layers,
    )


@dataclass
class Float16Model:
    """Conv kernels stored as float16; everything else float32."""

    kernels: dict  # name -> float16 ndarray
    floats: dict  # name -> float32 ndarray
    model_config: dict


def model_to_float16(model) -> Float16Model:
    """Half-precision storage variant, laid out like quantize_model output."""
    kernels = {}
    floats = {}
    for name, layer in model.conv_layers():
        kernels[name + ".kernel"] = layer.kernel.data.astype(np.float16)
        floats[name + ".bias"] = layer.bias.data.copy()
    for name, layer in model.norm_layers():
        floats[name + ".gamma"] = layer.gamma.data.copy()
        floats[name + ".beta"] = layer.beta.data.copy()
    return Float16Model(kernels=kernels, floats=floats, model_config=model.config_dict())


@dataclass(frozen=True)
class AccessCostEstimate:
    """Linear memory-access cost model for fetching scales plus tensor data."""

    channels: int
    param_cost: float
    tensor_size: int
    element_cost: float

    @property
    def total(self) -> float:
        return self.channels * self.param_cost + self.tensor_size * self.element_cost


def memory_access_cost(
    channels: int, param_cost: float, tensor_size: int, element_cost: float
) -> AccessCostEstimate:
    if channels < 0 or tensor_size < 0 or param_cost < 0 or element_cost < 0:
        raise ValueError("memory access cost inputs must be >= 0")
    return AccessCostEstimate(channels, param_cost, tensor_size, element_cost)


@dataclass
class LayerWeightStats:
    layer_name: str
    count: int
    min: float
    max: float
    mean: float
    std: float
    bin_edges: np.ndarray
    bin_counts: np.ndarray


def weight_stats(model, bins: int = 80) -> list:
    """Per-conv-layer weight summary and histogram."""
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    out = []
    for name, layer in model.conv_layers():
        w = layer.kernel.data.ravel().astype(np.float64)
        counts, edges = np.histogram(w, bins=bins)
        out.append(
            LayerWeightStats(
                layer_name=name,
                count=w.size,
                min=float(w.min()),
                max=float(w.max()),
                mean=float(w.mean()),
                std=float(w.std()),
                bin_edges=edges,
                bin_counts=counts,
            )
        )
    return out
