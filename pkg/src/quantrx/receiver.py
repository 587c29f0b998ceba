"""Convolutional residual OFDM receiver: grid in, per-RE bit LLRs out.

Architecture: an input conv lifts the featurized grid to the working
channel width, a stack of pre-activation residual blocks
(norm -> ReLU -> conv -> norm -> ReLU -> conv -> skip add) refines it,
and an output conv maps to one LLR per bit per resource element.
Positive LLR means bit 1.

Input features (channels-last, in this order): real/imag of the received
grid per antenna (2*Nr channels), then real/imag of the known pilot
value, zero on non-pilot REs (2 channels).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .quantization import Float16Model, QuantizedModel, dequantize
from .tensor import ConvSpec, Tensor, add, conv2d, layer_norm, relu

__all__ = [
    "ReceiverConfig",
    "NeuralReceiver",
    "SizeReport",
    "build",
    "expected_param_count",
    "featurize",
    "forward",
    "forward_quantized",
    "model_from_quantized",
    "model_size_bytes",
]

LAYER_NORM_EPS = 1e-5


@dataclass(frozen=True)
class ReceiverConfig:
    """Desk-scale defaults; paper_size() gives the full-size variant."""

    num_blocks: int = 2
    channels: int = 16
    kernel: tuple = (3, 3)
    dilation: tuple = (1, 1)
    bits_per_symbol: int = 2
    num_rx_antennas: int = 2

    def __post_init__(self):
        if self.num_blocks < 1 or self.channels < 1:
            raise ValueError("num_blocks and channels must be >= 1")
        if self.bits_per_symbol < 1 or self.num_rx_antennas < 1:
            raise ValueError("bits_per_symbol and num_rx_antennas must be >= 1")

    @property
    def input_channels(self) -> int:
        return 2 * self.num_rx_antennas + 2

    @classmethod
    def paper_size(cls) -> "ReceiverConfig":
        return cls(num_blocks=8, channels=128, bits_per_symbol=6, num_rx_antennas=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ReceiverConfig":
        d = dict(d)
        for key in ("kernel", "dilation"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class ConvLayer:
    kernel: Tensor
    bias: Tensor
    spec: ConvSpec

    def __call__(self, x):
        return conv2d(x, self.kernel, self.bias, self.spec)


@dataclass
class NormLayer:
    gamma: Tensor
    beta: Tensor

    def __call__(self, x):
        return layer_norm(x, self.gamma, self.beta, LAYER_NORM_EPS)


@dataclass
class ResBlock:
    norm1: NormLayer
    conv1: ConvLayer
    norm2: NormLayer
    conv2: ConvLayer

    def __call__(self, x):
        h = self.conv1(relu(self.norm1(x)))
        h = self.conv2(relu(self.norm2(h)))
        return add(x, h)


@dataclass
class NeuralReceiver:
    config: ReceiverConfig
    input_conv: ConvLayer
    blocks: list
    output_conv: ConvLayer

    def conv_layers(self) -> list:
        layers = [("input_conv", self.input_conv)]
        for i, blk in enumerate(self.blocks, start=1):
            layers.append((f"block{i}_conv1", blk.conv1))
            layers.append((f"block{i}_conv2", blk.conv2))
        layers.append(("output_conv", self.output_conv))
        return layers

    def norm_layers(self) -> list:
        layers = []
        for i, blk in enumerate(self.blocks, start=1):
            layers.append((f"block{i}_norm1", blk.norm1))
            layers.append((f"block{i}_norm2", blk.norm2))
        return layers

    def parameters(self) -> list:
        """(name, tensor) pairs in the canonical serialization order."""
        params = [
            ("input_conv.kernel", self.input_conv.kernel),
            ("input_conv.bias", self.input_conv.bias),
        ]
        for i, blk in enumerate(self.blocks, start=1):
            params += [
                (f"block{i}_norm1.gamma", blk.norm1.gamma),
                (f"block{i}_norm1.beta", blk.norm1.beta),
                (f"block{i}_conv1.kernel", blk.conv1.kernel),
                (f"block{i}_conv1.bias", blk.conv1.bias),
                (f"block{i}_norm2.gamma", blk.norm2.gamma),
                (f"block{i}_norm2.beta", blk.norm2.beta),
                (f"block{i}_conv2.kernel", blk.conv2.kernel),
                (f"block{i}_conv2.bias", blk.conv2.bias),
            ]
        params += [
            ("output_conv.kernel", self.output_conv.kernel),
            ("output_conv.bias", self.output_conv.bias),
        ]
        return params

    def param_count(self) -> int:
        return sum(t.data.size for _, t in self.parameters())

    def config_dict(self) -> dict:
        return asdict(self.config)

    def set_trainable(self, flag: bool) -> None:
        for _, t in self.parameters():
            t.requires_grad = flag

    def __call__(self, features):
        return forward(self, features)


def expected_param_count(config: ReceiverConfig) -> int:
    """Closed-form parameter count from the layer inventory."""
    kh, kw = config.kernel
    c = config.channels
    n_in = kh * kw * config.input_channels * c + c
    per_block = 2 * (kh * kw * c * c + c) + 2 * (2 * c)
    n_out = kh * kw * c * config.bits_per_symbol + config.bits_per_symbol
    return n_in + config.num_blocks * per_block + n_out


def _he_kernel(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    fan_in = shape[0] * shape[1] * shape[2]
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


def build(config: ReceiverConfig, seed: int = 0) -> NeuralReceiver:
    """Deterministic He-style initialization from a seed."""
    rng = np.random.default_rng(seed)
    kh, kw = config.kernel
    c = config.channels

    def conv(cin, cout):
        spec = ConvSpec(cin, cout, config.kernel, config.dilation)
        kernel = Tensor(_he_kernel(rng, (kh, kw, cin, cout)))
        bias = Tensor(np.zeros(cout, dtype=np.float32))
        return ConvLayer(kernel, bias, spec)

    def norm():
        return NormLayer(
            Tensor(np.ones(c, dtype=np.float32)), Tensor(np.zeros(c, dtype=np.float32))
        )

    blocks = [
        ResBlock(norm(), conv(c, c), norm(), conv(c, c)) for _ in range(config.num_blocks)
    ]
    return NeuralReceiver(
        config=config,
        input_conv=conv(config.input_channels, c),
        blocks=blocks,
        output_conv=conv(c, config.bits_per_symbol),
    )


def featurize(y: np.ndarray, pilots: np.ndarray, num_rx_antennas: int = None) -> np.ndarray:
    """Stack received and pilot channels into the network input layout.

    ``y`` is [..., S, F, Nr] complex, ``pilots`` [S, F] complex with zeros
    off the pilot REs; output is float32 [..., S, F, 2*Nr+2].
    """
    y = np.asarray(y)
    if num_rx_antennas is not None and y.shape[-1] != num_rx_antennas:
        raise ValueError(
            f"antenna count mismatch: grid has {y.shape[-1]}, expected {num_rx_antennas}"
        )
    nr = y.shape[-1]
    chans = []
    for a in range(nr):
        chans.append(y[..., a].real)
        chans.append(y[..., a].imag)
    pil = np.broadcast_to(pilots, y.shape[:-1])
    chans.append(pil.real)
    chans.append(pil.imag)
    return np.stack(chans, axis=-1).astype(np.float32)


def forward(model: NeuralReceiver, features) -> Tensor:
    """Full-precision forward pass to the LLR grid [..., S, F, bits]."""
    x = features if isinstance(features, Tensor) else Tensor(features)
    if x.data.shape[-1] != model.config.input_channels:
        raise ValueError(
            f"feature channel mismatch: got {x.data.shape[-1]}, "
            f"model expects {model.config.input_channels}"
        )
    z = model.input_conv(x)
    for blk in model.blocks:
        z = blk(z)
    return model.output_conv(z)


def model_from_quantized(qmodel: QuantizedModel) -> NeuralReceiver:
    """Materialize a float model with dequantized kernels."""
    config = ReceiverConfig.from_dict(qmodel.model_config)
    model = build(config, seed=0)

    def fetch(table, key):
        if key not in table:
            raise KeyError(f"quantized model is missing the record for {key!r}")
        return table[key]

    for name, layer in model.conv_layers():
        layer.kernel.data = dequantize(fetch(qmodel.kernels, name + ".kernel"))
        layer.bias.data = fetch(qmodel.floats, name + ".bias").astype(np.float32)
    for name, layer in model.norm_layers():
        layer.gamma.data = fetch(qmodel.floats, name + ".gamma").astype(np.float32)
        layer.beta.data = fetch(qmodel.floats, name + ".beta").astype(np.float32)
    return model


def forward_quantized(qmodel: QuantizedModel, features) -> np.ndarray:
    """Weight-only quantized inference: dequantize, then float forward."""
    return forward(model_from_quantized(qmodel), features).data


@dataclass(frozen=True)
class SizeReport:
    """Serialized payload accounting (weight bytes only; scales excluded)."""

    label: str
    weight_payload_bytes: int
    float_payload_bytes: int
    baseline_bytes: int

    @property
    def total_payload_bytes(self) -> int:
        return self.weight_payload_bytes + self.float_payload_bytes

    @property
    def reduction(self) -> float:
        return self.baseline_bytes / self.total_payload_bytes


def model_size_bytes(model_or_qmodel) -> SizeReport:
    """Payload byte accounting mirroring the size-reduction table."""
    obj = model_or_qmodel
    if isinstance(obj, NeuralReceiver):
        kernels = sum(t.data.size for n, t in obj.parameters() if n.endswith(".kernel"))
        others = obj.param_count() - kernels
        return SizeReport("float32", 4 * kernels, 4 * others, 4 * obj.param_count())
    if isinstance(obj, QuantizedModel):
        wbytes = sum(q.payload_nbytes() for q in obj.kernels.values())
        kernels = sum(q.num_elements for q in obj.kernels.values())
        others = sum(v.size for v in obj.floats.values())
        label = (
            f"int{obj.config.bit_width}-"
            + ("perChannel" if obj.config.granularity == "per_channel" else "perTensor")
        )
        return SizeReport(label, wbytes, 4 * others, 4 * (kernels + others))
    if isinstance(obj, Float16Model):
        kernels = sum(v.size for v in obj.kernels.values())
        others = sum(v.size for v in obj.floats.values())
        return SizeReport("float16", 2 * kernels, 4 * others, 4 * (kernels + others))
    raise TypeError(f"unsupported model object: {type(obj).__name__}")
