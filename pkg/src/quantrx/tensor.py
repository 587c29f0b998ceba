"""Minimal dense-tensor autodiff core.

Provides the four forward operations the receiver stack needs (2-D
convolution with dilation, layer normalization, ReLU, elementwise add)
plus reverse-mode gradients for all of them.  Values are float32 numpy
arrays; convolution reductions accumulate in float64 before the result
is stored back as float32.

Conventions:
  - convolution is cross-correlation (no kernel flip), stride 1,
    "same" zero padding (extra row/col of padding goes bottom/right);
  - tensors are channels-last: [H, W, C] or [N, H, W, C];
  - ReLU subgradient at exactly 0 is 0;
  - layer normalization acts over the last (channel) axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Tensor", "ConvSpec", "conv2d", "layer_norm", "relu", "add"]


class Tensor:
    """A float32 array plus optional autodiff bookkeeping.

    Ops record parents and a backward closure only when gradient flow is
    required, so inference over frozen weights pays no tape overhead.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float32)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g.astype(np.float32, copy=False)

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar result back to every leaf."""
        if self.data.shape != ():
            raise ValueError(
                f"backward() requires a scalar, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones((), dtype=np.float32)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make_result(data64: np.ndarray, parents: tuple, backward_factory) -> Tensor:
    out = Tensor(np.asarray(data64, dtype=np.float32))
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_factory(out)
    return out


@dataclass(frozen=True)
class ConvSpec:
    """Static description of one convolution layer (always "same" padding)."""

    in_channels: int
    out_channels: int
    kernel: tuple = (3, 3)
    dilation: tuple = (1, 1)

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if any(k < 1 for k in self.kernel):
            raise ValueError(f"kernel entries must be >= 1, got {self.kernel}")
        if any(d < 1 for d in self.dilation):
            raise ValueError(f"dilation entries must be >= 1, got {self.dilation}")

    @property
    def kernel_shape(self) -> tuple:
        kh, kw = self.kernel
        return (kh, kw, self.in_channels, self.out_channels)


def _same_padding(kernel: tuple, dilation: tuple) -> tuple:
    # effective kernel extent under dilation; extra padding goes bottom/right
    eh = (kernel[0] - 1) * dilation[0] + 1
    ew = (kernel[1] - 1) * dilation[1] + 1
    pt = (eh - 1) // 2
    pl = (ew - 1) // 2
    return pt, eh - 1 - pt, pl, ew - 1 - pl


def conv2d(x, kernel, bias, spec: ConvSpec) -> Tensor:
    """Dilated same-padded cross-correlation: [.., H, W, Cin] -> [.., H, W, Cout]."""
    x, kernel, bias = _as_tensor(x), _as_tensor(kernel), _as_tensor(bias)
    if kernel.data.shape != spec.kernel_shape:
        raise ValueError(
            f"kernel shape {kernel.data.shape} does not match spec {spec.kernel_shape}"
        )
    if x.data.ndim not in (3, 4):
        raise ValueError(f"conv2d input must be [H,W,C] or [N,H,W,C], got ndim={x.data.ndim}")
    if x.data.shape[-1] != spec.in_channels:
        raise ValueError(
            f"channel axis mismatch: input has {x.data.shape[-1]} channels, "
            f"spec expects {spec.in_channels}"
        )
    if bias.data.shape != (spec.out_channels,):
        raise ValueError(
            f"bias axis mismatch: bias shape {bias.data.shape}, "
            f"expected ({spec.out_channels},)"
        )

    batched = x.data.ndim == 4
    x4 = x.data if batched else x.data[None]
    n, h, w, cin = x4.shape
    kh, kw = spec.kernel
    dh, dw = spec.dilation
    pt, pb, pl, pr = _same_padding(spec.kernel, spec.dilation)

    xp = np.zeros((n, h + pt + pb, w + pl + pr, cin), dtype=np.float64)
    xp[:, pt : pt + h, pl : pl + w, :] = x4
    k64 = kernel.data.astype(np.float64)

    out = np.empty((n, h, w, spec.out_channels), dtype=np.float64)
    out[:] = bias.data.astype(np.float64)
    for u in range(kh):
        for v in range(kw):
            patch = xp[:, u * dh : u * dh + h, v * dw : v * dw + w, :]
            out += (patch.reshape(n * h * w, cin) @ k64[u, v]).reshape(
                n, h, w, spec.out_channels
            )
    if not batched:
        out = out[0]

    def backward_factory(result):
        def _backward():
            g = result.grad.astype(np.float64)
            g4 = g if batched else g[None]
            if bias.requires_grad:
                bias._accumulate(g4.sum(axis=(0, 1, 2)))
            gflat = g4.reshape(n * h * w, spec.out_channels)
            if kernel.requires_grad:
                dk = np.empty_like(k64)
                for u in range(kh):
                    for v in range(kw):
                        patch = xp[:, u * dh : u * dh + h, v * dw : v * dw + w, :]
                        dk[u, v] = patch.reshape(n * h * w, cin).T @ gflat
                kernel._accumulate(dk)
            if x.requires_grad:
                dxp = np.zeros_like(xp)
                for u in range(kh):
                    for v in range(kw):
                        dxp[:, u * dh : u * dh + h, v * dw : v * dw + w, :] += (
                            gflat @ k64[u, v].T
                        ).reshape(n, h, w, cin)
                dx = dxp[:, pt : pt + h, pl : pl + w, :]
                x._accumulate(dx if batched else dx[0])

        return _backward

    return _make_result(out, (x, kernel, bias), backward_factory)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the channel (last) axis, then scale and shift."""
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    c = x.data.shape[-1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ValueError(
            f"channel axis mismatch: input has {c} channels, "
            f"gamma {gamma.data.shape}, beta {beta.data.shape}"
        )

    x64 = x.data.astype(np.float64)
    mean = x64.mean(axis=-1, keepdims=True)
    var = x64.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x64 - mean) * inv
    out = xhat * gamma.data + beta.data

    def backward_factory(result):
        def _backward():
            g = result.grad.astype(np.float64)
            if gamma.requires_grad:
                axes = tuple(range(g.ndim - 1))
                gamma._accumulate((g * xhat).sum(axis=axes))
            if beta.requires_grad:
                axes = tuple(range(g.ndim - 1))
                beta._accumulate(g.sum(axis=axes))
            if x.requires_grad:
                gg = g * gamma.data.astype(np.float64)
                m1 = gg.mean(axis=-1, keepdims=True)
                m2 = (gg * xhat).mean(axis=-1, keepdims=True)
                x._accumulate(inv * (gg - m1 - xhat * m2))

        return _backward

    return _make_result(out, (x, gamma, beta), backward_factory)


def relu(x) -> Tensor:
    """Elementwise max(0, x)."""
    x = _as_tensor(x)
    out = np.maximum(x.data, np.float32(0.0))

    def backward_factory(result):
        def _backward():
            if x.requires_grad:
                x._accumulate(result.grad * (x.data > 0))

        return _backward

    return _make_result(out, (x,), backward_factory)


def add(a, b) -> Tensor:
    """Elementwise sum of two equal-shape tensors (residual skip)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = a.data + b.data

    def backward_factory(result):
        def _backward():
            if a.requires_grad:
                a._accumulate(result.grad)
            if b.requires_grad:
                b._accumulate(result.grad)

        return _backward

    return _make_result(out, (a, b), backward_factory)
