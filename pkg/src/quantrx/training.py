"""Training loop for the neural receiver.

The objective is binary cross-entropy between transmitted coded bits and
the network's LLR outputs, averaged over the batch and all data REs
(pilot REs carry no bits and are excluded via the loss mask), plus an L2
penalty on the conv kernels whose gradient contribution 2*l2*W is added
analytically after backprop.

Each iteration draws its own counter-keyed RNG substream from
(seed, iteration), so a run is reproducible and restartable.  Channel
and mobility randomization rotate on fixed periods: the tap profile
every ``channel_rotation_period`` iterations and the velocity tier every
``velocity_rotation_period`` iterations, while delay spread, velocity
and SNR are redrawn uniformly per sample within the active ranges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import MOBILITY_TIERS, ChannelConfig, ebno_to_noise_var
from .link import LinkSimulator, pilot_values
from .receiver import NeuralReceiver, featurize, forward
from .tensor import Tensor

__all__ = [
    "TrainConfig",
    "TrainingDiverged",
    "AdamState",
    "bce_with_logits",
    "adam_init",
    "adam_step",
    "train",
]


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 500
    batch_size: int = 32
    learning_rate: float = 1e-3
    l2_coeff: float = 1e-7
    snr_range_db: tuple = (-2.0, 15.0)
    velocity_tiers: tuple = ("low",)
    channel_taps_choices: tuple = (4, 6, 8)
    rms_delay_spread_range: tuple = (10e-9, 100e-9)
    channel_rotation_period: int = 100
    velocity_rotation_period: int = 1000
    channel_profile: str = "tdl"  # "awgn" forces h = 1 (calibration runs)
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.l2_coeff < 0:
            raise ValueError("l2_coeff must be >= 0")
        lo, hi = self.snr_range_db
        if lo > hi:
            raise ValueError("snr_range_db must be (lo, hi) with lo <= hi")
        for tier in self.velocity_tiers:
            if tier not in MOBILITY_TIERS:
                raise ValueError(f"unknown velocity tier {tier!r}")


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; carries the trace collected so far."""

    def __init__(self, message: str, trace: list):
        super().__init__(message)
        self.trace = trace


def bce_with_logits(bits: np.ndarray, logits, mask: np.ndarray = None) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logit) against {0,1} targets.

    Evaluated in the numerically stable softplus form, finite for any
    finite logit.  ``mask`` (broadcastable to ``bits``) selects which
    positions enter the mean; by default all do.  The gradient with
    respect to the logits is (sigmoid(L) - B) * mask / mask_count.
    """
    logits_t = logits if isinstance(logits, Tensor) else Tensor(logits)
    bits = np.asarray(bits, dtype=np.float64)
    if bits.shape != logits_t.data.shape:
        raise ValueError(
            f"shape mismatch: bits {bits.shape} vs logits {logits_t.data.shape}"
        )
    if mask is None:
        weights = np.ones_like(bits)
    else:
        weights = np.broadcast_to(np.asarray(mask, dtype=np.float64), bits.shape)
    count = weights.sum()
    if count == 0:
        raise ValueError("loss mask selects no positions")

    ell = logits_t.data.astype(np.float64)
    # max(L,0) - L*B + log(1 + exp(-|L|))
    per_elem = np.maximum(ell, 0.0) - ell * bits + np.log1p(np.exp(-np.abs(ell)))
    value = (per_elem * weights).sum() / count

    out = Tensor(np.float32(value))
    if logits_t.requires_grad:
        out.requires_grad = True
        out._parents = (logits_t,)

        def _backward():
            sig = 1.0 / (1.0 + np.exp(-ell))
            logits_t._accumulate(float(out.grad) * (sig - bits) * weights / count)

        out._backward = _backward
    return out


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: list, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p.data) for p in params],
        v=[np.zeros_like(p.data) for p in params],
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(params: list, grads: list, state: AdamState, lr: float) -> tuple:
    """One bias-corrected Adam update, in place; returns (params, state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state must align")
    for i, g in enumerate(grads):
        if g is None or not np.isfinite(g).all():
            raise FloatingPointError(
                f"non-finite gradient for parameter index {i}; aborting the step"
            )
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = g.astype(np.float32, copy=False)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p.data -= (lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(np.float32)
    return params, state


def _iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, iteration))))


def train(
    model: NeuralReceiver,
    link: LinkSimulator,
    config: TrainConfig,
    log_every: int = 0,
) -> list:
    """Train in place; returns the loss trace [(iteration, loss, l2_term)].

    Deterministic given (model state, config).  Raises TrainingDiverged,
    carrying the partial trace, if the loss goes non-finite.
    """
    model.set_trainable(True)
    params = [t for _, t in model.parameters()]
    names = [n for n, _ in model.parameters()]
    kernel_idx = [i for i, n in enumerate(names) if n.endswith(".kernel")]
    state = adam_init(params)
    pilots = pilot_values(link.spec)
    mask = (~link.spec.pilot_mask())[None, :, :, None]  # [1, S, F, 1]
    bps = link.constellation.bits_per_symbol
    trace = []

    for it in range(config.iterations):
        rng = _iteration_rng(config.seed, it)
        taps = config.channel_taps_choices[
            (it // config.channel_rotation_period) % len(config.channel_taps_choices)
        ]
        tier = config.velocity_tiers[
            (it // config.velocity_rotation_period) % len(config.velocity_tiers)
        ]
        vlo, vhi = MOBILITY_TIERS[tier]

        feats = []
        bit_targets = []
        for _ in range(config.batch_size):
            chan = ChannelConfig(
                num_taps=taps,
                rms_delay_spread=float(rng.uniform(*config.rms_delay_spread_range)),
                ue_velocity=float(rng.uniform(vlo, vhi)),
                profile=config.channel_profile,
            )
            ebno = float(rng.uniform(*config.snr_range_db))
            nv = ebno_to_noise_var(ebno, bps, link.code.rate)
            tx, grid = link.sample_block(rng, chan, nv)
            feats.append(featurize(grid.y, pilots))
            bit_targets.append(tx.grid_bits)
        features = Tensor(np.stack(feats))
        bits = np.stack(bit_targets)

        logits = forward(model, features)
        loss = bce_with_logits(bits, logits, mask)
        l2_term = config.l2_coeff * sum(
            float(np.sum(params[i].data.astype(np.float64) ** 2)) for i in kernel_idx
        )
        total = float(loss.data) + l2_term
        if not np.isfinite(total):
            raise TrainingDiverged(
                f"loss became non-finite at iteration {it}", trace
            )

        for p in params:
            p.zero_grad()
        loss.backward()
        grads = [
            p.grad if p.grad is not None else np.zeros_like(p.data) for p in params
        ]
        if config.l2_coeff > 0:
            for i in kernel_idx:
                grads[i] = grads[i] + 2.0 * config.l2_coeff * params[i].data
        adam_step(params, grads, state, config.learning_rate)
        trace.append((it, total, l2_term))
        if log_every and (it % log_every == 0 or it == config.iterations - 1):
            recent = np.mean([row[1] for row in trace[-log_every:]])
            print(f"iter {it:6d}  loss {total:.5f}  window {recent:.5f}", flush=True)
    model.set_trainable(False)
    return trace
