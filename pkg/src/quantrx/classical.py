"""Classical receiver chain: LS estimation, nearest-neighbor interpolation,
LMMSE combining and max-log soft demapping.

Bias convention, used consistently by the equalizer, the demapper and the
tests: ``lmmse_equalize`` returns the MMSE-combined symbol estimate

    x_hat = h^H y / (||h||^2 + sigma^2)

whose signal component is shrunk by mu = ||h||^2 / (||h||^2 + sigma^2),
together with the variance of its noise component,
sigma^2 ||h||^2 / (||h||^2 + sigma^2)^2.  The demapper expects an
*unbiased* pair, so ``receive_classical`` rescales to x_hat/mu with
variance sigma^2/||h||^2 before demapping; the two pairs give identical
max-log LLRs in exact arithmetic.

LLR sign convention: positive favors bit 1.
"""

from __future__ import annotations

import numpy as np

from .link import GridSpec, ResourceGrid, pilot_values
from .modulation import Constellation

__all__ = [
    "ls_estimate",
    "nn_interpolate",
    "lmmse_equalize",
    "soft_demap",
    "receive_classical",
]

_TINY_VAR = 1e-30  # demapper floor so a zero-noise grid yields huge finite LLRs


def ls_estimate(y: np.ndarray, pilots: np.ndarray, pilot_mask: np.ndarray) -> np.ndarray:
    """Least-squares channel estimate h_hat = y / x_pilot at pilot REs.

    Returns a full [S, F, Nr] array that is zero off the pilot REs.
    """
    pilots = np.asarray(pilots)
    if np.any(pilots[pilot_mask] == 0):
        raise ValueError("pilot values must be nonzero for LS estimation")
    est = np.zeros_like(y)
    est[pilot_mask] = y[pilot_mask] / pilots[pilot_mask][..., None]
    return est


def nn_interpolate(
    pilot_estimates: np.ndarray, pilot_mask: np.ndarray
) -> np.ndarray:
    """Spread pilot-RE estimates to the full grid by nearest pilot.

    Distance is Euclidean in (symbol, subcarrier) index space; ties break
    toward the pilot with the smaller symbol index, then the smaller
    subcarrier index.
    """
    pil = np.argwhere(pilot_mask)
    if pil.shape[0] == 0:
        raise ValueError("need at least one pilot RE to interpolate")
    s, f = pilot_mask.shape
    grid = np.stack(
        np.meshgrid(np.arange(s), np.arange(f), indexing="ij"), axis=-1
    ).reshape(-1, 2)
    d2 = ((grid[:, None, :] - pil[None, :, :]) ** 2).sum(axis=2)
    # lexicographic (distance^2, pilot symbol, pilot subcarrier) via argmin
    # over a strictly order-preserving composite key
    key = d2 * (s * f) * (s + f) + pil[:, 0][None, :] * f + pil[:, 1][None, :]
    nearest = key.argmin(axis=1)
    src = pil[nearest]
    out = pilot_estimates[src[:, 0], src[:, 1]].reshape(s, f, -1)
    return out


def lmmse_equalize(y: np.ndarray, h_hat: np.ndarray, noise_var: float) -> tuple:
    """SIMO LMMSE combining per RE; returns (x_hat, post_noise_var).

    See the module docstring for the bias convention.  REs with a zero
    channel estimate and zero noise variance are erasures: x_hat = 0 with
    infinite post_noise_var, which demaps to LLR 0.
    """
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    hh = (np.abs(h_hat) ** 2).sum(axis=-1)
    denom = hh + noise_var
    num = (np.conj(h_hat) * y).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_hat = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)
        post = np.where(
            denom > 0, noise_var * hh / np.where(denom > 0, denom, 1.0) ** 2, np.inf
        )
    post = np.where((hh == 0) & (noise_var == 0), np.inf, post)
    return x_hat, post


def soft_demap(
    x_hat: np.ndarray, post_noise_var: np.ndarray, constellation: Constellation
) -> np.ndarray:
    """Max-log bit LLRs against an unbiased symbol estimate.

    LLR_k = (min_{s: bit_k=0} |x - s|^2 - min_{s: bit_k=1} |x - s|^2) / v.
    Infinite variance yields LLR 0 (erasure).
    """
    x = np.asarray(x_hat)
    v = np.broadcast_to(np.asarray(post_noise_var, dtype=np.float64), x.shape)
    d2 = np.abs(x[..., None] - constellation.points) ** 2
    m = constellation.bits_per_symbol
    llr = np.empty(x.shape + (m,), dtype=np.float64)
    for k in range(m):
        ones = constellation.bit_is_one[k]
        d0 = d2[..., ~ones].min(axis=-1)
        d1 = d2[..., ones].min(axis=-1)
        with np.errstate(invalid="ignore"):
            llr[..., k] = (d0 - d1) / np.maximum(v, _TINY_VAR)
    llr[~np.isfinite(v)] = 0.0
    return llr


def receive_classical(
    grid: ResourceGrid, mode: str, noise_var: float, constellation: Constellation
) -> np.ndarray:
    """LS or perfect-CSI chain down to per-RE bit LLRs ([S, F, bits])."""
    if mode == "perfect_csi":
        h_hat = grid.h
    elif mode == "ls":
        mask = grid.spec.pilot_mask()
        pilots = pilot_values(grid.spec)
        est = ls_estimate(grid.y, pilots, mask)
        h_hat = nn_interpolate(est, mask)
    else:
        raise ValueError(f"mode must be 'ls' or 'perfect_csi', got {mode!r}")

    x_mmse, post = lmmse_equalize(grid.y, h_hat, noise_var)
    hh = (np.abs(h_hat) ** 2).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(hh > 0, hh / (hh + noise_var), 1.0)
        x_unbiased = x_mmse / mu
        v_unbiased = np.where(hh > 0, noise_var / np.where(hh > 0, hh, 1.0), np.inf)
    return soft_demap(x_unbiased, v_unbiased, constellation)
