"""Tapped-delay-line Rayleigh fading with Doppler, applied per resource element.

The channel is realized directly in the frequency domain: taps with an
exponential power-delay profile (unit total power) evolve across OFDM
symbols following the classical Jakes autocorrelation J0(2*pi*fd*dt),
and the per-subcarrier response is the DFT of the taps at each
subcarrier's frequency offset.  Antennas fade independently.

OFDM symbol duration is taken as 1/subcarrier_spacing (no cyclic-prefix
overhead).  A ``profile="awgn"`` configuration short-circuits to h = 1
everywhere, which is handy for calibration and demapper-only training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import j0

__all__ = [
    "ChannelConfig",
    "MOBILITY_TIERS",
    "tap_profile",
    "generate_channel",
    "apply_channel",
    "ebno_to_noise_var",
]

SPEED_OF_LIGHT = 299_792_458.0

# UE speed ranges (m/s) for the three mobility scenarios
MOBILITY_TIERS = {
    "low": (0.0, 5.1),
    "medium": (10.0, 20.0),
    "high": (25.0, 40.0),
}


@dataclass(frozen=True)
class ChannelConfig:
    num_taps: int = 3
    rms_delay_spread: float = 30e-9
    ue_velocity: float = 0.0
    carrier_freq: float = 3.5e9
    subcarrier_spacing: float = 30e3
    profile: str = "tdl"  # "tdl" or "awgn"

    def __post_init__(self):
        if self.num_taps < 1:
            raise ValueError("num_taps must be >= 1")
        for name in ("rms_delay_spread", "ue_velocity", "carrier_freq", "subcarrier_spacing"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.profile not in ("tdl", "awgn"):
            raise ValueError(f"profile must be 'tdl' or 'awgn', got {self.profile!r}")

    @property
    def doppler_hz(self) -> float:
        return self.ue_velocity * self.carrier_freq / SPEED_OF_LIGHT


def tap_profile(config: ChannelConfig) -> tuple:
    """Tap delays (s) and powers; exponential decay, powers sum to 1."""
    L = config.num_taps
    if L == 1 or config.rms_delay_spread == 0.0:
        return np.zeros(max(L, 1)), np.concatenate([[1.0], np.zeros(max(L, 1) - 1)])
    # span a few time constants so the discrete profile tracks the target decay
    delays = np.linspace(0.0, 4.0 * config.rms_delay_spread, L)
    powers = np.exp(-delays / config.rms_delay_spread)
    powers /= powers.sum()
    return delays, powers


def _jakes_factor(num_symbols: int, fd: float, t_sym: float) -> np.ndarray:
    """PSD square root of the symbol-time Jakes correlation matrix."""
    lags = np.arange(num_symbols)
    r = j0(2.0 * np.pi * fd * t_sym * lags)
    corr = r[np.abs(lags[:, None] - lags[None, :])]
    w, v = np.linalg.eigh(corr)
    return v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))


def generate_channel(config: ChannelConfig, grid, rng: np.random.Generator) -> np.ndarray:
    """Frequency response per (OFDM symbol, subcarrier, antenna), complex128.

    E[|h|^2] = 1 per resource element.  Deterministic given the generator
    state; draws a fixed number of normals regardless of velocity.
    """
    s, f, nr = grid.num_ofdm_symbols, grid.num_subcarriers, grid.num_rx_antennas
    if config.profile == "awgn":
        return np.ones((s, f, nr), dtype=np.complex128)

    delays, powers = tap_profile(config)
    L = delays.size
    z = rng.standard_normal((2, s, L, nr))
    taps = (z[0] + 1j * z[1]) / np.sqrt(2.0)

    fd = config.doppler_hz
    if fd > 0.0:
        t_sym = 1.0 / config.subcarrier_spacing
        fac = _jakes_factor(s, fd, t_sym)
        taps = np.einsum("st,tla->sla", fac, taps)
    else:
        taps = np.broadcast_to(taps[:1], taps.shape).copy()

    taps = taps * np.sqrt(powers)[None, :, None]
    freqs = np.arange(f) * config.subcarrier_spacing
    steering = np.exp(-2j * np.pi * freqs[:, None] * delays[None, :])  # [F, L]
    return np.einsum("sla,fl->sfa", taps, steering)


def apply_channel(
    x: np.ndarray, h: np.ndarray, noise_var: float, rng: np.random.Generator
) -> tuple:
    """Per-RE reception y = h*x + n; returns (y, n) with n retained.

    Noise is circular complex Gaussian with total variance ``noise_var``
    per RE per antenna (noise_var/2 per real dimension).  The noise draw
    happens even for noise_var = 0 so the generator stream advances the
    same way at every operating point.
    """
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    z = rng.standard_normal((2,) + h.shape)
    n = np.sqrt(noise_var / 2.0) * (z[0] + 1j * z[1])
    hx = h * np.asarray(x)[..., None]
    y = hx + n
    # retain the noise as y - h*x so the reception model holds bit-exactly
    return y, y - hx


def ebno_to_noise_var(ebno_db: float, bits_per_symbol: int, code_rate: float) -> float:
    """Noise variance for unit-energy symbols at a given Eb/N0 in dB."""
    if bits_per_symbol < 1:
        raise ValueError("bits_per_symbol must be >= 1")
    if not 0.0 < code_rate <= 1.0:
        raise ValueError("code_rate must be in (0, 1]")
    return 1.0 / (code_rate * bits_per_symbol * 10.0 ** (ebno_db / 10.0))
