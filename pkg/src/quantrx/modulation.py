"""Gray-mapped square QAM constellations with unit average energy.

Bit-to-point convention, documented once here and relied on everywhere:

  - a symbol carries m bits, first m/2 select the I level, last m/2 the Q
    level (bit 0 is the most significant bit of each half);
  - each half is a Gray label g; the level index is i = gray^-1(g) and the
    amplitude is (M - 1 - 2*i) / norm with M = 2^(m/2) levels, so the
    all-zero label lands on the most positive amplitude.

QPSK therefore maps bits 00 -> (1+1j)/sqrt(2).  Adjacent points along
either axis differ in exactly one bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Constellation", "get_constellation", "map_symbols", "hard_demap"]


def _gray_to_binary(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = 1
    while (b >> shift).any():
        b ^= b >> shift
        shift <<= 1
    return b


@dataclass(frozen=True)
class Constellation:
    name: str
    bits_per_symbol: int
    points: np.ndarray  # complex128, indexed by integer bit label (MSB first)
    bit_is_one: np.ndarray  # bool [bits_per_symbol, 2^m]: label has bit k set

    @property
    def order(self) -> int:
        return self.points.size


def _build_square_qam(name: str, bits_per_symbol: int) -> Constellation:
    if bits_per_symbol % 2 != 0 or bits_per_symbol < 2:
        raise ValueError("square QAM needs an even number of bits per symbol")
    half = bits_per_symbol // 2
    m_axis = 1 << half
    labels = np.arange(1 << bits_per_symbol)
    g_i = labels >> half
    g_q = labels & (m_axis - 1)
    idx_i = _gray_to_binary(g_i)
    idx_q = _gray_to_binary(g_q)
    norm = np.sqrt(2.0 * (m_axis**2 - 1) / 3.0)
    amp_i = (m_axis - 1 - 2 * idx_i) / norm
    amp_q = (m_axis - 1 - 2 * idx_q) / norm
    points = amp_i + 1j * amp_q
    bit_is_one = np.zeros((bits_per_symbol, labels.size), dtype=bool)
    for k in range(bits_per_symbol):
        bit_is_one[k] = (labels >> (bits_per_symbol - 1 - k)) & 1 == 1
    return Constellation(name, bits_per_symbol, points, bit_is_one)


_REGISTRY = {
    "qpsk": lambda: _build_square_qam("qpsk", 2),
    "16qam": lambda: _build_square_qam("16qam", 4),
    "64qam": lambda: _build_square_qam("64qam", 6),
}
_CACHE: dict = {}


def get_constellation(name: str) -> Constellation:
    key = name.lower()
    if key not in _REGISTRY:
        raise ValueError(f"unknown constellation {name!r}; choose from {sorted(_REGISTRY)}")
    if key not in _CACHE:
        _CACHE[key] = _REGISTRY[key]()
    return _CACHE[key]


def map_symbols(bits: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Pack bits (m per symbol, MSB first) into complex symbols."""
    bits = np.asarray(bits).astype(np.int64).ravel()
    m = constellation.bits_per_symbol
    if bits.size % m != 0:
        raise ValueError(f"bit count {bits.size} is not a multiple of {m}")
    groups = bits.reshape(-1, m)
    weights = 1 << np.arange(m - 1, -1, -1)
    labels = groups @ weights
    return constellation.points[labels]


def hard_demap(symbols: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Nearest-point decision; returns the bit array (m per symbol)."""
    symbols = np.asarray(symbols).ravel()
    d2 = np.abs(symbols[:, None] - constellation.points[None, :]) ** 2
    labels = d2.argmin(axis=1)
    m = constellation.bits_per_symbol
    shifts = np.arange(m - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).astype(np.int8).ravel()
