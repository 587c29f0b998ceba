"""OFDM resource-grid bookkeeping and the single-block transmit chain.

One LDPC codeword occupies each grid: data resource elements are filled
row-major over (OFDM symbol, subcarrier), skipping the pilot symbols;
whatever data REs remain after the codeword carry zero padding bits that
are excluded from block-error accounting.  Pilot OFDM symbols carry a
fixed unit-magnitude QPSK sequence drawn from a dedicated seeded stream,
known to transmitter and receiver alike.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelConfig, apply_channel, generate_channel
from .ldpc import LdpcCode, ldpc_encode
from .modulation import Constellation, map_symbols

__all__ = ["GridSpec", "ResourceGrid", "TxBlock", "pilot_values", "transmit", "LinkSimulator"]

_PILOT_STREAM_TAG = 0x70696C74  # fixed tag so both link ends derive the same pilots


@dataclass(frozen=True)
class GridSpec:
    num_ofdm_symbols: int = 14
    num_subcarriers: int = 28
    pilot_symbol_indices: tuple = (2, 11)  # 0-based; the 3rd and 12th symbols
    num_rx_antennas: int = 2

    def __post_init__(self):
        if self.num_subcarriers < 1 or self.num_ofdm_symbols < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.num_rx_antennas < 1:
            raise ValueError("num_rx_antennas must be >= 1")
        for p in self.pilot_symbol_indices:
            if not 0 <= p < self.num_ofdm_symbols:
                raise ValueError(
                    f"pilot symbol index {p} outside [0, {self.num_ofdm_symbols})"
                )

    @property
    def shape(self) -> tuple:
        return (self.num_ofdm_symbols, self.num_subcarriers)

    def pilot_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[list(self.pilot_symbol_indices), :] = True
        return mask

    def data_positions(self) -> np.ndarray:
        """(i, j) pairs of data REs in fill order (row-major, pilots skipped)."""
        mask = ~self.pilot_mask()
        return np.argwhere(mask)

    @property
    def num_data_res(self) -> int:
        return (self.num_ofdm_symbols - len(set(self.pilot_symbol_indices))) * (
            self.num_subcarriers
        )


def pilot_values(spec: GridSpec) -> np.ndarray:
    """Known pilot grid: QPSK values on pilot REs, 0 elsewhere."""
    rng = np.random.Generator(
        np.random.Philox(
            np.random.SeedSequence(
                (_PILOT_STREAM_TAG, spec.num_ofdm_symbols, spec.num_subcarriers)
            )
        )
    )
    rows = sorted(set(spec.pilot_symbol_indices))
    quadrants = rng.integers(0, 4, len(rows) * spec.num_subcarriers)
    vals = np.exp(1j * (np.pi / 4.0 + np.pi / 2.0 * quadrants))
    grid = np.zeros(spec.shape, dtype=np.complex128)
    grid[rows, :] = vals.reshape(-1, spec.num_subcarriers)
    return grid


@dataclass
class ResourceGrid:
    """One simulated block: transmitted grid, channel, received grid, noise."""

    spec: GridSpec
    x: np.ndarray  # [S, F] complex transmitted symbols (data + pilots)
    h: np.ndarray  # [S, F, Nr] complex channel
    y: np.ndarray  # [S, F, Nr] complex received
    n: np.ndarray  # [S, F, Nr] complex noise realization
    noise_var: float

    def model_residual(self) -> np.ndarray:
        """y - h*x - n; exactly zero by construction."""
        return self.y - self.h * self.x[..., None] - self.n


@dataclass
class TxBlock:
    """Transmit-side payload bookkeeping for one grid."""

    message: np.ndarray  # [k] information bits
    codeword: np.ndarray  # [n] coded bits
    grid_bits: np.ndarray  # [S, F, bits_per_symbol]; zeros on pilot REs
    x: np.ndarray  # [S, F] complex
    num_padding_bits: int


def transmit(
    spec: GridSpec,
    constellation: Constellation,
    code: LdpcCode,
    message: np.ndarray,
) -> TxBlock:
    """Encode, map and place one codeword onto a grid (plus pilots)."""
    bps = constellation.bits_per_symbol
    capacity = spec.num_data_res * bps
    if code.n > capacity:
        raise ValueError(
            f"codeword ({code.n} bits) does not fit the grid ({capacity} data bits)"
        )
    codeword = ldpc_encode(message, code)
    pad = capacity - code.n
    bits = np.concatenate([codeword, np.zeros(pad, dtype=np.int8)])
    symbols = map_symbols(bits, constellation)

    x = pilot_values(spec).copy()
    pos = spec.data_positions()
    x[pos[:, 0], pos[:, 1]] = symbols

    grid_bits = np.zeros(spec.shape + (bps,), dtype=np.int8)
    grid_bits[pos[:, 0], pos[:, 1], :] = bits.reshape(-1, bps)
    return TxBlock(
        message=np.asarray(message, dtype=np.int8),
        codeword=codeword,
        grid_bits=grid_bits,
        x=x,
        num_padding_bits=pad,
    )


def extract_data_llrs(llr_grid: np.ndarray, spec: GridSpec, n_coded: int) -> np.ndarray:
    """Pull per-bit LLRs of the codeword positions out of a [S,F,bps] grid."""
    pos = spec.data_positions()
    flat = llr_grid[pos[:, 0], pos[:, 1], :].reshape(-1)
    return flat[:n_coded]


@dataclass
class LinkSimulator:
    """Bundles grid, constellation and code; samples complete blocks."""

    spec: GridSpec = field(default_factory=GridSpec)
    constellation: Constellation = None
    code: LdpcCode = None

    def __post_init__(self):
        if self.constellation is None:
            from .modulation import get_constellation

            self.constellation = get_constellation("qpsk")
        if self.code is None:
            self.code = LdpcCode.default()
        # fail fast if the codeword cannot fit this grid/modulation
        capacity = self.spec.num_data_res * self.constellation.bits_per_symbol
        if self.code.n > capacity:
            raise ValueError(
                f"grid capacity {capacity} bits < codeword length {self.code.n}"
            )

    def sample_block(
        self,
        rng: np.random.Generator,
        channel_config: ChannelConfig,
        noise_var: float,
    ) -> tuple:
        """Draw (TxBlock, ResourceGrid) with message, channel and noise from rng."""
        message = rng.integers(0, 2, self.code.k).astype(np.int8)
        tx = transmit(self.spec, self.constellation, self.code, message)
        h = generate_channel(channel_config, self.spec, rng)
        y, n = apply_channel(tx.x, h, noise_var, rng)
        grid = ResourceGrid(spec=self.spec, x=tx.x, h=h, y=y, n=n, noise_var=noise_var)
        return tx, grid
