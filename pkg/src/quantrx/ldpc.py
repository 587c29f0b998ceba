"""Systematic LDPC encoding and normalized min-sum decoding.

The shipped code is a quasi-cyclic rate-1/2 code with n=648, built from
27x27 circulant permutation blocks: twelve weight-3 information block
columns plus a block-bidiagonal parity part, which keeps the parity
square invertible by construction.  The parity-check matrix lives in
``data/ldpc_n648_k324.txt`` as one line of column indices per check row.

Encoding is systematic: codeword = [message, parity] with the parity
solve precomputed once over GF(2).  The decoder is a flooding normalized
min-sum (scale 0.8) with per-codeword early exit on a zero syndrome, and
is batched across codewords.

LLR convention matches the rest of the package: positive means bit 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np

__all__ = ["LdpcCode", "ldpc_encode", "ldpc_decode", "gf2_rank"]

MINSUM_SCALE = 0.8
DEFAULT_CODE_RESOURCE = "ldpc_n648_k324.txt"


def gf2_row_reduce(mat: np.ndarray) -> tuple:
    """In-place-free GF(2) row reduction; returns (reduced, pivot_cols)."""
    a = mat.astype(np.uint8).copy()
    rows, cols = a.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hit = np.nonzero(a[r:, c])[0]
        if hit.size == 0:
            continue
        p = r + hit[0]
        if p != r:
            a[[r, p]] = a[[p, r]]
        elim = np.nonzero(a[:, c])[0]
        elim = elim[elim != r]
        a[elim] ^= a[r]
        pivots.append(c)
        r += 1
    return a, pivots


def gf2_rank(mat: np.ndarray) -> int:
    _, pivots = gf2_row_reduce(mat)
    return len(pivots)


def gf2_solve_parity(h: np.ndarray, k: int) -> np.ndarray:
    """Solve B p = A u for p given H = [A | B]; returns E with p = E u (mod 2).

    B is the square submatrix of the last m columns and must be invertible.
    """
    m = h.shape[0]
    a = h[:, :k].astype(np.uint8)
    b = h[:, k:].astype(np.uint8)
    aug = np.concatenate([b, a], axis=1)
    red, pivots = gf2_row_reduce(aug)
    if pivots[:m] != list(range(m)):
        raise ValueError("parity submatrix of H is singular; cannot encode")
    return red[:, m:]


@dataclass
class LdpcCode:
    """Parity-check description plus the derived systematic encoder."""

    n: int
    m: int
    row_cols: list  # list of sorted int arrays, one per check row
    _encode_mat: np.ndarray = field(default=None, repr=False)
    _edges: dict = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.n - self.m

    @property
    def rate(self) -> float:
        return self.k / self.n

    def dense_h(self) -> np.ndarray:
        h = np.zeros((self.m, self.n), dtype=np.uint8)
        for r, cols in enumerate(self.row_cols):
            h[r, cols] = 1
        return h

    @classmethod
    def from_text(cls, text: str) -> "LdpcCode":
        lines = [ln.strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln and not ln.startswith("#")]
        n, m = (int(tok) for tok in lines[0].split())
        if len(lines) - 1 != m:
            raise ValueError(f"expected {m} check rows, found {len(lines) - 1}")
        row_cols = []
        for ln in lines[1:]:
            cols = np.array(sorted(int(t) for t in ln.split()), dtype=np.int64)
            if cols.size and (cols[0] < 0 or cols[-1] >= n):
                raise ValueError("column index out of range in parity-check file")
            row_cols.append(cols)
        return cls(n=n, m=m, row_cols=row_cols)

    @classmethod
    def from_file(cls, path) -> "LdpcCode":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    @classmethod
    def default(cls) -> "LdpcCode":
        text = (
            resources.files("quantrx.data")
            .joinpath(DEFAULT_CODE_RESOURCE)
            .read_text(encoding="utf-8")
        )
        return cls.from_text(text)

    # -- derived structures, built lazily and cached ---------------------

    def encode_matrix(self) -> np.ndarray:
        if self._encode_mat is None:
            self._encode_mat = gf2_solve_parity(self.dense_h(), self.k).astype(np.int32)
        return self._encode_mat

    def edge_structure(self) -> dict:
        """Flat edge arrays for the vectorized decoder (row-major order)."""
        if self._edges is not None:
            return self._edges
        col_of_edge = np.concatenate(self.row_cols).astype(np.int64)
        degrees = np.array([c.size for c in self.row_cols], dtype=np.int64)
        row_starts = np.concatenate([[0], np.cumsum(degrees)[:-1]])
        row_of_edge = np.repeat(np.arange(self.m), degrees)
        pos_in_row = np.concatenate([np.arange(d) for d in degrees])
        order_by_col = np.argsort(col_of_edge, kind="stable")
        col_sorted = col_of_edge[order_by_col]
        col_counts = np.bincount(col_of_edge, minlength=self.n)
        if (col_counts == 0).any():
            raise ValueError("parity-check matrix has an unprotected column")
        col_starts = np.concatenate([[0], np.cumsum(col_counts)[:-1]])
        self._edges = {
            "col_of_edge": col_of_edge,
            "row_starts": row_starts,
            "row_of_edge": row_of_edge,
            "pos_in_row": pos_in_row,
            "order_by_col": order_by_col,
            "col_sorted": col_sorted,
            "col_starts": col_starts,
            "num_edges": col_of_edge.size,
        }
        return self._edges


def ldpc_encode(bits: np.ndarray, code: LdpcCode) -> np.ndarray:
    """Systematic encode of k message bits into an n-bit codeword."""
    u = np.asarray(bits).astype(np.int32).ravel()
    if u.size != code.k:
        raise ValueError(f"message length {u.size} != k={code.k}")
    p = (code.encode_matrix() @ u) & 1
    return np.concatenate([u, p]).astype(np.int8)


def encode_batch(bits: np.ndarray, code: LdpcCode) -> np.ndarray:
    u = np.asarray(bits).astype(np.int32)
    if u.ndim != 2 or u.shape[1] != code.k:
        raise ValueError(f"expected [batch, k={code.k}] message array, got {u.shape}")
    p = (u @ code.encode_matrix().T) & 1
    return np.concatenate([u, p], axis=1).astype(np.int8)


def _syndrome_ok(bits: np.ndarray, code: LdpcCode) -> np.ndarray:
    e = code.edge_structure()
    picked = bits[:, e["col_of_edge"]]
    sums = np.add.reduceat(picked.astype(np.int64), e["row_starts"], axis=1)
    return (sums % 2 == 0).all(axis=1)


def decode_batch(
    llr: np.ndarray, code: LdpcCode, max_iters: int = 25
) -> tuple:
    """Normalized min-sum over a batch; returns (message_bits, converged, iters).

    ``llr`` is [batch, n] with positive meaning bit 1; output message bits
    are the first k hard decisions of the best codeword found.
    """
    llr = np.atleast_2d(np.asarray(llr, dtype=np.float64))
    if llr.shape[1] != code.n:
        raise ValueError(f"LLR length {llr.shape[1]} != n={code.n}")
    if not np.isfinite(llr).all():
        raise ValueError("decoder input LLRs must be finite")
    batch = llr.shape[0]
    e = code.edge_structure()
    ne = e["num_edges"]

    # internal algebra runs with u = -llr so that positive u favors bit 0
    u_ch = -llr
    v2c = u_ch[:, e["col_of_edge"]].copy()
    c2v = np.zeros((batch, ne))
    total = u_ch.copy()

    bits = (total < 0).astype(np.int8)
    converged = _syndrome_ok(bits, code)
    iters = np.zeros(batch, dtype=np.int64)
    out_bits = bits.copy()
    iters[converged] = 0

    row_starts = e["row_starts"]
    row_of_edge = e["row_of_edge"]
    pos_in_row = e["pos_in_row"]
    active = ~converged
    for it in range(1, max_iters + 1):
        if not active.any():
            break
        mag = np.abs(v2c)
        sgn = np.where(v2c < 0, -1.0, 1.0)
        min1 = np.minimum.reduceat(mag, row_starts, axis=1)[:, row_of_edge]
        # exclude exactly one occurrence of each row minimum to form min2
        is_min = mag == min1
        pos = np.where(is_min, pos_in_row, ne)
        first = np.minimum.reduceat(pos, row_starts, axis=1)[:, row_of_edge]
        at_min = is_min & (pos_in_row == first)
        min2 = np.minimum.reduceat(np.where(at_min, np.inf, mag), row_starts, axis=1)
        min_excl = np.where(at_min, min2[:, row_of_edge], min1)

        prod = np.multiply.reduceat(sgn, row_starts, axis=1)[:, row_of_edge]
        sign_excl = prod * sgn  # dividing by +-1 equals multiplying
        c2v = MINSUM_SCALE * sign_excl * min_excl

        c2v_col = c2v[:, e["order_by_col"]]
        col_sums = np.add.reduceat(c2v_col, e["col_starts"], axis=1)
        total = u_ch + col_sums
        v2c = total[:, e["col_of_edge"]] - c2v

        bits = (total < 0).astype(np.int8)
        ok = _syndrome_ok(bits, code)
        newly = ok & active
        if newly.any():
            out_bits[newly] = bits[newly]
            iters[newly] = it
            converged |= newly
            active &= ~newly

    if active.any():
        out_bits[active] = (total[active] < 0).astype(np.int8)
        iters[active] = max_iters
    return out_bits[:, : code.k], converged, iters


def ldpc_decode(llr: np.ndarray, code: LdpcCode, max_iters: int = 25) -> tuple:
    """Single-codeword decode; returns (message_bits, converged_flag)."""
    msg, conv, _ = decode_batch(np.asarray(llr)[None, :], code, max_iters)
    return msg[0], bool(conv[0])
