"""Generate the shipped quasi-cyclic parity-check matrix (n=648, k=324).

Layout: 12x24 grid of 27x27 blocks, each either zero or a circulant
permutation.  The 12 information block-columns have weight 3 with rows
balanced so every check row carries exactly 3 information blocks; the
parity part is block-bidiagonal (shifted diagonal + identity subdiagonal),
which makes the parity square invertible and encoding a back-substitution.

A seeded search retries until the block-level 4-cycle condition holds,
so the expanded graph has girth >= 6.  Run from the repo root:

    PYTHONPATH=src python tools/make_parity_check.py
"""

import sys
from pathlib import Path

import numpy as np

Z = 27
BLOCK_ROWS = 12
INFO_COLS = 12
N = Z * (INFO_COLS + BLOCK_ROWS)
M = Z * BLOCK_ROWS


def build_block_design(rng):
    """Return {(block_row, block_col): shift} or None if 4-cycles remain."""
    perms = [rng.permutation(BLOCK_ROWS) for _ in range(3)]
    cols = {}
    for j in range(INFO_COLS):
        rows = {int(perms[t][j]) for t in range(3)}
        if len(rows) != 3:
            return None
        cols[j] = sorted(rows)
    design = {}
    for j in range(INFO_COLS):
        for i in cols[j]:
            design[(i, j)] = int(rng.integers(Z))
    for i in range(BLOCK_ROWS):
        design[(i, INFO_COLS + i)] = int(rng.integers(Z))
        if i > 0:
            design[(i, INFO_COLS + i - 1)] = 0

    # block-level 4-cycle test: two columns sharing two rows must have
    # distinct shift differences mod Z
    col_entries = {}
    for (i, j), s in design.items():
        col_entries.setdefault(j, []).append((i, s))
    ncols = INFO_COLS + BLOCK_ROWS
    for j1 in range(ncols):
        for j2 in range(j1 + 1, ncols):
            e1 = dict(col_entries[j1])
            e2 = dict(col_entries[j2])
            shared = sorted(set(e1) & set(e2))
            for a in range(len(shared)):
                for b in range(a + 1, len(shared)):
                    i1, i2 = shared[a], shared[b]
                    if (e1[i1] - e1[i2]) % Z == (e2[i1] - e2[i2]) % Z:
                        return None
    return design


def expand(design):
    h = np.zeros((M, N), dtype=np.uint8)
    for (bi, bj), shift in design.items():
        for z in range(Z):
            h[bi * Z + z, bj * Z + (z + shift) % Z] = 1
    return h


def main():
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
    from quantrx.ldpc import LdpcCode, gf2_rank, gf2_solve_parity, ldpc_encode

    rng = np.random.default_rng(20240611)
    attempt = 0
    while True:
        attempt += 1
        design = build_block_design(rng)
        if design is not None:
            break
    h = expand(design)
    assert gf2_rank(h) == M, "rank deficient"
    gf2_solve_parity(h, N - M)  # raises if the parity square is singular

    out = Path(__file__).resolve().parents[1] / "src" / "quantrx" / "data" / "ldpc_n648_k324.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# quasi-cyclic LDPC parity-check matrix, Z={Z}", f"{N} {M}"]
    for r in range(M):
        lines.append(" ".join(str(c) for c in np.nonzero(h[r])[0]))
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")

    code = LdpcCode.from_file(out)
    rng2 = np.random.default_rng(1)
    msg = rng2.integers(0, 2, code.k)
    cw = ldpc_encode(msg, code)
    assert ((code.dense_h() @ cw) % 2 == 0).all()
    print(f"wrote {out} after {attempt} attempts; rank={M}, edges={int(h.sum())}")


if __name__ == "__main__":
    main()
