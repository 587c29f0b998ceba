"""Parity, rank, encode/decode round trips and a BPSK waterfall check."""

import numpy as np
import pytest

from quantrx.ldpc import (
    LdpcCode,
    decode_batch,
    encode_batch,
    gf2_rank,
    ldpc_decode,
    ldpc_encode,
)


@pytest.fixture(scope="module")
def code():
    return LdpcCode.default()


def awgn_llrs(codewords, ebno_db, rate, rng):
    """BPSK over AWGN; returns LLRs in the positive-means-one convention."""
    esn0 = rate * 10 ** (ebno_db / 10)
    sigma = np.sqrt(1.0 / (2.0 * esn0))
    x = 1.0 - 2.0 * codewords.astype(np.float64)
    y = x + sigma * rng.standard_normal(x.shape)
    return -2.0 * y / sigma**2


class TestStructure:
    def test_shipped_code_dimensions(self, code):
        assert (code.n, code.k, code.m) == (648, 324, 324)
        assert code.rate == 0.5

    def test_full_rank(self, code):
        assert gf2_rank(code.dense_h()) == code.m

    def test_generator_orthogonal_to_h(self, code):
        """Every basis message encodes to a word in the null space of H."""
        h = code.dense_h()
        rng = np.random.default_rng(0)
        for _ in range(25):
            msg = rng.integers(0, 2, code.k)
            cw = ldpc_encode(msg, code)
            assert ((h @ cw) % 2 == 0).all()

    def test_systematic_prefix(self, code):
        msg = np.arange(code.k) % 2
        cw = ldpc_encode(msg, code)
        np.testing.assert_array_equal(cw[: code.k], msg)

    def test_rejects_wrong_message_length(self, code):
        with pytest.raises(ValueError):
            ldpc_encode(np.zeros(10, dtype=np.int8), code)


class TestEncode:
    def test_zero_message_gives_zero_codeword(self, code):
        cw = ldpc_encode(np.zeros(code.k, dtype=np.int8), code)
        assert (cw == 0).all()

    def test_every_codeword_satisfies_parity(self, code, rng):
        msgs = rng.integers(0, 2, (200, code.k))
        cws = encode_batch(msgs, code)
        h = code.dense_h()
        assert ((cws @ h.T) % 2 == 0).all()


class TestDecode:
    def test_huge_llrs_converge_immediately(self, code, rng):
        msg = rng.integers(0, 2, code.k)
        cw = ldpc_encode(msg, code)
        llr = (2.0 * cw - 1.0) * 5000.0
        dec, converged, iters = decode_batch(llr[None, :], code)
        assert converged[0] and iters[0] <= 1
        np.testing.assert_array_equal(dec[0], msg)

    def test_noiseless_round_trip(self, code, rng):
        msgs = rng.integers(0, 2, (10, code.k))
        cws = encode_batch(msgs, code)
        llr = (2.0 * cws - 1.0) * 50.0
        dec, converged, _ = decode_batch(llr, code)
        assert converged.all()
        np.testing.assert_array_equal(dec, msgs)

    def test_bler_below_1e2_at_6db(self, code):
        rng = np.random.default_rng(2024)
        n_blocks, errs = 1000, 0
        for start in range(0, n_blocks, 250):
            msgs = rng.integers(0, 2, (250, code.k))
            llr = awgn_llrs(encode_batch(msgs, code), 6.0, code.rate, rng)
            dec, _, _ = decode_batch(llr, code, max_iters=25)
            errs += int((dec != msgs).any(axis=1).sum())
        assert errs / n_blocks < 1e-2, f"BLER {errs / n_blocks}"

    def test_flipped_llrs_decode_to_garbage(self, code):
        """Sign-flipped inputs must not accidentally still decode."""
        rng = np.random.default_rng(5)
        msgs = rng.integers(0, 2, (50, code.k))
        llr = awgn_llrs(encode_batch(msgs, code), 8.0, code.rate, rng)
        dec_ok, _, _ = decode_batch(llr, code)
        dec_flip, _, _ = decode_batch(-llr, code)
        assert (dec_ok == msgs).all()
        ber_flip = float((dec_flip != msgs).mean())
        assert ber_flip > 0.25, f"flipped-sign BER only {ber_flip}"

    def test_converged_flag_false_at_heavy_noise(self, code):
        rng = np.random.default_rng(9)
        msgs = rng.integers(0, 2, (50, code.k))
        llr = awgn_llrs(encode_batch(msgs, code), -3.0, code.rate, rng)
        _, converged, _ = decode_batch(llr, code, max_iters=5)
        assert not converged.all()

    def test_rejects_nonfinite_llrs(self, code):
        llr = np.zeros(code.n)
        llr[0] = np.inf
        with pytest.raises(ValueError):
            ldpc_decode(llr, code)

    def test_scalar_wrapper(self, code, rng):
        msg = rng.integers(0, 2, code.k)
        llr = (2.0 * ldpc_encode(msg, code) - 1.0) * 40.0
        dec, converged = ldpc_decode(llr, code)
        assert converged
        np.testing.assert_array_equal(dec, msg)


class TestFileFormat:
    def test_text_round_trip(self, code, tmp_path):
        path = tmp_path / "code.txt"
        lines = [f"{code.n} {code.m}"]
        lines += [" ".join(map(str, cols)) for cols in code.row_cols]
        path.write_text("\n".join(lines) + "\n")
        reloaded = LdpcCode.from_file(path)
        assert reloaded.n == code.n and reloaded.m == code.m
        for a, b in zip(reloaded.row_cols, code.row_cols):
            np.testing.assert_array_equal(a, b)

    def test_rejects_bad_column_index(self):
        with pytest.raises(ValueError):
            LdpcCode.from_text("4 2\n0 1\n2 9\n")

    def test_rejects_wrong_row_count(self):
        with pytest.raises(ValueError):
            LdpcCode.from_text("4 3\n0 1\n1 2\n")
