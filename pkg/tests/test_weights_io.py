"""Weight-file format: round trips, corruption handling, size arithmetic."""

import json
import struct

import numpy as np
import pytest

from quantrx.quantization import QuantConfig, dequantize, model_to_float16, quantize_model
from quantrx.receiver import ReceiverConfig, build
from quantrx.weights_io import (
    WeightFormatError,
    load_float16,
    load_model,
    load_quantized,
    save_float16,
    save_model,
    save_quantized,
)


@pytest.fixture()
def model():
    return build(ReceiverConfig(num_blocks=2, channels=8), seed=21)


class TestFloatRoundTrip:
    def test_save_load_save_is_byte_identical(self, model, tmp_path):
        p1, p2 = tmp_path / "a.qrxw", tmp_path / "b.qrxw"
        save_model(model, p1)
        save_model(load_model(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_tensors_bit_exact_after_round_trip(self, model, tmp_path):
        path = tmp_path / "m.qrxw"
        save_model(model, path)
        loaded = load_model(path)
        for (n1, t1), (n2, t2) in zip(model.parameters(), loaded.parameters()):
            assert n1 == n2
            np.testing.assert_array_equal(t1.data, t2.data)

    def test_file_size_is_header_plus_payload(self, model, tmp_path):
        path = tmp_path / "m.qrxw"
        save_model(model, path)
        raw = path.read_bytes()
        hlen = struct.unpack("<I", raw[6:10])[0]
        # exact layout arithmetic: magic(4) + version(2) + len(4) + header + 4*params
        assert len(raw) == 10 + hlen + 4 * model.param_count()

    def test_payload_dominates_file_size(self, tmp_path):
        big = build(ReceiverConfig(num_blocks=2, channels=32), seed=2)
        path = tmp_path / "m.qrxw"
        save_model(big, path)
        assert path.stat().st_size <= 1.05 * 4 * big.param_count()

    def test_corrupted_magic_rejected(self, model, tmp_path):
        path = tmp_path / "m.qrxw"
        save_model(model, path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"JUNK"
        path.write_bytes(bytes(raw))
        with pytest.raises(WeightFormatError, match="magic"):
            load_model(path)

    def test_version_mismatch_rejected(self, model, tmp_path):
        path = tmp_path / "m.qrxw"
        save_model(model, path)
        raw = bytearray(path.read_bytes())
        raw[4:6] = struct.pack("<H", 9)
        path.write_bytes(bytes(raw))
        with pytest.raises(WeightFormatError, match="version"):
            load_model(path)

    def test_shape_disagreement_rejected(self, model, tmp_path):
        path = tmp_path / "m.qrxw"
        save_model(model, path)
        raw = path.read_bytes()
        hlen = struct.unpack("<I", raw[6:10])[0]
        header = json.loads(raw[10 : 10 + hlen])
        header["layers"][0]["shape"][0] += 1  # lie about the kernel height
        new_header = json.dumps(header, separators=(",", ":")).encode()
        path.write_bytes(raw[:4] + struct.pack("<HI", 1, len(new_header)) + new_header + raw[10 + hlen :])
        with pytest.raises(WeightFormatError):
            load_model(path)

    def test_truncated_payload_rejected(self, model, tmp_path):
        path = tmp_path / "m.qrxw"
        save_model(model, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-200])
        with pytest.raises(WeightFormatError):
            load_model(path)


class TestQuantizedRoundTrip:
    @pytest.mark.parametrize("bits,gran", [(8, "per_tensor"), (8, "per_channel"), (4, "per_channel"), (4, "per_tensor"), (16, "per_channel")])
    def test_values_scales_and_config_survive(self, model, tmp_path, bits, gran):
        qm = quantize_model(model, QuantConfig(bit_width=bits, granularity=gran))
        path = tmp_path / "q.qrxw"
        save_quantized(qm, path)
        loaded = load_quantized(path)
        assert loaded.config == qm.config
        assert set(loaded.kernels) == set(qm.kernels)
        for name, q in qm.kernels.items():
            lq = loaded.kernels[name]
            np.testing.assert_array_equal(lq.values, q.values)
            np.testing.assert_array_equal(lq.scales, q.scales)
            np.testing.assert_array_equal(
                np.atleast_1d(lq.degenerate), np.atleast_1d(q.degenerate)
            )
            np.testing.assert_array_equal(dequantize(lq), dequantize(q))
        for name, arr in qm.floats.items():
            np.testing.assert_array_equal(loaded.floats[name], arr)

    def test_save_load_save_byte_identical(self, model, tmp_path):
        qm = quantize_model(model, QuantConfig(bit_width=4, granularity="per_channel"))
        p1, p2 = tmp_path / "a.qrxw", tmp_path / "b.qrxw"
        save_quantized(qm, p1)
        save_quantized(load_quantized(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_int4_payload_packs_two_per_byte(self, model, tmp_path):
        qm = quantize_model(model, QuantConfig(bit_width=4, granularity="per_tensor"))
        path = tmp_path / "q.qrxw"
        save_quantized(qm, path)
        raw = path.read_bytes()
        hlen = struct.unpack("<I", raw[6:10])[0]
        header = json.loads(raw[10 : 10 + hlen])
        for e in header["layers"]:
            if e["kind"] == "quant":
                count = int(np.prod(e["shape"]))
                assert e["data_bytes"] == (count + 1) // 2

    def test_odd_element_count_packs_cleanly(self, tmp_path):
        from quantrx.quantization import quantize

        x = np.linspace(-1, 1, 27).astype(np.float32)  # odd count
        q = quantize(x, QuantConfig(bit_width=4))
        assert q.payload_nbytes() == 14

    def test_float_model_file_is_not_a_quantized_file(self, model, tmp_path):
        path = tmp_path / "m.qrxw"
        save_model(model, path)
        with pytest.raises(WeightFormatError, match="no quantized records"):
            load_quantized(path)


class TestFloat16RoundTrip:
    def test_round_trip(self, model, tmp_path):
        f16 = model_to_float16(model)
        path = tmp_path / "h.qrxw"
        save_float16(f16, path)
        loaded = load_float16(path)
        for name, arr in f16.kernels.items():
            np.testing.assert_array_equal(loaded.kernels[name], arr)
        for name, arr in f16.floats.items():
            np.testing.assert_array_equal(loaded.floats[name], arr)
