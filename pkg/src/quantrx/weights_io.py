"""Binary container for full-precision and quantized receiver weights.

Byte layout (little-endian throughout):

    offset 0   magic  b"QRXW"
    offset 4   format version, uint16 (currently 1)
    offset 6   header length H, uint32
    offset 10  header, H bytes of UTF-8 JSON
    offset 10+H  payload blob

The header carries the receiver configuration echo and a layer table.
Each layer record stores name, shape and an ``offset``/``data_bytes``
pair into the payload.  Float records ("kind": "float") hold raw f32 or
f16 values.  Quantized records ("kind": "quant") hold the quantizer
parameters plus ``scale_count`` float32 scales at ``offset`` followed by
``data_bytes`` of integer values; 4-bit values are packed two per byte,
low nibble first.  ``data_bytes`` is what the size-reduction accounting
counts -- scales and header are excluded.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .quantization import Float16Model, QuantConfig, QuantizedModel, QuantizedTensor

__all__ = [
    "save_model",
    "load_model",
    "save_quantized",
    "load_quantized",
    "save_float16",
    "load_float16",
    "WeightFormatError",
]

MAGIC = b"QRXW"
FORMAT_VERSION = 1


class WeightFormatError(ValueError):
    """Raised for malformed files, version or shape disagreements."""


def _pack_int4(values: np.ndarray) -> bytes:
    flat = values.astype(np.int8).ravel()
    if flat.size % 2 == 1:
        flat = np.concatenate([flat, np.zeros(1, dtype=np.int8)])
    nib = flat.view(np.uint8) & 0x0F
    return (nib[0::2] | (nib[1::2] << 4)).tobytes()

def _unpack_int4(raw: bytes, count: int, signed: bool) -> np.ndarray:
    packed = np.frombuffer(raw, dtype=np.uint8)
    nibbles = np.empty(packed.size * 2, dtype=np.uint8)
    nibbles[0::2] = packed & 0x0F
    nibbles[1::2] = packed >> 4
    nibbles = nibbles[:count]
    if signed:
        return ((nibbles.astype(np.int16) ^ 8) - 8).astype(np.int8)
    return nibbles.astype(np.uint8)


def _quant_record_payload(q: QuantizedTensor) -> bytes:
    scales = np.atleast_1d(q.scales).astype("<f4").tobytes()
    if q.config.bit_width == 4:
        data = _pack_int4(q.values)
    else:
        data = q.values.astype(q.config.container_dtype.newbyteorder("<")).tobytes()
    return scales + data


def _write(path, model_config: dict, records: list) -> None:
    """records: list of (name, kind_dict, payload_bytes, data_bytes)."""
    layers = []
    blob = bytearray()
    for name, meta, payload, data_bytes in records:
        entry = {"name": name, **meta, "offset": len(blob), "data_bytes": data_bytes}
        layers.append(entry)
        blob.extend(payload)
    header = json.dumps(
        {"version": FORMAT_VERSION, "model_config": model_config, "layers": layers},
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", FORMAT_VERSION, len(header)))
        fh.write(header)
        fh.write(bytes(blob))


def _read(path) -> tuple:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise WeightFormatError(f"{path}: bad magic bytes, not a weight file")
    version, hlen = struct.unpack("<HI", raw[4:10])
    if version != FORMAT_VERSION:
        raise WeightFormatError(
            f"{path}: format version {version} unsupported (expected {FORMAT_VERSION})"
        )
    try:
        header = json.loads(raw[10 : 10 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"{path}: corrupt header: {exc}") from exc
    payload = raw[10 + hlen :]
    return header, payload


def _float_dtype(tag: str) -> np.dtype:
    if tag == "f32":
        return np.dtype("<f4")
    if tag == "f16":
        return np.dtype("<f2")
    raise WeightFormatError(f"unknown float dtype tag {tag!r}")


def _float_record(name: str, arr: np.ndarray, tag: str) -> tuple:
    data = arr.astype(_float_dtype(tag)).tobytes()
    meta = {"kind": "float", "dtype": tag, "shape": list(arr.shape)}
    return name, meta, data, len(data)


def _check_shape(entry: dict, got: int, expected: int, path) -> None:
    if got != expected:
        raise WeightFormatError(
            f"{path}: layer {entry['name']!r} data length {got} disagrees with "
            f"header shape {entry['shape']}"
        )


def save_model(model, path) -> None:
    """Serialize a float32 receiver; round trip is bit-exact."""
    records = [
        _float_record(name, tensor.data, "f32") for name, tensor in model.parameters()
    ]
    _write(path, model.config_dict(), records)


def load_model(path):
    from .receiver import NeuralReceiver, ReceiverConfig, build  # cycle guard

    header, payload = _read(path)
    config = ReceiverConfig.from_dict(header["model_config"])
    model = build(config, seed=0)
    table = {e["name"]: e for e in header["layers"]}
    for name, tensor in model.parameters():
        if name not in table:
            raise WeightFormatError(f"{path}: missing layer record {name!r}")
        e = table.pop(name)
        if e["kind"] != "float" or e["dtype"] != "f32":
            raise WeightFormatError(f"{path}: layer {name!r} is not a float32 record")
        raw = payload[e["offset"] : e["offset"] + e["data_bytes"]]
        arr = np.frombuffer(raw, dtype="<f4")
        _check_shape(e, arr.size, int(np.prod(e["shape"])), path)
        if tuple(e["shape"]) != tensor.data.shape:
            raise WeightFormatError(
                f"{path}: layer {name!r} shape {e['shape']} does not match "
                f"model shape {tensor.data.shape}"
            )
        tensor.data = arr.reshape(e["shape"]).astype(np.float32)
    if table:
        raise WeightFormatError(f"{path}: unexpected extra records {sorted(table)}")
    return model


def save_quantized(qmodel: QuantizedModel, path) -> None:
    records = []
    for name, q in qmodel.kernels.items():
        payload = _quant_record_payload(q)
        scale_count = int(np.atleast_1d(q.scales).size)
        meta = {
            "kind": "quant",
            "bit_width": q.config.bit_width,
            "signed": q.config.signed,
            "granularity": q.config.granularity,
            "channel_axis": q.config.channel_axis,
            "scale_mode": q.config.scale_mode,
            "scale_count": scale_count,
            "degenerate": np.atleast_1d(q.degenerate).astype(int).tolist(),
            "shape": list(q.shape),
        }
        records.append((name, meta, payload, q.payload_nbytes()))
    for name, arr in qmodel.floats.items():
        records.append(_float_record(name, arr, "f32"))
    _write(path, qmodel.model_config, records)


def load_quantized(path) -> QuantizedModel:
    header, payload = _read(path)
    kernels = {}
    floats = {}
    qconfig = None
    degenerate_layers = []
    for e in header["layers"]:
        raw = payload[e["offset"] : e["offset"] + _record_nbytes(e)]
        if e["kind"] == "float":
            arr = np.frombuffer(raw, dtype=_float_dtype(e["dtype"]))
            _check_shape(e, arr.size, int(np.prod(e["shape"])), path)
            floats[e["name"]] = arr.reshape(e["shape"]).astype(np.float32)
            continue
        cfg = QuantConfig(
            bit_width=e["bit_width"],
            signed=e["signed"],
            granularity=e["granularity"],
            channel_axis=e["channel_axis"],
            scale_mode=e["scale_mode"],
        )
        qconfig = cfg
        scales = np.frombuffer(raw[: 4 * e["scale_count"]], dtype="<f4")
        data = raw[4 * e["scale_count"] :]
        count = int(np.prod(e["shape"]))
        if cfg.bit_width == 4:
            values = _unpack_int4(data, count, cfg.signed)
        else:
            values = np.frombuffer(data, dtype=cfg.container_dtype.newbyteorder("<"))
            values = values.astype(cfg.container_dtype)
        _check_shape(e, values.size, count, path)
        degenerate = np.array(e["degenerate"], dtype=bool)
        if cfg.granularity == "per_tensor":
            scales_arr = np.asarray(np.float32(scales[0]))
            degenerate = np.asarray(np.bool_(degenerate[0]))
        else:
            scales_arr = scales.astype(np.float32)
        q = QuantizedTensor(
            values=values.reshape(e["shape"]),
            scales=scales_arr,
            config=cfg,
            shape=tuple(e["shape"]),
            degenerate=degenerate,
        )
        kernels[e["name"]] = q
        if bool(np.any(q.degenerate)):
            degenerate_layers.append(e["name"])
    if qconfig is None:
        raise WeightFormatError(f"{path}: no quantized records found")
    return QuantizedModel(
        kernels=kernels,
        floats=floats,
        config=qconfig,
        model_config=header["model_config"],
        degenerate_layers=degenerate_layers,
    )


def _record_nbytes(e: dict) -> int:
    if e["kind"] == "quant":
        return 4 * e["scale_count"] + e["data_bytes"]
    return e["data_bytes"]


def save_float16(f16model: Float16Model, path) -> None:
    records = [_float_record(n, a, "f16") for n, a in f16model.kernels.items()]
    records += [_float_record(n, a, "f32") for n, a in f16model.floats.items()]
    _write(path, f16model.model_config, records)


def load_float16(path) -> Float16Model:
    header, payload = _read(path)
    kernels = {}
    floats = {}
    for e in header["layers"]:
        raw = payload[e["offset"] : e["offset"] + e["data_bytes"]]
        arr = np.frombuffer(raw, dtype=_float_dtype(e["dtype"]))
        _check_shape(e, arr.size, int(np.prod(e["shape"])), path)
        arr = arr.reshape(e["shape"])
        if e["dtype"] == "f16":
            kernels[e["name"]] = arr.astype(np.float16)
        else:
            floats[e["name"]] = arr.astype(np.float32)
    return Float16Model(kernels=kernels, floats=floats, model_config=header["model_config"])
