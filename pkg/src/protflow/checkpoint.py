"""Self-describing binary checkpoint container.

Layout: 4 magic bytes "PFLW", format version (u32 LE), header length
(u64 LE), a UTF-8 JSON header, then raw little-endian float32 tensor
payloads in header order. Header offsets are relative to the payload start;
the loader verifies magic, version, bounds, and overlap before touching any
payload bytes. Writes are atomic (temp file + rename).

The pack_*/unpack_* helpers map the package's parameter objects to named
tensors so a checkpoint is all a command needs to resume or sample.
"""

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from . import nn
from .errors import (
    BadMagic,
    CorruptOffset,
    IncompatibleCheckpoint,
    NonFiniteValue,
    VersionUnsupported,
)
from .flow import VectorFieldConfig, VectorFieldModel
from .latent import (
    CompressorParams,
    DecoderParams,
    EncoderParams,
    LatentPipeline,
    SmoothingStats,
)

MAGIC = b"PFLW"
VERSION = 1


def save_checkpoint(path, tensors, meta):
    """Write named tensors (stored as little-endian float32) plus JSON metadata."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr32 = np.asarray(arr, dtype="<f4")  # tobytes() below copies in C order
        if not np.all(np.isfinite(arr32)):
            raise NonFiniteValue(f"tensor {name!r} has non-finite entries")
        entries.append(
            {"name": name, "shape": list(arr32.shape), "dtype": "<f4", "offset": offset}
        )
        blobs.append(arr32.tobytes())
        offset += len(blobs[-1])
    header = dict(meta)
    header["tensors"] = entries
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    dirpath = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=dirpath, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", VERSION))
            f.write(struct.pack("<Q", len(header_bytes)))
            f.write(header_bytes)
            for blob in blobs:
                f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path):
    """Read a checkpoint; returns (tensors dict of float32 arrays, meta dict)."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 16 or data[:4] != MAGIC:
        raise BadMagic(f"{path}: not a checkpoint (magic mismatch)")
    version = struct.unpack("<I", data[4:8])[0]
    if version != VERSION:
        raise VersionUnsupported(version, VERSION)
    header_len = struct.unpack("<Q", data[8:16])[0]
    header_end = 16 + header_len
    if header_end > len(data):
        raise CorruptOffset(f"{path}: header length {header_len} exceeds file size")
    try:
        header = json.loads(data[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptOffset(f"{path}: header is not valid JSON: {e}") from e
    payload = data[header_end:]
    tensors = {}
    spans = []
    for entry in header.get("tensors", []):
        if entry.get("dtype") != "<f4":
            raise CorruptOffset(f"{path}: unsupported tensor dtype {entry.get('dtype')!r}")
        shape = tuple(int(x) for x in entry["shape"])
        size = int(np.prod(shape)) * 4 if shape else 4
        off = int(entry["offset"])
        if off < 0 or off + size > len(payload):
            raise CorruptOffset(
                f"{path}: tensor {entry['name']!r} spans [{off}, {off + size}) "
                f"outside payload of {len(payload)} bytes"
            )
        spans.append((off, off + size, entry["name"]))
        tensors[entry["name"]] = np.frombuffer(
            payload[off : off + size], dtype="<f4"
        ).reshape(shape)
    spans.sort()
    for (_, end_a, name_a), (start_b, _, name_b) in zip(spans, spans[1:]):
        if start_b < end_a:
            raise CorruptOffset(f"{path}: tensors {name_a!r} and {name_b!r} overlap")
    meta = {k: v for k, v in header.items() if k != "tensors"}
    return tensors, meta


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --- object <-> tensor packing ---------------------------------------------------


def _get(tensors, key):
    if key not in tensors:
        raise IncompatibleCheckpoint(f"missing tensor {key!r}")
    return np.asarray(tensors[key], dtype=np.float64)


def pack_encoder(enc, prefix=""):
    """EncoderParams -> tensors. The positional table is recomputed at load
    time from (l_max, dim), so only the embedding is stored."""
    return {prefix + "encoder.embed": enc.embed}


def unpack_encoder(tensors, l_max, dim, prefix=""):
    return EncoderParams(_get(tensors, prefix + "encoder.embed"), nn.sinusoidal_table(l_max, dim))


def pack_decoder(dec, prefix=""):
    return {prefix + "decoder." + k: v for k, v in dec.params().items()}


def unpack_decoder(tensors, prefix=""):
    return DecoderParams(
        *(_get(tensors, prefix + "decoder." + k) for k in ("w1", "b1", "gamma", "beta", "w2", "b2"))
    )


def pack_smoothing(sm, prefix=""):
    return {
        prefix + "smoothing.mean": sm.mean,
        prefix + "smoothing.std": sm.std,
        prefix + "smoothing.post_min": sm.post_min,
        prefix + "smoothing.post_max": sm.post_max,
        prefix + "smoothing.constant": sm.constant.astype(np.float32),
    }


def unpack_smoothing(tensors, clamp_k, prefix=""):
    return SmoothingStats(
        _get(tensors, prefix + "smoothing.mean"),
        _get(tensors, prefix + "smoothing.std"),
        float(clamp_k),
        _get(tensors, prefix + "smoothing.post_min"),
        _get(tensors, prefix + "smoothing.post_max"),
        _get(tensors, prefix + "smoothing.constant") != 0.0,
    )


def pack_compressor(comp, prefix=""):
    return {prefix + "compressor." + k: v for k, v in comp.params().items()}


def unpack_compressor(tensors, prefix=""):
    return CompressorParams(
        *(
            _get(tensors, prefix + "compressor." + k)
            for k in ("w_down", "b_down", "g", "s", "w_up", "b_up")
        )
    )


def pack_pipeline(pipeline, prefix=""):
    """LatentPipeline -> (tensors, meta fragment)."""
    t = {}
    t.update(pack_encoder(pipeline.encoder, prefix))
    t.update(pack_decoder(pipeline.decoder, prefix))
    t.update(pack_smoothing(pipeline.smoothing, prefix))
    t.update(pack_compressor(pipeline.compressor, prefix))
    meta = {
        "l_max": pipeline.l_max,
        "dim": pipeline.dim,
        "clamp_k": pipeline.smoothing.clamp_k,
    }
    return t, meta


def unpack_pipeline(tensors, meta, prefix=""):
    l_max = int(meta["l_max"])
    dim = int(meta["dim"])
    return LatentPipeline(
        unpack_encoder(tensors, l_max, dim, prefix),
        unpack_decoder(tensors, prefix),
        unpack_smoothing(tensors, meta["clamp_k"], prefix),
        unpack_compressor(tensors, prefix),
    )


def pack_flow(model, prefix="flow."):
    tensors = {prefix + k: v for k, v in model.params.items()}
    return tensors, {"flow_cfg": model.cfg.to_dict()}


def unpack_flow(tensors, meta, prefix="flow."):
    if "flow_cfg" not in meta:
        raise IncompatibleCheckpoint("checkpoint carries no flow model")
    cfg = VectorFieldConfig.from_dict(meta["flow_cfg"])
    params = {}
    for key, arr in tensors.items():
        if key.startswith(prefix):
            params[key[len(prefix) :]] = np.asarray(arr, dtype=np.float64)
    if not params:
        raise IncompatibleCheckpoint("checkpoint carries no flow tensors")
    return VectorFieldModel(cfg, params)
