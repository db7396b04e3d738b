"""Checkpoint container tests: binary layout, corruption guards, packing.

The format is fully self-describing (magic, version, JSON header, raw
float32 payloads), so most tests craft files byte-by-byte and check that
the loader refuses anything malformed before touching payload bytes.
"""

import hashlib
import json
import struct

import numpy as np
import pytest

from protflow import checkpoint as ckpt
from protflow import nn
from protflow.errors import (
    BadMagic,
    CorruptOffset,
    IncompatibleCheckpoint,
    NonFiniteValue,
    VersionUnsupported,
)
from protflow.flow import VectorFieldConfig, init_flow_model
from protflow.latent import (
    LatentPipeline,
    fit_smoothing,
    init_compressor,
    init_decoder,
    init_encoder,
)
from protflow.numeric import RngStream


def _write_raw(path, header_bytes, payload=b"", magic=b"PFLW", version=1):
    """Assemble a container file by hand so tests can corrupt any field."""
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<I", version))
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        f.write(payload)


def _header(entries, **meta):
    meta["tensors"] = entries
    return json.dumps(meta).encode("utf-8")


# --- save / load round trips ------------------------------------------------


def test_round_trip_values_and_meta(tmp_path):
    path = str(tmp_path / "model.ckpt")
    stream = RngStream(9).substream("tensors")
    tensors = {
        "a": stream.substream("a").normal((2, 3)),
        "b": stream.substream("b").normal((5,)),
        "c": np.float64(2.5),  # scalar tensor, shape ()
    }
    ckpt.save_checkpoint(path, tensors, {"kind": "demo", "steps": 7})
    loaded, meta = ckpt.load_checkpoint(path)

    assert set(loaded) == {"a", "b", "c"}
    assert meta == {"kind": "demo", "steps": 7}
    for name, orig in tensors.items():
        arr = loaded[name]
        assert arr.dtype == np.float32
        assert arr.shape == np.asarray(orig).shape
        assert np.array_equal(arr, np.asarray(orig).astype(np.float32))


def test_resave_is_byte_identical(tmp_path):
    first = str(tmp_path / "first.ckpt")
    second = str(tmp_path / "second.ckpt")
    stream = RngStream(10)
    tensors = {
        "w": stream.substream("w").normal((4, 4)),
        "b": stream.substream("b").normal((4,)),
    }
    ckpt.save_checkpoint(first, tensors, {"note": "x", "n": 3})
    loaded, meta = ckpt.load_checkpoint(first)
    ckpt.save_checkpoint(second, loaded, meta)
    with open(first, "rb") as f:
        bytes_a = f.read()
    with open(second, "rb") as f:
        bytes_b = f.read()
    assert bytes_a == bytes_b


def test_atomic_write_leaves_no_temp_files(tmp_path):
    path = str(tmp_path / "only.ckpt")
    ckpt.save_checkpoint(path, {"x": np.ones(3)}, {})
    # overwriting an existing checkpoint must also go through the temp file
    ckpt.save_checkpoint(path, {"x": np.zeros(3)}, {})
    assert sorted(p.name for p in tmp_path.iterdir()) == ["only.ckpt"]
    loaded, _ = ckpt.load_checkpoint(path)
    assert np.array_equal(loaded["x"], np.zeros(3, dtype=np.float32))


def test_non_finite_tensor_rejected(tmp_path):
    path = str(tmp_path / "bad.ckpt")
    for poison in (np.nan, np.inf, 1e300):  # 1e300 overflows to inf in float32
        with np.errstate(over="ignore"), pytest.raises(NonFiniteValue):
            ckpt.save_checkpoint(path, {"w": np.array([1.0, poison])}, {})
    assert not (tmp_path / "bad.ckpt").exists()


def test_file_sha256_matches_reference(tmp_path):
    path = str(tmp_path / "h.ckpt")
    ckpt.save_checkpoint(path, {"x": np.arange(6.0)}, {"tag": "v"})
    with open(path, "rb") as f:
        data = f.read()
    assert ckpt.file_sha256(path) == hashlib.sha256(data).hexdigest()
    # any byte flip must change the digest
    with open(path, "wb") as f:
        f.write(data[:-1] + bytes([data[-1] ^ 0xFF]))
    assert ckpt.file_sha256(path) != hashlib.sha256(data).hexdigest()


# --- corruption guards ------------------------------------------------------


def test_short_file_is_bad_magic(tmp_path):
    path = str(tmp_path / "short.ckpt")
    with open(path, "wb") as f:
        f.write(b"PFL")
    with pytest.raises(BadMagic):
        ckpt.load_checkpoint(path)
    # right magic but fewer than 16 bytes total is still unreadable
    with open(path, "wb") as f:
        f.write(b"PFLW" + b"\x00" * 8)
    with pytest.raises(BadMagic):
        ckpt.load_checkpoint(path)


def test_wrong_magic(tmp_path):
    path = str(tmp_path / "nope.ckpt")
    _write_raw(path, _header([]), magic=b"NOPE")
    with pytest.raises(BadMagic):
        ckpt.load_checkpoint(path)


def test_future_version_rejected(tmp_path):
    path = str(tmp_path / "v2.ckpt")
    ckpt.save_checkpoint(path, {"x": np.ones(2)}, {})
    with open(path, "rb") as f:
        data = bytearray(f.read())
    data[4:8] = struct.pack("<I", 2)
    with open(path, "wb") as f:
        f.write(data)
    with pytest.raises(VersionUnsupported) as ei:
        ckpt.load_checkpoint(path)
    assert ei.value.found == 2
    assert ei.value.supported == 1


def test_header_length_beyond_eof(tmp_path):
    path = str(tmp_path / "hdr.ckpt")
    ckpt.save_checkpoint(path, {"x": np.ones(2)}, {})
    with open(path, "rb") as f:
        data = bytearray(f.read())
    data[8:16] = struct.pack("<Q", len(data) * 10)
    with open(path, "wb") as f:
        f.write(data)
    with pytest.raises(CorruptOffset):
        ckpt.load_checkpoint(path)


def test_header_not_json(tmp_path):
    path = str(tmp_path / "json.ckpt")
    _write_raw(path, b"{broken")
    with pytest.raises(CorruptOffset):
        ckpt.load_checkpoint(path)
    _write_raw(path, b"\xff\xfe\xff\xfe")  # not UTF-8 at all
    with pytest.raises(CorruptOffset):
        ckpt.load_checkpoint(path)


def test_unsupported_tensor_dtype(tmp_path):
    path = str(tmp_path / "dtype.ckpt")
    entry = {"name": "a", "shape": [2], "dtype": "<f8", "offset": 0}
    _write_raw(path, _header([entry]), payload=b"\x00" * 16)
    with pytest.raises(CorruptOffset):
        ckpt.load_checkpoint(path)


def test_offset_out_of_bounds(tmp_path):
    path = str(tmp_path / "span.ckpt")
    entry = {"name": "a", "shape": [4], "dtype": "<f4", "offset": 4}
    _write_raw(path, _header([entry]), payload=b"\x00" * 16)  # [4, 20) > 16
    with pytest.raises(CorruptOffset):
        ckpt.load_checkpoint(path)
    entry = {"name": "a", "shape": [2], "dtype": "<f4", "offset": -4}
    _write_raw(path, _header([entry]), payload=b"\x00" * 16)
    with pytest.raises(CorruptOffset):
        ckpt.load_checkpoint(path)


def test_overlapping_tensors(tmp_path):
    path = str(tmp_path / "overlap.ckpt")
    entries = [
        {"name": "a", "shape": [2], "dtype": "<f4", "offset": 0},
        {"name": "b", "shape": [2], "dtype": "<f4", "offset": 4},
    ]
    _write_raw(path, _header(entries), payload=b"\x00" * 12)
    with pytest.raises(CorruptOffset):
        ckpt.load_checkpoint(path)


# --- object packing ---------------------------------------------------------


def _toy_pipeline():
    rng = RngStream(21)
    enc = init_encoder(6, 8, rng.substream("enc"), embed_scale=2.0, embed_rank=4)
    dec = init_decoder(8, 16, rng.substream("dec"))
    rows = rng.substream("rows").normal((64, 8))
    rows[:, 3] = 0.7  # one constant channel to exercise the boolean mask
    sm = fit_smoothing(rows, clamp_k=2.5)
    comp = init_compressor(8, 2, rng.substream("comp"))
    return LatentPipeline(enc, dec, sm, comp)


def test_pack_unpack_encoder_bitwise():
    enc = init_encoder(6, 8, RngStream(3), embed_scale=2.0, embed_rank=4)
    tensors = ckpt.pack_encoder(enc)
    assert set(tensors) == {"encoder.embed"}
    out = ckpt.unpack_encoder(tensors, 6, 8)
    assert np.array_equal(out.embed, enc.embed)
    # the positional table is recomputed, not stored
    assert np.array_equal(out.pos, nn.sinusoidal_table(6, 8))
    assert np.array_equal(out.pos, enc.pos)
    with pytest.raises(IncompatibleCheckpoint):
        ckpt.unpack_encoder({}, 6, 8)


def test_pack_unpack_decoder_bitwise():
    dec = init_decoder(8, 16, RngStream(5))
    out = ckpt.unpack_decoder(ckpt.pack_decoder(dec))
    for key, val in dec.params().items():
        assert np.array_equal(out.params()[key], val)


def test_pack_unpack_compressor_bitwise():
    comp = init_compressor(8, 2, RngStream(7))
    out = ckpt.unpack_compressor(ckpt.pack_compressor(comp))
    for key, val in comp.params().items():
        assert np.array_equal(out.params()[key], val)


def test_pack_unpack_smoothing():
    rows = RngStream(13).substream("rows").normal((64, 8))
    rows[:, 3] = 0.7
    sm = fit_smoothing(rows, clamp_k=2.5)
    out = ckpt.unpack_smoothing(ckpt.pack_smoothing(sm), sm.clamp_k)
    assert np.array_equal(out.mean, sm.mean)
    assert np.array_equal(out.std, sm.std)
    assert np.array_equal(out.post_min, sm.post_min)
    assert np.array_equal(out.post_max, sm.post_max)
    assert out.clamp_k == 2.5
    assert out.constant.dtype == np.bool_
    assert np.array_equal(out.constant, sm.constant)
    assert out.constant[3] and out.constant.sum() == 1


def test_pipeline_file_round_trip(tmp_path):
    pipe = _toy_pipeline()
    tensors, meta = ckpt.pack_pipeline(pipe)
    assert meta == {"l_max": 6, "dim": 8, "clamp_k": 2.5}

    path = str(tmp_path / "pipe.ckpt")
    ckpt.save_checkpoint(path, tensors, meta)
    loaded, meta2 = ckpt.load_checkpoint(path)
    out = ckpt.unpack_pipeline(loaded, meta2)

    assert out.l_max == pipe.l_max and out.dim == pipe.dim
    # stored tensors come back as exact float32 casts of the originals
    assert np.array_equal(out.encoder.embed, pipe.encoder.embed.astype(np.float32))
    for key, val in pipe.decoder.params().items():
        assert np.array_equal(out.decoder.params()[key], val.astype(np.float32))
    for key, val in pipe.compressor.params().items():
        assert np.array_equal(out.compressor.params()[key], val.astype(np.float32))
    assert np.array_equal(out.smoothing.mean, pipe.smoothing.mean.astype(np.float32))
    assert np.array_equal(out.smoothing.constant, pipe.smoothing.constant)
    assert out.smoothing.clamp_k == pipe.smoothing.clamp_k
    # the positional table never passes through float32 storage
    assert np.array_equal(out.encoder.pos, pipe.encoder.pos)


def test_pack_unpack_flow(tmp_path):
    cfg = VectorFieldConfig(depth=2, width=3, hidden=8, attention=False)
    model = init_flow_model(cfg, RngStream(11))
    tensors, meta = ckpt.pack_flow(model)
    assert all(key.startswith("flow.") for key in tensors)
    assert meta == {"flow_cfg": cfg.to_dict()}

    # direct unpack keeps full float64 precision
    out = ckpt.unpack_flow(tensors, meta)
    assert out.cfg.to_dict() == cfg.to_dict()
    assert set(out.params) == set(model.params)
    for key, val in model.params.items():
        assert np.array_equal(out.params[key], val)

    # tensors outside the flow prefix are ignored
    extra = dict(tensors)
    extra["encoder.embed"] = np.zeros((3, 3))
    out2 = ckpt.unpack_flow(extra, meta)
    assert set(out2.params) == set(model.params)

    # file round trip casts parameters to float32 exactly once
    path = str(tmp_path / "flow.ckpt")
    ckpt.save_checkpoint(path, tensors, meta)
    loaded, meta2 = ckpt.load_checkpoint(path)
    out3 = ckpt.unpack_flow(loaded, meta2)
    for key, val in model.params.items():
        assert np.array_equal(out3.params[key], val.astype(np.float32))


def test_unpack_flow_incompatible():
    cfg = VectorFieldConfig(depth=1, width=2, hidden=4, attention=False)
    model = init_flow_model(cfg, RngStream(12))
    tensors, meta = ckpt.pack_flow(model)
    with pytest.raises(IncompatibleCheckpoint):
        ckpt.unpack_flow(tensors, {})  # config fragment missing
    with pytest.raises(IncompatibleCheckpoint):
        ckpt.unpack_flow({"encoder.embed": np.zeros((3, 3))}, meta)  # no flow tensors


def test_combined_pipeline_and_flow_checkpoint(tmp_path):
    pipe = _toy_pipeline()
    cfg = VectorFieldConfig(depth=2, width=4, hidden=8, attention=False)
    model = init_flow_model(cfg, RngStream(22))

    pipe_tensors, pipe_meta = ckpt.pack_pipeline(pipe)
    flow_tensors, flow_meta = ckpt.pack_flow(model)
    assert not set(pipe_tensors) & set(flow_tensors)

    tensors = {**pipe_tensors, **flow_tensors}
    meta = {**pipe_meta, **flow_meta}
    path = str(tmp_path / "both.ckpt")
    ckpt.save_checkpoint(path, tensors, meta)
    loaded, meta2 = ckpt.load_checkpoint(path)

    out_pipe = ckpt.unpack_pipeline(loaded, meta2)
    out_flow = ckpt.unpack_flow(loaded, meta2)
    assert out_pipe.l_max == pipe.l_max and out_pipe.dim == pipe.dim
    assert out_flow.cfg.to_dict() == cfg.to_dict()
    for key, val in model.params.items():
        assert np.array_equal(out_flow.params[key], val.astype(np.float32))
