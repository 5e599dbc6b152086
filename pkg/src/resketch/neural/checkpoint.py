"""Binary checkpoint persistence.

Layout (little-endian):

    magic "SKCK" | u32 format version
    u32 header_len | header JSON (UTF-8): kind, architecture, train config,
                     vocabulary tail (tokens after the reserved specials)
    u32 n_tensors | per tensor: u16 name_len, name, u8 ndim, u32 dims...,
                    row-major float32 data
    u32 CRC32 of everything before it

Round trips are bit-identical for float32 models.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import asdict

import numpy as np

from ..data import SPECIALS, Vocabulary
from ..errors import ArchitectureMismatch, CorruptCheckpoint, VersionMismatch
from .models import Editor, Sketcher, TrainConfig

MAGIC = b"SKCK"
VERSION = 1


def save_checkpoint(model, path) -> None:
    header = {
        "kind": model.kind,
        "config": asdict(model.config),
        "vocab_tail": model.vocab.id_to_token[len(SPECIALS):],
    }
    raw_header = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(struct.pack("<I", len(raw_header)))
    buf.write(raw_header)
    params = model.store.params
    buf.write(struct.pack("<I", len(params)))
    for name, p in params.items():
        raw_name = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw_name)))
        buf.write(raw_name)
        buf.write(struct.pack("<B", p.value.ndim))
        for dim in p.value.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(np.ascontiguousarray(p.value, dtype="<f4").tobytes())
    body = buf.getvalue()
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


def load_checkpoint(path, expect_config: TrainConfig = None):
    """Rebuild a model from a checkpoint file.

    ``expect_config`` cross-checks the architecture fields and raises
    :class:`ArchitectureMismatch` when they disagree.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CorruptCheckpoint(f"{path} is not a checkpoint (bad magic)")
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    body = blob[:-4]
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise CorruptCheckpoint(f"{path} fails its checksum")
    view = io.BytesIO(body[4:])

    def read(fmt):
        size = struct.calcsize(fmt)
        chunk = view.read(size)
        if len(chunk) != size:
            raise CorruptCheckpoint(f"{path} is truncated")
        return struct.unpack(fmt, chunk)

    (version,) = read("<I")
    if version != VERSION:
        raise VersionMismatch(
            f"checkpoint version {version}, expected {VERSION}")
    (header_len,) = read("<I")
    try:
        header = json.loads(view.read(header_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpoint(f"unreadable header: {e}") from None
    config = TrainConfig(**header["config"])
    if expect_config is not None:
        got = config.arch_dict(header["kind"])
        want = expect_config.arch_dict(header["kind"])
        if got != want:
            raise ArchitectureMismatch(
                f"checkpoint architecture {got} != expected {want}")
    vocab = Vocabulary(header["vocab_tail"])
    rng = np.random.default_rng(0)  # initializer output is fully overwritten
    cls = {"sketcher": Sketcher, "editor": Editor}.get(header["kind"])
    if cls is None:
        raise CorruptCheckpoint(f"unknown model kind {header['kind']!r}")
    model = cls(vocab, config, rng)
    (n_tensors,) = read("<I")
    params = model.store.params
    if n_tensors != len(params):
        raise CorruptCheckpoint(
            f"{n_tensors} tensors stored, model has {len(params)}")
    for _ in range(n_tensors):
        (name_len,) = read("<H")
        name = view.read(name_len).decode("utf-8")
        (ndim,) = read("<B")
        shape = tuple(read("<I")[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = view.read(count * 4)
        if len(data) != count * 4:
            raise CorruptCheckpoint(f"{path} is truncated")
        if name not in params:
            raise CorruptCheckpoint(f"unexpected tensor {name!r}")
        if params[name].value.shape != shape:
            raise ArchitectureMismatch(
                f"tensor {name!r} has shape {shape}, "
                f"model expects {params[name].value.shape}")
        params[name].value[...] = np.frombuffer(
            data, dtype="<f4").reshape(shape)
    return model
