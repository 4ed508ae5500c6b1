"""Binary model files.

Layout, all integers little-endian::

    b"G2PM"                     magic
    u32                         format version
    u8                          architecture tag (0 enc-dec, 1 uni, 2 bi)
    u32 x5                      letter_dim, phoneme_dim, hidden_dim, layers, window
    u64                         seed
    f64                         init_scale
    u32 n, then n x (u32 len, utf-8 bytes)      letter table
    u32 n, then n x (u32 len, utf-8 bytes)      phoneme table
    float32 tensors, row-major, in ``model.param_shapes()`` order
    u32                         CRC-32 of every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from ..lexicon import SymbolTable
from .architectures import ARCHITECTURES, G2PModel, ModelConfig, model_class

MAGIC = b"G2PM"
VERSION = 1


class ModelFileError(ValueError):
    pass


class MagicMismatchError(ModelFileError):
    pass


class VersionMismatchError(ModelFileError):
    pass


class TruncatedModelError(ModelFileError):
    pass


class ChecksumError(ModelFileError):
    pass


def _pack_table(table: SymbolTable) -> bytes:
    out = [struct.pack("<I", len(table))]
    for sym in table.symbols:
        raw = sym.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
    return b"".join(out)


def model_to_bytes(model: G2PModel) -> bytes:
    c = model.config
    parts = [
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<B", ARCHITECTURES.index(c.architecture)),
        struct.pack("<5I", c.letter_dim, c.phoneme_dim, c.hidden_dim, c.layers, c.window),
        struct.pack("<Qd", c.seed, c.init_scale),
        _pack_table(model.letters),
        _pack_table(model.phonemes),
    ]
    for name in model.param_shapes():
        parts.append(np.ascontiguousarray(model.params[name], dtype="<f4").tobytes())
    payload = b"".join(parts)
    return payload + struct.pack("<I", zlib.crc32(payload))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedModelError(f"model file truncated at byte {len(self.data)}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def table(self, kind: str) -> SymbolTable:
        (n,) = self.unpack("<I")
        syms = []
        for _ in range(n):
            (length,) = self.unpack("<I")
            try:
                syms.append(self.take(length).decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise ModelFileError(f"bad symbol encoding: {exc}") from None
        try:
            return SymbolTable(kind, syms)
        except ValueError as exc:
            raise ModelFileError(f"bad {kind} table: {exc}") from None


def model_from_bytes(data: bytes) -> G2PModel:
    if len(data) < 4 or data[:4] != MAGIC:
        raise MagicMismatchError("not a G2PM model file (bad magic)")
    r = _Reader(data)
    r.take(4)
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise VersionMismatchError(f"unsupported model format version {version} (expected {VERSION})")
    (tag,) = r.unpack("<B")
    if tag >= len(ARCHITECTURES):
        raise ModelFileError(f"unknown architecture tag {tag}")
    dims = r.unpack("<5I")
    seed, init_scale = r.unpack("<Qd")
    config = ModelConfig(ARCHITECTURES[tag], *dims, seed=seed, init_scale=init_scale)
    letters = r.table("letter")
    phonemes = r.table("phoneme")
    cls = model_class(config.architecture)
    # shapes only depend on config and tables, so probe them on a blank instance
    probe = cls.__new__(cls)
    probe.config, probe.letters, probe.phonemes = config, letters, phonemes
    shapes = probe.param_shapes()
    need = 4 * sum(int(np.prod(s)) for s in shapes.values()) + 4
    if r.pos + need > len(data):
        raise TruncatedModelError(
            f"model file truncated: {len(data)} bytes, expected {r.pos + need}"
        )
    if r.pos + need < len(data):
        raise ModelFileError("trailing bytes after model checksum")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc:
        raise ChecksumError("model file checksum mismatch")
    params = {}
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        params[name] = np.frombuffer(r.take(4 * count), dtype="<f4").astype(np.float32).reshape(shape)
    return cls(config, letters, phonemes, params, dtype=np.float32)


def save_model(model: G2PModel, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path) -> G2PModel:
    return model_from_bytes(Path(path).read_bytes())
