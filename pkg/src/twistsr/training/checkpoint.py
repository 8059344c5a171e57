"""Versioned binary checkpoint format.

Layout (all integers little-endian):

    b"TWSR" | u32 format version | u64 header length | UTF-8 JSON header
    | float32 parameter blobs in store order [| Adam m blobs | Adam v blobs]
    | u32 CRC-32 of everything before it
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..imagecore import atomic_write
from ..nn import GeneratorConfig, ParameterStore, init_generator

MAGIC = b"TWSR"
FORMAT_VERSION = 1
_F32 = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


def architecture_hash(config: GeneratorConfig, shapes: dict[str, tuple[int, ...]]) -> str:
    desc = {"config": config.to_dict(), "params": [[k, list(v)] for k, v in shapes.items()]}
    return hashlib.sha256(json.dumps(desc, sort_keys=True).encode()).hexdigest()


@dataclass(eq=False)
class Checkpoint:
    config: GeneratorConfig
    params: ParameterStore
    provenance: dict = field(default_factory=dict)
    include_optimizer: bool = True
    version: int = FORMAT_VERSION

    @property
    def lineage(self) -> list[dict]:
        return self.provenance.get("lineage", [])

    def to_bytes(self) -> bytes:
        params = self.params
        shapes = params.shapes()
        with_opt = self.include_optimizer and params.step > 0 and len(params.m) == len(params)
        header = {
            "architecture": self.config.to_dict(),
            "architecture_hash": architecture_hash(self.config, shapes),
            "params": [[k, list(v)] for k, v in shapes.items()],
            "optimizer": {"type": "adam", "step": params.step} if with_opt else None,
            "provenance": self.provenance,
        }
        hdr = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        parts = [MAGIC, struct.pack("<I", self.version), struct.pack("<Q", len(hdr)), hdr]
        parts += [np.ascontiguousarray(t.data, dtype=_F32).tobytes() for _, t in params.items()]
        if with_opt:
            parts += [np.ascontiguousarray(params.m[k], dtype=_F32).tobytes() for k in params]
            parts += [np.ascontiguousarray(params.v[k], dtype=_F32).tobytes() for k in params]
        body = b"".join(parts)
        return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    def hash(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Checkpoint":
        if len(raw) < 4 or raw[:4] != MAGIC:
            raise CheckpointError("not a checkpoint file")
        if len(raw) < 20:
            raise CheckpointError("truncated checkpoint file")
        (version,) = struct.unpack_from("<I", raw, 4)
        if version > FORMAT_VERSION:
            raise CheckpointError(
                f"checkpoint format version {version} is newer than supported version {FORMAT_VERSION}"
            )
        if version < 1:
            raise CheckpointError(f"unknown checkpoint format version {version}")
        (hlen,) = struct.unpack_from("<Q", raw, 8)
        if 16 + hlen + 4 > len(raw):
            raise CheckpointError("truncated checkpoint file")
        try:
            header = json.loads(raw[16:16 + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
        shapes = {k: tuple(v) for k, v in header["params"]}
        count = sum(int(np.prod(s)) for s in shapes.values())
        opt = header.get("optimizer")
        n_blobs = 3 if opt else 1
        expected = 16 + hlen + 4 * count * n_blobs + 4
        if len(raw) < expected:
            raise CheckpointError("truncated checkpoint file")
        if len(raw) > expected:
            raise CheckpointError("trailing bytes after checkpoint data")
        (crc,) = struct.unpack_from("<I", raw, expected - 4)
        if zlib.crc32(raw[:expected - 4]) & 0xFFFFFFFF != crc:
            raise CheckpointError("checkpoint CRC mismatch (file corrupted)")

        config = GeneratorConfig.from_dict(header["architecture"])
        if architecture_hash(config, shapes) != header["architecture_hash"]:
            raise CheckpointError("architecture hash mismatch")
        store = init_generator(config, dtype=np.float32)
        if store.shapes() != shapes:
            raise CheckpointError("architecture hash mismatch: parameter layout does not match config")

        flat = np.frombuffer(raw, dtype=_F32, count=count * n_blobs, offset=16 + hlen)
        blobs = [flat[i * count:(i + 1) * count] for i in range(n_blobs)]

        def unpack(blob):
            out, pos = {}, 0
            for k, s in shapes.items():
                n = int(np.prod(s))
                out[k] = blob[pos:pos + n].reshape(s).astype(np.float32)
                pos += n
            return out

        store.load_arrays(unpack(blobs[0]))
        if opt:
            store.m = unpack(blobs[1])
            store.v = unpack(blobs[2])
            store.step = int(opt["step"])
        return cls(config=config, params=store, provenance=header.get("provenance", {}),
                   include_optimizer=bool(opt), version=version)

    def copy(self) -> "Checkpoint":
        return Checkpoint(self.config, self.params.copy(), json.loads(json.dumps(self.provenance)),
                          self.include_optimizer, self.version)


def save_checkpoint(c: Checkpoint, path: str | os.PathLike) -> None:
    atomic_write(path, c.to_bytes())


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from exc
    return Checkpoint.from_bytes(raw)


def zero_checkpoint(config: GeneratorConfig | None = None, scale: int = 2) -> Checkpoint:
    """All-zero parameters: the generator is then the identity map."""
    config = config or GeneratorConfig()
    store = init_generator(config, dtype=np.float32).zero_()
    return Checkpoint(config, store, {"scale": scale, "dataset": "none", "iterations": 0,
                                      "lineage": [{"stage": "zero-init", "dataset": "none",
                                                   "iterations": 0, "parent": None}]})
