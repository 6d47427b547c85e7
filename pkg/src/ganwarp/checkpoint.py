"""Checkpoint container and binary serialization.

Format: magic "GWCK", version u32, tensor count u32, then per tensor
(sorted by name for canonical bytes): name length u16 + UTF-8 name,
rank u8, dims u32 each, raw little-endian float32 data. The checkpoint
fingerprint is the SHA-256 of exactly this byte stream.
"""

from __future__ import annotations

import hashlib
import io
import struct

import numpy as np

MAGIC = b"GWCK"
VERSION = 1


class ModelCheckpoint:
    """Immutable-by-convention named float32 tensor set."""

    def __init__(self, tensors):
        self.tensors = {}
        for name, arr in tensors.items():
            a = np.asarray(arr, np.float32)
            if not np.isfinite(a).all():
                raise ValueError(f"tensor {name!r} contains non-finite values")
            self.tensors[name] = a
        self._fingerprint = None

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def names(self):
        return sorted(self.tensors)

    def replace(self, updates):
        """New checkpoint with some tensors swapped out."""
        merged = dict(self.tensors)
        for name, arr in updates.items():
            if name not in merged:
                raise KeyError(f"unknown tensor {name!r}")
            if merged[name].shape != np.asarray(arr).shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: {merged[name].shape} vs "
                    f"{np.asarray(arr).shape}")
            merged[name] = arr
        return ModelCheckpoint(merged)

    def to_bytes(self):
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<II", VERSION, len(self.tensors)))
        for name in self.names():
            arr = self.tensors[name]
            nb = name.encode("utf-8")
            buf.write(struct.pack("<H", len(nb)))
            buf.write(nb)
            buf.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                buf.write(struct.pack("<I", d))
            buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        return buf.getvalue()

    @property
    def fingerprint(self):
        if self._fingerprint is None:
            self._fingerprint = hashlib.sha256(self.to_bytes()).hexdigest()
        return self._fingerprint

    def save(self, path):
        data = self.to_bytes()
        with open(path, "wb") as f:
            f.write(data)
        return hashlib.sha256(data).hexdigest()

    @classmethod
    def from_bytes(cls, data):
        buf = io.BytesIO(data)
        magic = buf.read(4)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, count = struct.unpack("<II", buf.read(8))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", buf.read(2))
            name = buf.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<B", buf.read(1))
            dims = struct.unpack(f"<{rank}I", buf.read(4 * rank))
            n = int(np.prod(dims)) if rank else 1
            raw = buf.read(4 * n)
            if len(raw) != 4 * n:
                raise ValueError(f"truncated tensor data for {name!r}")
            tensors[name] = np.frombuffer(raw, "<f4").reshape(dims).copy()
        if buf.read(1):
            raise ValueError("trailing bytes after last tensor")
        return cls(tensors)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())
