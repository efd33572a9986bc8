"""Versioned binary cache files.

Layout: 8-byte magic, 2-byte little-endian format version, 64-byte ASCII hex
key, then an ``.npz`` archive holding the arrays.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .errors import CacheError

FORMAT_VERSION = 1
_KEY_LEN = 64


def write_blob(path: str | Path, magic: bytes, key: str, arrays: dict[str, np.ndarray]) -> None:
    assert len(magic) == 8
    if len(key) != _KEY_LEN:
        raise ValueError("cache keys are 64-character hex digests")
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(key.encode("ascii"))
        fh.write(buf.getvalue())


def read_blob(path: str | Path, magic: bytes, key: str | None = None) -> tuple[str, dict[str, np.ndarray]]:
    """Read a blob; when ``key`` is given, a mismatch raises ``CacheError``."""
    data = Path(path).read_bytes()
    head = 8 + 2 + _KEY_LEN
    if len(data) < head or data[:8] != magic:
        raise CacheError(f"{path}: not a {magic.decode(errors='replace')} cache file")
    (version,) = struct.unpack("<H", data[8:10])
    if version != FORMAT_VERSION:
        raise CacheError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    stored = data[10:head].decode("ascii")
    if key is not None and stored != key:
        raise CacheError(f"{path}: stale cache (key mismatch)")
    with np.load(io.BytesIO(data[head:])) as npz:
        arrays = {k: npz[k] for k in npz.files}
    return stored, arrays
