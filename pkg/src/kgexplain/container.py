"""Deterministic binary container for graph bundles and checkpoints.

Layout (little-endian throughout):

    bytes 0..7    magic ``KGXC0001`` (format id + version)
    bytes 8..15   uint64 header length in bytes
    header        UTF-8 JSON, sorted keys, compact separators
    payload       raw C-order array bytes, concatenated in header order

The header is ``{"kind": ..., "meta": {...}, "arrays": [{"name", "dtype",
"shape"}, ...]}``. Arrays are written sorted by name and always with an
explicit little-endian dtype, so writing the same content twice produces
byte-identical files (no timestamps, no compression).
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

MAGIC = b"KGXC0001"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    """Raised for malformed or mismatching container files."""


def _canonical_dtype(arr: np.ndarray) -> np.dtype:
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    if dt.kind not in "fiub":
        raise ContainerError(f"unsupported array dtype {arr.dtype!r}")
    return dt


def write_container(path: str | Path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write ``meta`` and ``arrays`` to ``path``; overwrites existing files."""
    entries = []
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dt = _canonical_dtype(arr)
        arr = arr.astype(dt, copy=False)
        entries.append({"name": name, "dtype": dt.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes(order="C"))
    header = {
        "kind": kind,
        "format_version": FORMAT_VERSION,
        "meta": meta,
        "arrays": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def read_container(path: str | Path, expected_kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a container, returning ``(meta, arrays)``."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ContainerError(f"{path}: not a recognized container (bad magic)")
        header_len = int.from_bytes(fh.read(8), "little")
        try:
            header = json.loads(fh.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ContainerError(f"{path}: corrupt header ({exc})") from exc
        if header.get("format_version") != FORMAT_VERSION:
            raise ContainerError(f"{path}: unsupported format version {header.get('format_version')!r}")
        if expected_kind is not None and header.get("kind") != expected_kind:
            raise ContainerError(f"{path}: expected a {expected_kind!r} container, found {header.get('kind')!r}")
        arrays: dict[str, np.ndarray] = {}
        for entry in header["arrays"]:
            dt = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * dt.itemsize)
            if len(raw) != count * dt.itemsize:
                raise ContainerError(f"{path}: truncated payload for array {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype=dt).reshape(shape).copy()
    return header["meta"], arrays


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
