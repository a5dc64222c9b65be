"""Versioned binary container for named arrays plus a JSON metadata record.

Layout: magic "QCNT", u32 version, u64 header length, UTF-8 JSON header,
then the raw little-endian array payloads concatenated in header order.
The header records each array's name, dtype, shape and byte count, so a
tampered shape is detected before any payload is read.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import (
    ContainerShapeError,
    ContainerTruncatedError,
    ContainerVersionError,
    DataError,
)

MAGIC = b"QCNT"
CONTAINER_VERSION = 1

_DTYPES = {"f8": np.dtype("<f8"), "i8": np.dtype("<i8")}


def save_container(path: str | Path, kind: str, meta: dict,
                   arrays: dict[str, np.ndarray]) -> None:
    manifest = []
    payloads = []
    for name, arr in arrays.items():
        if arr.dtype.kind == "f":
            code = "f8"
        elif arr.dtype.kind in "iu":
            code = "i8"
        else:
            raise DataError(f"array {name!r} has unsupported dtype {arr.dtype}")
        data = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        manifest.append({
            "name": name,
            "dtype": code,
            "shape": list(arr.shape),
            "nbytes": len(data),
        })
        payloads.append(data)
    header = json.dumps({"kind": kind, "meta": meta, "arrays": manifest}).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", CONTAINER_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for data in payloads:
            fh.write(data)


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ContainerTruncatedError(f"file ends inside {what}")
    return data


def load_container(path: str | Path, expected_kind: str | None = None):
    """Read a container; returns (kind, meta, arrays in header order)."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise DataError(f"{path}: not a container file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != CONTAINER_VERSION:
            raise ContainerVersionError(
                f"{path}: container version {version}, expected {CONTAINER_VERSION}"
            )
        (hlen,) = struct.unpack("<Q", _read_exact(fh, 8, "header length"))
        try:
            header = json.loads(_read_exact(fh, hlen, "header"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: bad container header: {exc}") from None
        kind = header.get("kind", "")
        if expected_kind is not None and kind != expected_kind:
            raise DataError(f"{path}: container kind {kind!r}, expected {expected_kind!r}")
        arrays: dict[str, np.ndarray] = {}
        for entry in header["arrays"]:
            name = entry["name"]
            dtype = _DTYPES.get(entry["dtype"])
            if dtype is None:
                raise DataError(f"{path}: unknown dtype {entry['dtype']!r}")
            shape = tuple(int(s) for s in entry["shape"])
            expect = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if expect != entry["nbytes"]:
                raise ContainerShapeError(
                    f"{path}: array {name!r} shape {shape} disagrees with payload size"
                )
            data = _read_exact(fh, expect, f"array {name!r}")
            arrays[name] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()
        if fh.read(1):
            raise ContainerShapeError(f"{path}: trailing bytes after declared payload")
    return kind, header.get("meta", {}), arrays
