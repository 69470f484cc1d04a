"""Deterministic binary container for named arrays plus a JSON header.

Layout: 8-byte magic, little-endian u64 header length, UTF-8 JSON header
(sorted keys), then the raw little-endian array bytes in name order.  Unlike
zip-based formats there are no timestamps, so equal inputs give equal bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import MarkerPermError


class ContainerError(MarkerPermError, ValueError):
    """File is not a readable container."""


_MAGIC = b"MPERMCK1"


def save_tensors(path, meta: dict, arrays: dict) -> None:
    """Deterministic self-describing container: magic, JSON header, raw arrays."""
    entries, blobs, offset = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        if a.dtype.kind == "f":
            a = a.astype("<f8")
        elif a.dtype.kind in "iu":
            a = a.astype("<i8")
        elif a.dtype.kind == "b":
            a = a.astype("u1")
        elif a.dtype.kind == "U":
            a = np.char.encode(a, "utf-8")
        raw = a.tobytes()
        entries.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                        "offset": offset, "nbytes": len(raw),
                        "kind": arrays[name].dtype.kind if hasattr(arrays[name], "dtype") else "f"})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "tensors": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_tensors(path) -> tuple[dict, dict]:
    data = Path(path).read_bytes()
    if data[:len(_MAGIC)] != _MAGIC:
        raise ContainerError(f"{path}: not a markerperm container")
    try:
        (hlen,) = struct.unpack("<Q", data[len(_MAGIC):len(_MAGIC) + 8])
        start = len(_MAGIC) + 8
        header = json.loads(data[start:start + hlen].decode("utf-8"))
        base = start + hlen
        arrays = {}
        for e in header["tensors"]:
            raw = data[base + e["offset"]: base + e["offset"] + e["nbytes"]]
            a = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
            if e["kind"] == "b":
                a = a.astype(bool)
            elif e["kind"] == "U":
                a = np.char.decode(a, "utf-8")
            arrays[e["name"]] = a
    except (struct.error, UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise ContainerError(f"{path}: corrupt container ({exc})") from exc
    return header["meta"], arrays
