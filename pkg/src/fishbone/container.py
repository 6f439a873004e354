"""Single-file binary container: JSON header + named little-endian array blocks.

Used by the rig file, the weight cache, and keyframe tracks. Writing is
atomic (temp file + rename) and fully deterministic: the header is serialized
with sorted keys and blocks are laid out in sorted name order, so identical
content yields identical bytes.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import RigFileError

MAGIC = b"FBONE1\x00\n"
_DTYPES = {"<f8": "<f8", "<i8": "<i8", "<u1": "<u1"}


def _canonical(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    if arr.dtype.kind == "f":
        return arr.astype("<f8", copy=False)
    if arr.dtype.kind in "iu":
        return arr.astype("<i8", copy=False)
    if arr.dtype.kind == "b":
        return arr.astype("<i8", copy=False)
    raise TypeError(f"unsupported dtype {arr.dtype}")


def write_container(path, meta: dict, blocks: dict[str, np.ndarray]) -> None:
    path = Path(path)
    entries = []
    payload = []
    offset = 0
    for name in sorted(blocks):
        arr = _canonical(blocks[name])
        data = arr.tobytes()
        entries.append(
            {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset}
        )
        payload.append(data)
        offset += len(data)
    header = json.dumps(
        {"meta": meta, "blocks": entries, "data_length": offset},
        sort_keys=True, separators=(",", ":"),
    ).encode()
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = tempfile.NamedTemporaryFile("wb", dir=str(path.parent), suffix=".tmp", delete=False)
    try:
        tmp.write(MAGIC)
        tmp.write(struct.pack("<Q", len(header)))
        tmp.write(header)
        for data in payload:
            tmp.write(data)
        tmp.close()
        os.replace(tmp.name, path)
    finally:
        if os.path.exists(tmp.name):
            os.unlink(tmp.name)


def read_container(path):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise RigFileError(f"cannot read {path}: {exc}")
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise RigFileError(f"{path.name}: not a fishbone container")
    (hlen,) = struct.unpack("<Q", raw[len(MAGIC): len(MAGIC) + 8])
    start = len(MAGIC) + 8
    if len(raw) < start + hlen:
        raise RigFileError(f"{path.name}: truncated header")
    try:
        header = json.loads(raw[start: start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RigFileError(f"{path.name}: corrupt header ({exc})")
    data = raw[start + hlen:]
    if len(data) != header.get("data_length", -1):
        raise RigFileError(
            f"{path.name}: integrity check failed "
            f"(expected {header.get('data_length')} data bytes, found {len(data)})"
        )
    blocks = {}
    try:
        for ent in header["blocks"]:
            dt = np.dtype(ent["dtype"])
            count = int(np.prod(ent["shape"])) if ent["shape"] else 1
            off = ent["offset"]
            arr = np.frombuffer(data, dtype=dt, count=count, offset=off).reshape(ent["shape"])
            blocks[ent["name"]] = arr.copy()
    except (KeyError, TypeError, ValueError) as exc:
        raise RigFileError(f"{path.name}: corrupt block table ({exc})")
    return header["meta"], blocks
