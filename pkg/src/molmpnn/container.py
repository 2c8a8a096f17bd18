"""Binary container for caches and checkpoints.

Layout: 8-byte magic, uint32 format version, uint64 header length, UTF-8 JSON
header, then the raw bytes of each float64 array in the order the header lists
them. Arrays round-trip bit-exactly; integer payloads (e.g. edge indices) are
stored as float64 and cast back by the caller, which is exact below 2**53.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MOLMPNN\x00"
FORMAT_VERSION = 1


class ContainerError(Exception):
    pass


def write_container(path: str | Path, meta: dict,
                    arrays: dict[str, np.ndarray]) -> None:
    entries = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        entries.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {"meta": meta, "arrays": entries}
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def read_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ContainerError(f"{path}: not a recognized container (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ContainerError(
                f"{path}: unsupported container version {version}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        arrays = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ContainerError(f"{path}: truncated array {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype=np.float64).reshape(shape).copy()
    return header["meta"], arrays
