"""Shared weight-file container: JSON header plus little-endian f32 blobs.

Layout: 4-byte magic, u32 header length, UTF-8 JSON header, then each
array's raw f32 bytes in the order the header's `blobs` list declares.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"TLW1"


def write_blob_file(path, header: dict, arrays: list[tuple[str, np.ndarray]]) -> None:
    header = dict(header)
    header["blobs"] = [{"name": name, "shape": list(a.shape)} for name, a in arrays]
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for _, a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_blob_file(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path} is not a weight file")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode())
        blobs = {}
        for spec in header["blobs"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(4 * count)
            blobs[spec["name"]] = (
                np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
            )
    return header, blobs
