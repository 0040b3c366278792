"""SCT1 coefficient container.

Layout, all little-endian::

    b"SCT1" | u32 header length | UTF-8 JSON header | float32 payload

The header lists the tensors in payload order with their shapes; the
payload is their concatenation in C order (path-major for S2).
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import ContainerError, DataError
from .scattering import (
    Coefficients,
    Scalogram,
    ScatteringConfig,
    ScatteringPath,
    ScatteringTensor,
)

__all__ = [
    "MAGIC",
    "write_tensors",
    "read_tensors",
    "parse_container",
    "write_coefficients",
    "read_coefficients",
    "coefficients_header",
]

MAGIC = b"SCT1"
VERSION = 1
_MAX_HEADER = 64 * 2**20


def _encode(tensors: dict, header: dict) -> bytes:
    header = dict(header)
    table = []
    chunks = []
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        table.append({"name": str(name), "shape": [int(s) for s in a.shape]})
        chunks.append(a.tobytes())
    header.update({"format": "SCT1", "version": VERSION, "dtype": "float32",
                   "byte_order": "little", "tensors": table})
    blob = json.dumps(header, sort_keys=True, allow_nan=False).encode("utf-8")
    return MAGIC + struct.pack("<I", len(blob)) + blob + b"".join(chunks)


def write_tensors(path, tensors: dict, header: dict | None = None) -> None:
    """Write named float32 tensors with a JSON header."""
    Path(path).write_bytes(_encode(tensors, header or {}))


def _shape_of(entry) -> tuple:
    if not isinstance(entry, dict):
        raise ContainerError("tensor table entries must be objects")
    name = entry.get("name")
    shape = entry.get("shape")
    if not isinstance(name, str):
        raise ContainerError("tensor name must be a string")
    if not isinstance(shape, list) or not all(
            isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in shape):
        raise ContainerError(f"tensor {name!r} has an invalid shape {shape!r}")
    return name, tuple(shape)


def parse_container(data: bytes):
    """Decode a container held in memory; returns ``(header, tensors)``."""
    if len(data) < 8:
        raise ContainerError("file too short for an SCT1 header")
    if data[:4] != MAGIC:
        raise ContainerError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    (hlen,) = struct.unpack("<I", data[4:8])
    if hlen > _MAX_HEADER or 8 + hlen > len(data):
        raise ContainerError(f"header length {hlen} exceeds the file size {len(data)}")
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, ValueError, RecursionError) as exc:
        raise ContainerError(f"header is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise ContainerError("header must be a JSON object")
    if header.get("format") != "SCT1" or header.get("dtype") != "float32":
        raise ContainerError("header does not describe float32 SCT1 data")
    if header.get("byte_order", "little") != "little":
        raise ContainerError("only little-endian payloads are supported")
    table = header.get("tensors")
    if not isinstance(table, list) or not table:
        raise ContainerError("header lists no tensors")
    payload = memoryview(data)[8 + hlen:]
    shapes = [_shape_of(e) for e in table]
    names = [n for n, _ in shapes]
    if len(set(names)) != len(names):
        raise ContainerError("duplicate tensor names")
    sizes = [math.prod(s) * 4 for _, s in shapes]
    if sum(sizes) != len(payload):
        raise ContainerError(f"payload holds {len(payload)} bytes, header describes "
                             f"{sum(sizes)}")
    tensors = {}
    offset = 0
    for (name, shape), size in zip(shapes, sizes):
        arr = np.frombuffer(payload[offset:offset + size], dtype="<f4").reshape(shape)
        tensors[name] = arr.copy()
        offset += size
    return header, tensors


def read_tensors(path):
    """Read a container; returns ``(header, tensors)``.  Raises ContainerError."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return parse_container(data)


def coefficients_header(coeffs: Coefficients, provenance: dict | None = None) -> dict:
    return {
        "config": coeffs.config.to_dict(),
        "n_samples": int(coeffs.n_samples),
        "frame_rate": coeffs.s1.frame_rate,
        "lambda_grid": [float(v) for v in coeffs.s1.lambda_grid],
        "paths": [p.to_dict() for p in coeffs.s2.paths],
        "provenance": provenance or {},
    }


def write_coefficients(path, coeffs: Coefficients, provenance: dict | None = None) -> None:
    """Store S1 and S2 with configuration, path table and provenance."""
    if not coeffs.s2.paths:
        raise ContainerError("empty path table")
    write_tensors(path, {"S1": coeffs.s1.values, "S2": coeffs.s2.values},
                  coefficients_header(coeffs, provenance))


def read_coefficients(path):
    """Read coefficients written by :func:`write_coefficients`.

    Returns ``(coefficients, header)``.
    """
    header, tensors = read_tensors(path)
    try:
        s1, s2 = tensors["S1"], tensors["S2"]
        paths = [ScatteringPath.from_dict(p) for p in header["paths"]]
        cfg = ScatteringConfig.from_dict(header["config"])
        grid = np.asarray(header["lambda_grid"], dtype=np.float64)
        rate = float(header["frame_rate"])
        n = int(header["n_samples"])
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ContainerError(f"incomplete coefficient header: {exc!r}") from exc
    if not paths:
        raise ContainerError("empty path table")
    if s1.ndim != 2 or s2.ndim != 3 or s2.shape[0] != len(paths):
        raise ContainerError(f"tensor shapes S1 {s1.shape}, S2 {s2.shape} do not match "
                             f"{len(paths)} paths")
    if s1.shape[1] != grid.size or s2.shape[1:] != s1.shape:
        raise ContainerError("S1 and S2 shapes disagree with each other or the grid")
    coeffs = Coefficients(
        Scalogram(s1.astype(np.float64), rate, grid),
        ScatteringTensor(paths, s2.astype(np.float64), rate, grid, "S2"),
        cfg,
        n,
    )
    return coeffs, header
