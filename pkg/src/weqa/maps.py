"""Distortion-map export: 8-bit visualisations and the raw float format.

Raw layout (little-endian)::

    offset  size  field
    0       8     magic b"WEQAMAP1"
    8       4     width  (uint32)
    12      4     height (uint32)
    16      4*w*h float32 samples, row-major
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ModelFormatError
from .imgio import atomic_write_bytes, encode_image

RAW_MAGIC = b"WEQAMAP1"
_HEADER = struct.Struct("<8sII")


def normalize_for_display(dmap) -> tuple[np.ndarray, float, float]:
    """Affine map of ``dmap`` onto [0, 1]; returns the plane and the (min, max) used."""
    dmap = np.asarray(dmap, dtype=np.float64)
    lo, hi = float(dmap.min()), float(dmap.max())
    if hi > lo:
        return (dmap - lo) / (hi - lo), lo, hi
    return np.zeros_like(dmap), lo, hi


def export_map_image(dmap, path) -> dict:
    """Write an 8-bit PNG/PGM; returns ``{"min": .., "max": ..}`` for the report."""
    plane, lo, hi = normalize_for_display(dmap)
    path = Path(path)
    atomic_write_bytes(path, encode_image(plane, path.suffix))
    return {"min": lo, "max": hi}


def raw_map_bytes(dmap) -> bytes:
    dmap = np.asarray(dmap)
    h, w = dmap.shape
    return _HEADER.pack(RAW_MAGIC, w, h) + dmap.astype("<f4").tobytes()


def write_raw_map(dmap, path) -> None:
    atomic_write_bytes(path, raw_map_bytes(dmap))


def read_raw_map(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ModelFormatError(f"{path}: truncated map header")
    magic, w, h = _HEADER.unpack_from(data)
    if magic != RAW_MAGIC:
        raise ModelFormatError(f"{path}: bad magic {magic!r}")
    if len(data) != _HEADER.size + 4 * w * h:
        raise ModelFormatError(f"{path}: expected {w}x{h} samples")
    return np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(h, w).astype(np.float64)


def write_map(dmap, path) -> dict:
    """Dispatch on suffix: ``.png``/``.pgm`` images, anything else raw float."""
    path = Path(path)
    if path.suffix.lower() in (".png", ".pgm"):
        return export_map_image(dmap, path)
    write_raw_map(dmap, path)
    arr = np.asarray(dmap)
    return {"min": float(arr.min()), "max": float(arr.max())}
