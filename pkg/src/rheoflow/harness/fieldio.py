"""Binary field files.

Layout: 8-byte magic ``TRHEOFLD``, three little-endian uint32 grid dims
(nx, ny, nz), one little-endian uint32 component count, then for each
component nx*ny*nz little-endian float64 values with the x index varying
fastest. Round-trips are bit exact; any size mismatch is rejected before
data is returned.
"""
from __future__ import annotations

import os
import struct

import numpy as np

from ..errors import FieldFormatError

MAGIC = b"TRHEOFLD"
_HEADER = struct.Struct("<8sIIII")


def write_field(path: str | os.PathLike, values: np.ndarray) -> None:
    """Write a scalar (nx,ny,nz) or multi-component (c,nx,ny,nz) array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise FieldFormatError(
            f"expected a (nx,ny,nz) or (components,nx,ny,nz) array, "
            f"got shape {arr.shape}")
    comps, nx, ny, nz = arr.shape
    with open(os.fspath(path), "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, nx, ny, nz, comps))
        for comp in arr:
            fh.write(np.ascontiguousarray(comp.ravel(order="F"),
                                          dtype="<f8").tobytes())


def read_field(path: str | os.PathLike) -> np.ndarray:
    """Read a field file; scalar files come back (nx,ny,nz), else with a
    leading component axis."""
    with open(os.fspath(path), "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FieldFormatError(f"{path}: file shorter than the header")
    magic, nx, ny, nz, comps = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}")
    if comps < 1 or min(nx, ny, nz) < 1:
        raise FieldFormatError(f"{path}: degenerate dimensions "
                               f"({nx},{ny},{nz}) x {comps}")
    expected = _HEADER.size + 8 * comps * nx * ny * nz
    if len(blob) != expected:
        raise FieldFormatError(
            f"{path}: payload size {len(blob) - _HEADER.size} does not match "
            f"dims ({nx},{ny},{nz}) x {comps} components")
    flat = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    per = nx * ny * nz
    out = np.stack([flat[c * per:(c + 1) * per].reshape((nx, ny, nz),
                                                        order="F")
                    for c in range(comps)])
    return out[0].copy() if comps == 1 else out.copy()
