"""Binary serialization of trained models.

Layout, all little-endian:

    bytes 0-3   magic ``EPTM``
    u32         version (currently 1)
    u32 x 6     map rows, map cols, channels, patch size, descriptor grid,
                placement count
    f64         blend weight lambda
    f64 arrays  appearance mu, appearance phi, descriptor mu,
                descriptor phi, log prior -- row-major, in that order

Floats are written raw, so a load/save round trip is bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dsift import descriptor_length
from .model import DescriptorEpitome, DualEpitome, Epitome, MappingPrior

MAGIC = b"EPTM"
VERSION = 1

_HEADER = struct.Struct("<4s7Id")


class ModelFormatError(Exception):
    """Raised when a model file is truncated, corrupt, or inconsistent."""


def save_model(model: DualEpitome, path) -> None:
    """Write a model; identical models always produce identical bytes."""
    yiq = model.yiq
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        yiq.rows,
        yiq.cols,
        yiq.channels,
        model.patch_size,
        model.sift_grid,
        model.mapping_count,
        model.lam,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in (yiq.mu, yiq.phi, model.dsift.mu, model.dsift.phi, model.prior.log_pi):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path) -> DualEpitome:
    """Read a model file, validating the header and every array extent."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ModelFormatError(f"file too short to be a model ({len(blob)} bytes)")
    magic, version, rows, cols, chans, patch_size, sift_grid, count = _HEADER.unpack_from(
        blob
    )[:8]
    lam = _HEADER.unpack_from(blob)[8]
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}; not a model file")
    if version != VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    if min(rows, cols, chans, patch_size, sift_grid) < 1:
        raise ModelFormatError("model header contains zero-sized fields")
    if count != rows * cols:
        raise ModelFormatError(
            f"placement count {count} does not equal rows*cols ({rows * cols})"
        )
    dims = descriptor_length(sift_grid)
    sizes = [rows * cols * chans] * 2 + [count * dims] * 2 + [count]
    expected = _HEADER.size + 8 * sum(sizes)
    if len(blob) != expected:
        raise ModelFormatError(
            f"model payload is {len(blob)} bytes, expected {expected}"
        )

    arrays = []
    offset = _HEADER.size
    for size in sizes:
        arrays.append(
            np.frombuffer(blob, dtype="<f8", count=size, offset=offset).astype(np.float64)
        )
        offset += 8 * size
    mu, phi, desc_mu, desc_phi, log_pi = arrays
    try:
        return DualEpitome(
            yiq=Epitome(mu.reshape(rows, cols, chans), phi.reshape(rows, cols, chans)),
            dsift=DescriptorEpitome(
                desc_mu.reshape(count, dims), desc_phi.reshape(count, dims)
            ),
            prior=MappingPrior(log_pi),
            patch_size=patch_size,
            sift_grid=sift_grid,
            lam=lam,
        )
    except ValueError as exc:
        raise ModelFormatError(f"model file holds invalid parameters: {exc}") from exc
