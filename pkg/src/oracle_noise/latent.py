"""The latent noise vector and its binary file format.

A latent is a flat float64 vector of length D together with
(channels, height, width) metadata, channels*height*width == D.

Binary format (little-endian throughout):

    bytes 0..3   magic b"ORCL"
    byte  4      format version, 0x01
    bytes 5..16  three uint32: channels, height, width
    rest         D float64 values
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch

_MAGIC = b"ORCL"
_VERSION = 1
_HEADER = struct.Struct("<III")


@dataclass(frozen=True)
class Latent:
    """D-dimensional noise vector with spatial shape metadata."""

    values: np.ndarray
    shape: tuple[int, int, int]

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        c, h, w = self.shape
        if c < 1 or h < 1 or w < 1:
            raise ShapeMismatch(f"non-positive latent shape {self.shape}")
        if c * h * w != values.size:
            raise ShapeMismatch(
                f"shape {self.shape} implies {c * h * w} values, got {values.size}"
            )
        if values.size < 2:
            raise ShapeMismatch("latent dimension must be >= 2")
        if not np.isfinite(values).all():
            raise ValueError("latent contains non-finite values")

    @property
    def dimension(self) -> int:
        return self.values.size

    def as_chw(self) -> np.ndarray:
        """View the flat values as a (channels, height, width) array."""
        return self.values.reshape(self.shape)

    def with_values(self, values: np.ndarray) -> "Latent":
        """New latent with the same shape metadata."""
        return Latent(values, self.shape)


def write_latent(latent: Latent, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(bytes([_VERSION]))
        fh.write(_HEADER.pack(*latent.shape))
        fh.write(latent.values.astype("<f8").tobytes())


def read_latent(path) -> Latent:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}, expected {_MAGIC!r}")
    if blob[4] != _VERSION:
        raise ValueError(f"{path}: unsupported format version {blob[4]}")
    c, h, w = _HEADER.unpack_from(blob, 5)
    values = np.frombuffer(blob, dtype="<f8", offset=5 + _HEADER.size)
    if values.size != c * h * w:
        raise ValueError(f"{path}: payload holds {values.size} floats, header says {c * h * w}")
    return Latent(values.copy(), (c, h, w))
