"""Periodic sampling grids and the fields that live on them.

The torus ``[-box/2, box/2)^d`` stands in for R^d.  Grid point ``j`` along an
axis sits at ``-box/2 + j * box / m`` so the origin is the sample with index
``m // 2``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"BVC1"
_HEADER = struct.Struct("<4sQQd")
_MAX_M = {1: 4096, 2: 256, 3: 64}


class FieldFormatError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    d: int
    m: int
    box: float

    def __post_init__(self):
        if self.d not in _MAX_M:
            raise ValueError(f"grid dimension must be 1, 2 or 3, got {self.d}")
        if self.m < 8 or self.m & (self.m - 1):
            raise ValueError(f"points per axis must be a power of two >= 8, got {self.m}")
        if self.m > _MAX_M[self.d]:
            raise ValueError(f"m={self.m} exceeds the limit {_MAX_M[self.d]} for d={self.d}")
        if not self.box > 0 or not np.isfinite(self.box):
            raise ValueError(f"box must be positive and finite, got {self.box}")
        if self.m**self.d > 2**22:
            raise ValueError("total number of grid points exceeds 2**22")

    @property
    def h(self) -> float:
        return self.box / self.m

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.d

    @property
    def size(self) -> int:
        return self.m**self.d

    def axis(self) -> np.ndarray:
        return -0.5 * self.box + self.h * np.arange(self.m)

    def points(self) -> np.ndarray:
        """Coordinates of every sample, shape ``shape + (d,)``."""
        axes = np.meshgrid(*([self.axis()] * self.d), indexing="ij")
        return np.stack(axes, axis=-1)

    def wavenumbers(self) -> list[np.ndarray]:
        """Angular wavenumbers per axis, broadcastable against ``shape``."""
        k = 2.0 * np.pi / self.box * np.fft.fftfreq(self.m, d=1.0 / self.m)
        out = []
        for i in range(self.d):
            s = [1] * self.d
            s[i] = self.m
            out.append(k.reshape(s))
        return out

    def biharmonic_symbol(self) -> np.ndarray:
        """|xi|^4 on the full FFT grid."""
        xi2 = sum(k**2 for k in self.wavenumbers())
        return np.broadcast_to(xi2, self.shape) ** 2

    def index_offsets(self) -> np.ndarray:
        """Periodic distance from sample 0 to every sample, shape ``shape``.

        Used as the convolution stencil for ball sums; distances are measured
        in length units.
        """
        j = np.arange(self.m)
        jj = np.minimum(j, self.m - j) * self.h
        axes = np.meshgrid(*([jj] * self.d), indexing="ij")
        return np.sqrt(sum(a**2 for a in axes))

    def periodic_distance(self, x, y) -> np.ndarray:
        """Torus distance; points have trailing axis ``d`` (scalars allowed for d=1)."""
        diff = np.abs(np.asarray(x, float) - np.asarray(y, float)) % self.box
        diff = np.minimum(diff, self.box - diff)
        if self.d == 1 and (diff.ndim == 0 or diff.shape[-1] != 1):
            return diff
        return np.sqrt(np.sum(diff**2, axis=-1))

    def refine(self) -> "GridSpec":
        return GridSpec(self.d, 2 * self.m, self.box)


@dataclass(frozen=True, eq=False)
class SampledField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} samples, got {v.size}")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field samples must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: GridSpec, func) -> "SampledField":
        pts = grid.points()
        return cls(grid, func(*np.moveaxis(pts, -1, 0)))

    def with_values(self, values) -> "SampledField":
        return SampledField(self.grid, values)

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, self.grid.d, self.grid.m, float(self.grid.box))
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SampledField":
        if len(blob) < _HEADER.size:
            raise FieldFormatError("truncated header")
        magic, d, m, box = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise FieldFormatError(f"bad magic {magic!r}")
        grid = GridSpec(int(d), int(m), float(box))
        body = blob[_HEADER.size:]
        if len(body) != 8 * grid.size:
            raise FieldFormatError(f"expected {8 * grid.size} payload bytes, got {len(body)}")
        values = np.frombuffer(body, dtype="<f8").astype(float).reshape(grid.shape)
        return cls(grid, values)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "SampledField":
        return cls.from_bytes(Path(path).read_bytes())
