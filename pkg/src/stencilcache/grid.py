"""Structured grids, row-major linearization and stencil descriptions."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class GridShape:
    """Rectangular grid with dimensions ``n_1 .. n_d``; ``n_1`` is the unit-stride axis."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if not dims:
            raise ValueError("grid needs at least one dimension")
        if any(n < 1 for n in dims):
            raise ValueError(f"grid dimensions must be positive, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    @property
    def min_dim(self) -> int:
        return min(self.dims)

    @property
    def strides(self) -> tuple[int, ...]:
        """Address multipliers ``m_1 = 1, m_{i+1} = n_1 * ... * n_i``."""
        out = [1]
        for n in self.dims[:-1]:
            out.append(out[-1] * n)
        return tuple(out)

    def contains(self, point: Sequence[int]) -> bool:
        return len(point) == self.d and all(0 <= x < n for x, n in zip(point, self.dims))

    def __str__(self):
        return "x".join(str(n) for n in self.dims)

    @classmethod
    def parse(cls, text: str) -> "GridShape":
        """Parse ``"45x91x100"``."""
        try:
            return cls(tuple(int(tok) for tok in text.lower().split("x")))
        except ValueError as exc:
            raise ValueError(f"bad grid shape {text!r}: {exc}") from None


@dataclass(frozen=True)
class Stencil:
    """Set of integer offset vectors. Offsets are kept sorted lexicographically."""

    offsets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        offs = sorted({tuple(int(c) for c in k) for k in self.offsets})
        if not offs:
            raise ValueError("stencil needs at least one offset")
        if len({len(k) for k in offs}) != 1:
            raise ValueError("stencil offsets have mixed dimensions")
        object.__setattr__(self, "offsets", tuple(offs))

    @property
    def d(self) -> int:
        return len(self.offsets[0])

    @property
    def radius(self) -> int:
        return max(abs(c) for k in self.offsets for c in k)

    @property
    def diameter(self) -> int:
        return 2 * self.radius + 1

    @property
    def size(self) -> int:
        return len(self.offsets)

    def as_array(self) -> np.ndarray:
        return np.array(self.offsets, dtype=np.int64)

    def is_symmetric(self) -> bool:
        offs = set(self.offsets)
        return all(tuple(-c for c in k) in offs for k in offs)

    @classmethod
    def parse(cls, text: str, d: int | None = None) -> "Stencil":
        """Parse ``"star:d=3,r=2"`` or a path to a file of offset vectors."""
        if text.startswith("star"):
            params = {}
            _, _, rest = text.partition(":")
            for item in filter(None, rest.split(",")):
                key, _, val = item.partition("=")
                params[key.strip()] = int(val)
            dim = params.get("d", d)
            if dim is None:
                raise ValueError("star stencil needs d=")
            return star_stencil(dim, params.get("r", 1))
        return read_stencil_file(text)


def star_stencil(d: int, r: int = 1) -> Stencil:
    """Origin plus ``±k e_i`` for ``1 <= k <= r``; ``1 + 2dr`` points."""
    if d < 1 or r < 1:
        raise ValueError("star stencil needs d >= 1 and r >= 1")
    offs = [(0,) * d]
    for i in range(d):
        for k in range(1, r + 1):
            for sign in (1, -1):
                v = [0] * d
                v[i] = sign * k
                offs.append(tuple(v))
    return Stencil(tuple(offs))


def read_stencil_file(path: str | Path) -> Stencil:
    """One integer vector per line, comma or whitespace separated; ``#`` starts a comment."""
    offs = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            offs.append(tuple(int(tok) for tok in line.replace(",", " ").split()))
    return Stencil(tuple(offs))


def linearize(point: Sequence[int], shape: GridShape) -> int:
    if not shape.contains(point):
        raise ValueError(f"point {tuple(point)} outside grid {shape}")
    return sum(x * m for x, m in zip(point, shape.strides))


def delinearize(addr: int, shape: GridShape) -> tuple[int, ...]:
    if not 0 <= addr < shape.size:
        raise ValueError(f"address {addr} outside grid {shape}")
    out = []
    for n in shape.dims:
        addr, x = divmod(addr, n)
        out.append(x)
    return tuple(out)


def linearize_many(points: np.ndarray, shape: GridShape) -> np.ndarray:
    """Vectorized :func:`linearize` for an ``(N, d)`` array; no bounds check."""
    return points.astype(np.int64) @ np.array(shape.strides, dtype=np.int64)


def interior_bounds(shape: GridShape, stencil: Stencil) -> list[tuple[int, int]]:
    """Per-axis half-open ranges of the K-interior (which is itself a box)."""
    if stencil.d != shape.d:
        raise ValueError("stencil and grid dimensions differ")
    offs = stencil.as_array()
    lo = np.maximum(0, -offs.min(axis=0))
    hi = np.array(shape.dims) - np.maximum(0, offs.max(axis=0))
    return [(int(a), int(b)) for a, b in zip(lo, hi)]


class EmptyInteriorError(ValueError):
    pass


def interior_points(shape: GridShape, stencil: Stencil) -> np.ndarray:
    """K-interior as an ``(N, d)`` array in natural order (axis 0 fastest)."""
    bounds = interior_bounds(shape, stencil)
    if any(b <= a for a, b in bounds):
        raise EmptyInteriorError(f"stencil of radius {stencil.radius} leaves no interior in grid {shape}")
    axes = [np.arange(a, b, dtype=np.int64) for a, b in bounds]
    # meshgrid over reversed axes so the first coordinate varies fastest
    mesh = np.meshgrid(*axes[::-1], indexing="ij")
    return np.stack([m.ravel() for m in mesh[::-1]], axis=1)


def k_interior(shape: GridShape, stencil: Stencil) -> set[tuple[int, ...]]:
    return {tuple(int(c) for c in p) for p in interior_points(shape, stencil)}


def k_extension(region: Iterable[Sequence[int]], stencil: Stencil) -> set[tuple[int, ...]]:
    out = set()
    for x in region:
        for k in stencil.offsets:
            out.add(tuple(a + b for a, b in zip(x, k)))
    return out

