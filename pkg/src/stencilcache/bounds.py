"""Closed-form lower/upper bounds on cache loads and octahedron/simplex point counts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .grid import GridShape, Stencil
from .lattice import lll_constant


def binom(n: int, k: int) -> int:
    """Binomial coefficient with ``C(n, k) = 0`` outside ``0 <= k <= n``."""
    if k < 0 or n < 0 or k > n:
        return 0
    return math.comb(n, k)


def octahedron_count(d: int, t: int) -> int:
    """Integer points with ``|x_1| + ... + |x_d| <= t``."""
    _check_dt(d, t)
    return sum(2**k * binom(d, k) * binom(t, k) for k in range(d + 1))


def octahedron_boundary(d: int, t: int) -> int:
    """Points at L1 distance exactly ``t + 1``: ``|O(d, t+1)| - |O(d, t)|``."""
    _check_dt(d, t)
    return sum(2**k * binom(d, k) * binom(t, k - 1) for k in range(1, d + 1))


def simplex_count(d: int, t: int) -> int:
    """Nonnegative integer points with coordinate sum ``<= t``."""
    _check_dt(d, t)
    return binom(d + t, d)


def _check_dt(d: int, t: int):
    if d < 1 or t < 0:
        raise ValueError(f"need d >= 1 and t >= 0, got d={d}, t={t}")


def pick_octahedron_radius(d: int, cache_size: int) -> int:
    """Smallest ``t`` with ``|dO(d, t)| >= 8 d S``."""
    if d < 2 or cache_size < 1:
        raise ValueError("need d >= 2 and S >= 1")
    target = 8 * d * cache_size
    t = 0
    while octahedron_boundary(d, t) < target:
        t += 1
    return t


def lower_constant(d: int) -> float:
    """``1 / (d (2d+1) 2^(d+2))``."""
    return 1.0 / (d * (2 * d + 1) * 2 ** (d + 2))


def surface_constant(d: int) -> float:
    """``2 d c_d`` with ``c_d`` the LLL defect bound."""
    return 2 * d * lll_constant(d)


def upper_constant(d: int, r: int) -> float:
    return r * (2 * r + 1) ** d * surface_constant(d)


@dataclass(frozen=True)
class BoundInputs:
    shape: GridShape
    cache_size: int
    radius: int = 1
    eccentricity: float = 1.0
    rhs: int = 1
    interior_size: int | None = None

    def __post_init__(self):
        if self.rhs < 1:
            raise ValueError("need at least one RHS array")
        if self.cache_size < 1:
            raise ValueError("cache size must be positive")
        if self.eccentricity < 1:
            raise ValueError("eccentricity is at least 1")

    @property
    def d(self) -> int:
        return self.shape.d

    @property
    def grid_size(self) -> int:
        return self.shape.size

    @property
    def min_dim(self) -> int:
        return self.shape.min_dim

    @property
    def interior(self) -> int:
        """Size of the region where q is computed (defaults to the radius-r interior)."""
        if self.interior_size is not None:
            return self.interior_size
        return math.prod(max(n - 2 * self.radius, 0) for n in self.shape.dims)


@dataclass(frozen=True)
class BoundResult:
    value: float
    constants: dict[str, float] = field(default_factory=dict)
    extras: dict[str, float] = field(default_factory=dict)
    flags: tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.flags


def _lower(inputs: BoundInputs, p: int, cache_eff: int, boundary_term: int) -> BoundResult:
    d, l, G = inputs.d, inputs.min_dim, inputs.grid_size
    if d < 2:
        raise ValueError("the lower bound needs d >= 2")
    c = lower_constant(d)
    gain = c * cache_eff ** (-1.0 / (d - 1))
    value = p * G * (1 - boundary_term / l + (1 - 2 * d / l) * gain)
    intermediate = p * inputs.interior * (1 + gain - 1 / (2 * l))
    flags = []
    if l <= 2 * d or value <= 0:
        flags.append("vacuous")
    return BoundResult(
        value,
        constants={"c_d": c, "effective_cache": cache_eff},
        extras={"intermediate": intermediate},
        flags=tuple(flags),
    )


def lower_bound(inputs: BoundInputs) -> BoundResult:
    """Loads every traversal must incur for the star stencil (single RHS array)."""
    return _lower(inputs, 1, inputs.cache_size, 2 * inputs.d + 1)


def lower_bound_multi(inputs: BoundInputs) -> BoundResult:
    """``p`` RHS arrays: the cache shrinks to ``ceil(S/p)``.

    This form subtracts ``(2d-1)/l``; the single-array form, which subtracts
    ``(2d+1)/l``, is reported in ``extras["single_form"]``.
    """
    p = inputs.rhs
    if p > inputs.cache_size:
        raise ValueError("more RHS arrays than cache words")
    res = _lower(inputs, p, -(-inputs.cache_size // p), 2 * inputs.d - 1)
    alt = _lower(inputs, p, -(-inputs.cache_size // p), 2 * inputs.d + 1)
    extras = dict(res.extras, single_form=alt.value)
    return BoundResult(res.value, res.constants, extras, res.flags)


def _upper(inputs: BoundInputs, p: int, cache_eff: int, favorable: bool) -> BoundResult:
    d, r = inputs.d, inputs.radius
    c2 = upper_constant(d, r)
    value = p * inputs.grid_size * (1 + inputs.eccentricity * c2 * cache_eff ** (-1.0 / d))
    flags = () if favorable else ("unfavorable lattice",)
    return BoundResult(
        value,
        constants={"c_d_lll": lll_constant(d), "c1_d": surface_constant(d), "c2_d": c2,
                   "effective_cache": cache_eff},
        flags=flags,
    )


def upper_bound(inputs: BoundInputs, favorable: bool = True) -> BoundResult:
    """Loads achieved by the cache-fitting traversal; flagged invalid on unfavorable lattices."""
    return _upper(inputs, 1, inputs.cache_size, favorable)


def upper_bound_multi(inputs: BoundInputs, favorable: bool = True) -> BoundResult:
    p = inputs.rhs
    if p > inputs.cache_size:
        raise ValueError("more RHS arrays than cache words")
    return _upper(inputs, p, inputs.cache_size // p, favorable)


def loads_misses_interval(stencil: Stencil | int, line_words: int) -> tuple[float, float]:
    """Admissible range ``(1/|K|, w)`` of the loads-to-misses ratio."""
    size = stencil if isinstance(stencil, int) else stencil.size
    return 1.0 / size, float(line_words)
