"""Interference lattice of a grid/cache pair.

The lattice holds every index offset ``x`` with ``sum(x_i * m_i) = 0 (mod S)``,
i.e. the offsets whose array elements land in the same cache location as the
origin. Reduction is exact integral LLL; shortest vectors come from bounded
enumeration over the reduced basis, which is cheap for ``d <= 4``.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from .cache_sim import CacheConfig
from .grid import GridShape, Stencil

Vector = tuple[int, ...]

MAX_EXACT_DIM = 4


def lll_constant(d: int) -> float:
    """Orthogonality-defect bound ``2^(d(d-1)/4)`` guaranteed by LLL with delta = 3/4."""
    return 2.0 ** (d * (d - 1) / 4)


def norm_sq(v: Sequence[int]) -> int:
    return sum(c * c for c in v)


def norm(v: Sequence[int]) -> float:
    return math.sqrt(norm_sq(v))


def l1_norm(v: Sequence[int]) -> int:
    return sum(abs(c) for c in v)


def canonical_sign(v: Sequence[int]) -> Vector:
    """Flip ``v`` so its first nonzero coordinate is positive."""
    for c in v:
        if c:
            return tuple(v) if c > 0 else tuple(-x for x in v)
    return tuple(v)


def _vector_key(v: Vector):
    return (norm_sq(v), l1_norm(v), v)


def determinant(basis: Sequence[Sequence[int]]) -> int:
    """Exact integer determinant via fraction-free Bareiss elimination."""
    m = [list(map(int, row)) for row in basis]
    n = len(m)
    if any(len(row) != n for row in m):
        raise ValueError("basis must be square")
    sign, prev = 1, 1
    for k in range(n - 1):
        if m[k][k] == 0:
            for i in range(k + 1, n):
                if m[i][k]:
                    m[k], m[i] = m[i], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1] if n else 1


@dataclass(frozen=True)
class ReducedBasisInfo:
    vectors: tuple[Vector, ...]
    det: int

    @property
    def norms(self) -> tuple[float, ...]:
        return tuple(norm(v) for v in self.vectors)

    @property
    def eccentricity(self) -> float:
        n = self.norms
        return max(n) / n[0]

    @property
    def defect(self) -> float:
        return math.prod(self.norms) / abs(self.det)

    @property
    def longest(self) -> Vector:
        return self.vectors[-1]


def lll_reduce(basis: Sequence[Sequence[int]], delta: Fraction = Fraction(3, 4)) -> ReducedBasisInfo:
    """Integral LLL reduction; all intermediate quantities stay exact integers.

    Works with Gram determinants ``d_i`` and scaled coefficients
    ``lam[k][j] = d_{j} * mu_{k,j}`` so every division is exact.
    """
    delta = Fraction(delta)
    b = [list(map(int, v)) for v in basis]
    n = len(b)
    if n == 0 or any(len(v) != n for v in b):
        raise ValueError("basis must be a nonempty square matrix")

    def dot(u, v):
        return sum(x * y for x, y in zip(u, v))

    # 1-based bookkeeping: dd[0] = 1, dd[i] for b_i
    dd = [1] + [0] * n
    lam = [[0] * (n + 1) for _ in range(n + 1)]
    dd[1] = dot(b[0], b[0])
    if dd[1] == 0:
        raise ValueError("basis vectors are linearly dependent")
    if n == 1:
        return ReducedBasisInfo((tuple(b[0]),), b[0][0])

    def red(k, l):
        if 2 * abs(lam[k][l]) > dd[l]:
            q = _round_div(lam[k][l], dd[l])
            b[k - 1] = [x - q * y for x, y in zip(b[k - 1], b[l - 1])]
            lam[k][l] -= q * dd[l]
            for i in range(1, l):
                lam[k][i] -= q * lam[l][i]

    def swap(k, kmax):
        b[k - 1], b[k - 2] = b[k - 2], b[k - 1]
        for j in range(1, k - 1):
            lam[k][j], lam[k - 1][j] = lam[k - 1][j], lam[k][j]
        mu = lam[k][k - 1]
        big = (dd[k - 2] * dd[k] + mu * mu) // dd[k - 1]
        for i in range(k + 1, kmax + 1):
            t = lam[i][k]
            lam[i][k] = (dd[k] * lam[i][k - 1] - mu * t) // dd[k - 1]
            lam[i][k - 1] = (big * t + mu * lam[i][k]) // dd[k]
        dd[k - 1] = big

    k, kmax = 2, 1
    while k <= n:
        if k > kmax:
            kmax = k
            for j in range(1, k + 1):
                u = dot(b[k - 1], b[j - 1])
                for i in range(1, j):
                    u = (dd[i] * u - lam[k][i] * lam[j][i]) // dd[i - 1]
                if j < k:
                    lam[k][j] = u
                else:
                    dd[k] = u
            if dd[k] == 0:
                raise ValueError("basis vectors are linearly dependent")
        red(k, k - 1)
        lhs = delta.denominator * dd[k] * dd[k - 2]
        rhs = delta.numerator * dd[k - 1] ** 2 - delta.denominator * lam[k][k - 1] ** 2
        if lhs < rhs:
            swap(k, kmax)
            k = max(2, k - 1)
        else:
            for l in range(k - 2, 0, -1):
                red(k, l)
            k += 1

    vecs = sorted((tuple(v) for v in b), key=lambda v: (norm_sq(v), l1_norm(v), v))
    return ReducedBasisInfo(tuple(vecs), determinant(b))


def _round_div(a: int, b: int) -> int:
    """Nearest integer to ``a / b`` for ``b > 0`` (halves round up)."""
    return (2 * a + b) // (2 * b)


def gram_schmidt(basis: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Float Gram-Schmidt: returns ``(mu, bstar_sq)``."""
    B = np.array(basis, dtype=float)
    n = B.shape[0]
    bstar = np.zeros_like(B)
    mu = np.zeros((n, n))
    for i in range(n):
        v = B[i].copy()
        for j in range(i):
            mu[i, j] = B[i] @ bstar[j] / (bstar[j] @ bstar[j])
            v -= mu[i, j] * bstar[j]
        bstar[i] = v
    return mu, np.einsum("ij,ij->i", bstar, bstar)


def enumerate_short_vectors(basis: Sequence[Sequence[int]], radius_sq: int) -> list[Vector]:
    """All nonzero lattice vectors with squared norm ``<= radius_sq`` (both signs).

    Depth-first enumeration of coefficient vectors pruned by Gram-Schmidt
    norms; candidates are re-checked in exact integer arithmetic.
    """
    basis = [tuple(map(int, v)) for v in basis]
    n = len(basis)
    mu, bss = gram_schmidt(basis)
    slack = 1e-9 * max(1.0, radius_sq)
    B = np.array(basis, dtype=object)
    coeffs = [0] * n
    out = []

    def rec(i, partial):
        center = -sum(coeffs[j] * mu[j, i] for j in range(i + 1, n))
        room = radius_sq - partial + slack
        if room < 0:
            return
        span = math.sqrt(room / bss[i])
        for c in range(math.ceil(center - span), math.floor(center + span) + 1):
            coeffs[i] = c
            contrib = (c - center) ** 2 * bss[i]
            if i == 0:
                if any(coeffs):
                    v = tuple(int(x) for x in np.dot(coeffs, B))
                    if norm_sq(v) <= radius_sq:
                        out.append(v)
            else:
                rec(i - 1, partial + contrib)
        coeffs[i] = 0

    rec(n - 1, 0.0)
    return out


@dataclass(frozen=True)
class InterferenceLattice:
    shape: GridShape
    cache_size: int

    def __post_init__(self):
        if self.cache_size < 1:
            raise ValueError("cache size must be >= 1")

    @property
    def d(self) -> int:
        return self.shape.d

    @property
    def strides(self) -> tuple[int, ...]:
        return self.shape.strides

    @property
    def strides_mod(self) -> tuple[int, ...]:
        return tuple(m % self.cache_size for m in self.strides)

    @cached_property
    def canonical_basis(self) -> tuple[Vector, ...]:
        return canonical_basis(self.shape, self.cache_size)

    @cached_property
    def reduced(self) -> ReducedBasisInfo:
        return lll_reduce(self.canonical_basis)

    @cached_property
    def shortest_vector(self) -> Vector:
        return shortest_vector(self)

    def contains(self, v: Sequence[int]) -> bool:
        return is_member(v, self)

    def image(self, point: Sequence[int]) -> int:
        """Cache location (address mod S) of a grid point for an array based at 0."""
        return sum(x * m for x, m in zip(point, self.strides)) % self.cache_size


def interference_lattice(shape: GridShape | Sequence[int], cache_size: int) -> InterferenceLattice:
    if not isinstance(shape, GridShape):
        shape = GridShape(tuple(shape))
    return InterferenceLattice(shape, int(cache_size))


def canonical_basis(shape: GridShape, cache_size: int) -> tuple[Vector, ...]:
    """``v_1 = S e_1``, ``v_i = -(m_i mod S) e_1 + e_i``."""
    d = shape.d
    S = cache_size
    out = [(S,) + (0,) * (d - 1)]
    for i, m in enumerate(shape.strides[1:], start=1):
        v = [0] * d
        v[0] = -(m % S)
        v[i] = 1
        out.append(tuple(v))
    return tuple(out)


def is_member(v: Sequence[int], lattice: InterferenceLattice) -> bool:
    if len(v) != lattice.d:
        raise ValueError("vector dimension does not match lattice")
    return sum(int(c) * m for c, m in zip(v, lattice.strides)) % lattice.cache_size == 0


def shortest_vector(lattice: InterferenceLattice) -> Vector:
    """Exact shortest nonzero vector; ties go to smaller L1 norm, then coordinates.

    The sign is normalized so the first nonzero coordinate is positive.
    """
    if lattice.d > MAX_EXACT_DIM:
        raise ValueError(f"exact shortest-vector search supports d <= {MAX_EXACT_DIM}")
    red = lattice.reduced
    cands = enumerate_short_vectors(red.vectors, norm_sq(red.vectors[0]))
    return min({canonical_sign(v) for v in cands}, key=_vector_key)


def min_l1_vector(lattice: InterferenceLattice, bound: int) -> Vector | None:
    """Nonzero lattice vector of least L1 norm among those with L1 norm ``<= bound``."""
    cands = [v for v in enumerate_short_vectors(lattice.reduced.vectors, bound * bound) if l1_norm(v) <= bound]
    if not cands:
        return None
    return min({canonical_sign(v) for v in cands}, key=lambda v: (l1_norm(v), norm_sq(v), v))


@dataclass(frozen=True)
class FavorabilityVerdict:
    shortest_vector: Vector
    shortest_len: float
    shortest_l1: int
    threshold: float
    unfavorable: bool


def classify(lattice: InterferenceLattice, stencil: Stencil, config: CacheConfig) -> FavorabilityVerdict:
    """Unfavorable when the shortest vector is shorter than diameter / associativity."""
    v = lattice.shortest_vector
    length = norm(v)
    threshold = stencil.diameter / config.associativity
    return FavorabilityVerdict(v, length, l1_norm(v), threshold, length < threshold)


def lattices_equal(a: InterferenceLattice, b: InterferenceLattice) -> bool:
    if a.d != b.d or a.cache_size != b.cache_size:
        return False
    return all(b.contains(v) for v in a.canonical_basis) and all(a.contains(v) for v in b.canonical_basis)


def corollary_embed(shape: GridShape, cache_size: int) -> GridShape:
    """Smallest grid with the same interference lattice (each ``n_i`` reduced mod S)."""
    S = cache_size
    out = GridShape(tuple((n % S) or S for n in shape.dims))
    if not lattices_equal(interference_lattice(shape, S), interference_lattice(out, S)):
        raise AssertionError("embedding changed the interference lattice")
    return out


def prime_power(n: int) -> tuple[int, int] | None:
    """Return ``(p, k)`` with ``n = p**k`` for prime ``p``, else ``None``."""
    if n < 2:
        return None
    p = next((q for q in range(2, math.isqrt(n) + 1) if n % q == 0), n)
    k = 0
    while n % p == 0:
        n //= p
        k += 1
    return (p, k) if n == 1 else None


def dims_from_strides(strides: Sequence[int], cache_size: int, last_dim: int | None = None) -> GridShape:
    """Solve ``n_i * m_i = m_{i+1} (mod S)`` for a grid with the given strides ``m_2 .. m_d``.

    ``strides`` excludes the leading ``m_1 = 1``. Requires ``gcd(m_i, S)`` to divide
    ``m_{i+1}``. The last dimension does not affect the lattice and defaults to S.
    """
    S = cache_size
    ms = [1] + [m % S for m in strides]
    dims = []
    for cur, nxt in zip(ms, ms[1:]):
        g = math.gcd(cur, S)
        if nxt % g:
            raise ValueError(f"no grid dimension maps stride {cur} to {nxt} mod {S}")
        mod = S // g
        n = (nxt // g) * pow(cur // g, -1, mod) % mod if mod > 1 else 0
        dims.append(n or S)
    dims.append(last_dim if last_dim is not None else S)
    return GridShape(tuple(dims))


class SearchFailed(RuntimeError):
    pass


def construct_favorable_dims(
    cache_size: int,
    d: int,
    length_target: float,
    budget: int = 2000,
    seed: int = 0,
    last_dim: int | None = None,
) -> GridShape:
    """Search strides whose lattice has shortest vector ``>= length_target``.

    Candidates coprime to ``p`` come first; any candidate is ordered by
    increasing ``gcd(m_i, S)`` so the stride congruences are solvable, and the
    recovered grid is verified by exact shortest-vector computation.
    """
    S = cache_size
    pp = prime_power(S)
    if pp is None:
        raise ValueError(f"cache size {S} is not a prime power")
    p = pp[0]
    if d == 1:
        return GridShape((S,))
    rng = random.Random(seed)
    units = [m for m in range(1, S) if m % p]
    others = [m for m in range(2, S) if m % p == 0]
    best = 0.0
    for attempt in range(budget):
        pool = units if attempt < budget * 3 // 4 or not others else units + others
        ms = sorted((rng.choice(pool) for _ in range(d - 1)), key=lambda m: math.gcd(m, S))
        try:
            shape = dims_from_strides(ms, S, last_dim)
        except ValueError:
            continue
        length = norm(interference_lattice(shape, S).shortest_vector)
        best = max(best, length)
        if length >= length_target:
            return shape
    raise SearchFailed(f"no grid with shortest vector >= {length_target:.3f} in {budget} tries (best {best:.3f})")
