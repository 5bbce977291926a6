"""Parameter sweeps, the short-vector map, padding advice and bound reports."""
from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .bounds import BoundInputs, lower_bound, lower_bound_multi, upper_bound, upper_bound_multi
from .cache_sim import ArrayCounts, CacheConfig
from .grid import GridShape, Stencil, interior_points
from .lattice import (InterferenceLattice, SearchFailed, classify, interference_lattice, l1_norm,
                      min_l1_vector, norm)
from .traversal import (PencilDecomposition, UnfavorableLatticeError, array_names, make_plan,
                        multi_rhs_layout, run_stencil)

log = logging.getLogger(__name__)

MAX_POINTS = 10**6


def _vec(v) -> str:
    return "(" + ",".join(str(c) for c in v) + ")" if v is not None else ""


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------- sweep


@dataclass
class SweepSpec:
    ranges: tuple[Sequence[int], ...]
    config: CacheConfig
    stencil: Stencil
    orders: tuple[str, ...] = ("natural", "fit")
    rhs: int = 1
    include_q: bool = False
    force: bool = False

    def __post_init__(self):
        self.ranges = tuple(tuple(r) for r in self.ranges)
        if any(len(r) == 0 for r in self.ranges):
            raise ValueError("every dimension range must be nonempty")
        if len(self.ranges) != self.stencil.d:
            raise ValueError("stencil and grid dimensions differ")
        total = sum(math.prod(n - 2 * self.stencil.radius for n in shape.dims) for shape in self.shapes())
        if total * len(self.orders) > MAX_POINTS and not self.force:
            raise ValueError(f"sweep simulates {total * len(self.orders)} points; pass force to allow more than {MAX_POINTS}")

    def shapes(self) -> list[GridShape]:
        return [GridShape(dims) for dims in itertools.product(*self.ranges)]


SWEEP_COLUMNS = ("shape", "S", "order", "cold_loads", "replacement_loads", "loads", "misses",
                 "lower_bound", "upper_bound", "shortest_vector", "shortest_len", "unfavorable")


@dataclass
class SweepRow:
    shape: GridShape
    cache_size: int
    order: str
    cold_loads: int
    replacement_loads: int
    loads: int
    misses: int
    lower: float
    upper: float
    shortest_vector: tuple
    shortest_len: float
    unfavorable: bool
    lower_vacuous: bool = False
    note: str = ""

    def as_tuple(self):
        return (str(self.shape), self.cache_size, self.order, self.cold_loads, self.replacement_loads,
                self.loads, self.misses, _fmt(self.lower), _fmt(self.upper), _vec(self.shortest_vector),
                _fmt(self.shortest_len), int(self.unfavorable))


def shape_bounds(shape: GridShape, lattice: InterferenceLattice, stencil: Stencil, config: CacheConfig,
                 rhs: int = 1):
    """Lower and upper bounds for one grid, using the lattice's eccentricity."""
    verdict = classify(lattice, stencil, config)
    inputs = BoundInputs(shape, lattice.cache_size, stencil.radius, lattice.reduced.eccentricity, rhs)
    if rhs == 1:
        lo = lower_bound(inputs) if shape.d >= 2 else None
        hi = upper_bound(inputs, favorable=not verdict.unfavorable)
    else:
        lo = lower_bound_multi(inputs) if shape.d >= 2 else None
        hi = upper_bound_multi(inputs, favorable=not verdict.unfavorable)
    return verdict, lo, hi


def sweep(spec: SweepSpec) -> list[SweepRow]:
    """Simulate every (shape, order) pair; rows come out in input order."""
    rows = []
    S = spec.config.size
    for shape in spec.shapes():
        lattice = interference_lattice(shape, S)
        verdict, lo, hi = shape_bounds(shape, lattice, spec.stencil, spec.config, spec.rhs)
        if spec.rhs > 1:
            layout = multi_rhs_layout(lattice, spec.stencil, spec.config, spec.rhs)
        else:
            layout = None
        for order in spec.orders:
            note = ""
            try:
                plan = make_plan(order, shape, spec.stencil, spec.config, lattice, force=spec.force)
            except UnfavorableLatticeError:
                plan = make_plan(order, shape, spec.stencil, spec.config, lattice, force=True)
                note = "forced"
            except ValueError as exc:
                log.info("skipping %s order on %s: %s", order, shape, exc)
                continue
            report = run_stencil(plan, spec.stencil, spec.config, layout=layout,
                                 include_q=spec.include_q).report
            u = ArrayCounts()
            for name in array_names(spec.rhs):
                u = u + report[name]
            rows.append(SweepRow(
                shape, S, order, u.cold_loads, u.replacement_loads, u.loads, u.misses,
                lo.value if lo else float("nan"), hi.value, verdict.shortest_vector, verdict.shortest_len,
                verdict.unfavorable, bool(lo and not lo.valid), note,
            ))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    return to_csv(SWEEP_COLUMNS, (r.as_tuple() for r in rows))


# ---------------------------------------------------------------- short-vector map


CORRELATE_COLUMNS = ("n1", "n2", "n3", "S", "shortest_vector", "shortest_len", "min_l1_vector", "min_l1",
                     "short", "hyperbola_k", "hyperbola_distance")


@dataclass(frozen=True)
class CorrelateRow:
    n1: int
    n2: int
    n3: int
    cache_size: int
    shortest_vector: tuple
    shortest_len: float
    l1_vector: tuple | None
    l1: int | None
    short: bool
    hyperbola_k: int
    hyperbola_distance: int

    def as_tuple(self):
        return (self.n1, self.n2, self.n3, self.cache_size, _vec(self.shortest_vector), _fmt(self.shortest_len),
                _vec(self.l1_vector), "" if self.l1 is None else self.l1, int(self.short), self.hyperbola_k,
                self.hyperbola_distance)


def hyperbola_distance(n1: int, n2: int, cache_size: int) -> tuple[int, int]:
    """Nearest ``k >= 1`` and ``|n1 n2 - k S / 2|`` (doubled arithmetic keeps it integral)."""
    prod2 = 2 * n1 * n2
    k = max(1, round(prod2 / cache_size))
    best = min((abs(prod2 - kk * cache_size), kk) for kk in (k - 1, k, k + 1) if kk >= 1)
    dist2, k = best
    return k, dist2 // 2 if dist2 % 2 == 0 else dist2 / 2


def correlate_map(n1_range: Sequence[int], n2_range: Sequence[int], n3: int, cache_size: int,
                  l1_threshold: int = 8) -> list[CorrelateRow]:
    """Flag grids whose lattice has a vector with L1 norm below ``l1_threshold``."""
    rows = []
    for n1 in n1_range:
        for n2 in n2_range:
            lat = interference_lattice((n1, n2, n3), cache_size)
            sv = lat.shortest_vector
            l1v = min_l1_vector(lat, l1_threshold - 1)
            k, dist = hyperbola_distance(n1, n2, cache_size)
            rows.append(CorrelateRow(n1, n2, n3, cache_size, sv, norm(sv), l1v,
                                     None if l1v is None else l1_norm(l1v), l1v is not None, k, dist))
    return rows


def correlate_summary(rows: Sequence[CorrelateRow], far: float | None = None) -> dict:
    """Share of short lattices near and far from the ``k S / 2`` hyperbolae."""
    if not rows:
        return {}
    S = rows[0].cache_size
    far = S / 8 if far is None else far
    near_rows = [r for r in rows if r.hyperbola_distance <= far]
    far_rows = [r for r in rows if r.hyperbola_distance > far]
    return {
        "shapes": len(rows),
        "short": sum(r.short for r in rows),
        "short_fraction_near": sum(r.short for r in near_rows) / max(len(near_rows), 1),
        "short_fraction_far": sum(r.short for r in far_rows) / max(len(far_rows), 1),
    }


# ---------------------------------------------------------------- padding


@dataclass(frozen=True)
class PadAdvice:
    original: GridShape
    padded: GridShape
    added: tuple[int, ...]
    shortest_vector: tuple
    shortest_len: float
    pencils: int | None

    @property
    def total_added(self) -> int:
        return sum(self.added)


class PaddingFailed(SearchFailed):
    pass


def count_pencils(shape: GridShape, stencil: Stencil, lattice: InterferenceLattice) -> int:
    dec = PencilDecomposition.from_basis(lattice.reduced.vectors)
    keys = dec.pencil_keys(interior_points(shape, stencil))
    return int(len(np.unique(keys, axis=0))) if keys.shape[1] else 1


def pad_candidates(d: int, max_pad: int) -> Iterable[tuple[int, ...]]:
    """Pads in increasing total size; the last dimension never changes the lattice and stays 0."""
    free = d - 1
    for total in range(free * max_pad + 1):
        level = [c for c in itertools.product(range(max_pad + 1), repeat=free) if sum(c) == total]
        yield from (c + (0,) for c in sorted(level))


def advise_padding(shape: GridShape, cache_size: int, stencil: Stencil, config: CacheConfig,
                   max_pad: int = 8) -> PadAdvice:
    """Smallest padding that makes the lattice favorable.

    Among pads of equal total size, prefer the one whose (acceptable) shortest
    vector is shortest, which keeps the scanning face large and pencils few.
    """
    if max_pad < 0:
        raise ValueError("max_pad must be >= 0")
    best_seen = (0.0, None)
    level, level_total = [], 0
    for pad in itertools.chain(pad_candidates(shape.d, max_pad), [None]):
        total = None if pad is None else sum(pad)
        if total != level_total:
            if level:
                length, v, padded, chosen = min(level, key=lambda t: (t[0], t[3]))
                lat = interference_lattice(padded, cache_size)
                return PadAdvice(shape, padded, chosen, v, length, count_pencils(padded, stencil, lat))
            if pad is None:
                break
            level_total = total
        padded = GridShape(tuple(n + p for n, p in zip(shape.dims, pad)))
        verdict = classify(interference_lattice(padded, cache_size), stencil, config)
        best_seen = max(best_seen, (verdict.shortest_len, pad), key=lambda t: t[0])
        if not verdict.unfavorable:
            level.append((verdict.shortest_len, verdict.shortest_vector, padded, pad))
    raise PaddingFailed(
        f"no favorable padding of {shape} within {max_pad} words per dimension "
        f"(best shortest length {best_seen[0]:.3f} with pad {best_seen[1]})")


def padding_effect(advice: PadAdvice, stencil: Stencil, config: CacheConfig, order: str = "natural"):
    """Misses of the original computation with unpadded and with padded storage.

    Padding only changes the array layout; the points computed stay those of
    the original grid.
    """
    plan = make_plan(order, advice.original, stencil, config, force=True)
    before = run_stencil(plan, stencil, config).report["u"].misses
    after = run_stencil(plan.with_storage(advice.padded), stencil, config).report["u"].misses
    return before, after


# ---------------------------------------------------------------- bounds report


BOUNDS_COLUMNS = ("shape", "S", "d", "r", "p", "e", "lower", "lower_alt", "upper", "lower_vacuous",
                  "upper_valid", "flags")


@dataclass
class BoundsRow:
    shape: GridShape
    cache_size: int
    radius: int
    p: int
    eccentricity: float
    lower: float
    lower_alt: float
    lower_intermediate: float
    upper: float
    lower_vacuous: bool
    upper_valid: bool
    flags: tuple[str, ...] = field(default_factory=tuple)

    def as_tuple(self):
        return (str(self.shape), self.cache_size, self.shape.d, self.radius, self.p, _fmt(self.eccentricity),
                _fmt(self.lower), _fmt(self.lower_alt), _fmt(self.upper), int(self.lower_vacuous),
                int(self.upper_valid), ";".join(self.flags))


def bounds_report(shape: GridShape, cache_size: int, stencil: Stencil, p: int = 1,
                  config: CacheConfig | None = None) -> list[BoundsRow]:
    """Single-array bounds, plus the ``p``-RHS bounds when ``p > 1``.

    ``lower_alt`` carries the other printed form of the lower bound (``(2d-1)/l``
    for a single array, ``(2d+1)/l`` for several).
    """
    config = config or CacheConfig.direct_mapped(cache_size)
    lattice = interference_lattice(shape, cache_size)
    verdict = classify(lattice, stencil, config)
    e = lattice.reduced.eccentricity
    rows = []
    for pp in sorted({1, p}):
        inputs = BoundInputs(shape, cache_size, stencil.radius, e, pp)
        multi_lo = lower_bound_multi(inputs)
        flags = []
        if pp == 1:
            lo, alt = lower_bound(inputs), multi_lo.value
            hi = upper_bound(inputs, favorable=not verdict.unfavorable)
        else:
            lo, alt = multi_lo, multi_lo.extras["single_form"]
            dec = PencilDecomposition.from_basis(lattice.reduced.vectors)
            wide = norm(dec.sweep) / pp >= stencil.diameter / config.associativity
            hi = upper_bound_multi(inputs, favorable=not verdict.unfavorable and wide)
            if not wide:
                flags.append("tiles thinner than stencil")
        flags += list(lo.flags) + list(hi.flags)
        rows.append(BoundsRow(shape, cache_size, stencil.radius, pp, e, lo.value, alt,
                              lo.extras["intermediate"], hi.value, not lo.valid, hi.valid, tuple(flags)))
    return rows


def bounds_csv(rows: Sequence[BoundsRow]) -> str:
    return to_csv(BOUNDS_COLUMNS, (r.as_tuple() for r in rows))


__all__ = [
    "SweepSpec", "SweepRow", "sweep", "sweep_csv", "correlate_map", "correlate_summary", "CorrelateRow",
    "hyperbola_distance", "PadAdvice", "padding_effect", "PaddingFailed", "advise_padding", "bounds_report", "bounds_csv",
    "shape_bounds",
]
