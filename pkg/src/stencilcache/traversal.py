"""Traversal orders over the K-interior and the stencil driver for the cache simulator."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .cache_sim import MAX_ADDRESS, CacheConfig, CacheState, MissReport
from .grid import GridShape, Stencil, interior_bounds, interior_points, linearize_many
from .lattice import InterferenceLattice, Vector, classify, determinant, norm


class UnfavorableLatticeError(ValueError):
    pass


@dataclass
class TraversalPlan:
    shape: GridShape
    points: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.points.shape[0]

    def __iter__(self):
        return (tuple(int(c) for c in p) for p in self.points)

    def with_storage(self, storage: GridShape) -> "TraversalPlan":
        """Same points, addressed through a (padded) array of shape ``storage``."""
        if storage.d != self.shape.d or any(s < n for s, n in zip(storage.dims, self.shape.dims)):
            raise ValueError(f"storage {storage} does not contain grid {self.shape}")
        return TraversalPlan(storage, self.points, self.kind, dict(self.meta, computed_shape=self.shape))


def natural_order(shape: GridShape, stencil: Stencil) -> TraversalPlan:
    """Loop nest order with the first (unit-stride) index innermost."""
    return TraversalPlan(shape, interior_points(shape, stencil), "natural")


def strided_example_order(shape: GridShape, config: CacheConfig, stencil: Stencil) -> TraversalPlan:
    """Band-by-band order for a 2-D grid whose row length is a multiple of S.

    The row is cut into ``k * a`` bands of width ``S / a``; each band is swept
    row by row before the next band starts.
    """
    S, a = config.size, config.associativity
    if shape.d != 2:
        raise ValueError("strided order is defined for 2-D grids")
    n1, n2 = shape.dims
    if n1 % S or S % a:
        raise ValueError(f"strided order needs n1 divisible by S={S} and S divisible by a={a}")
    (lo1, hi1), (lo2, hi2) = interior_bounds(shape, stencil)
    if hi1 <= lo1 or hi2 <= lo2:
        raise ValueError("empty interior")
    width = S // a
    pts = []
    for band in range(n1 // S * a):
        cols = np.arange(max(lo1, band * width), min(hi1, (band + 1) * width), dtype=np.int64)
        if cols.size == 0:
            continue
        for j in range(lo2, hi2):
            pts.append(np.stack([cols, np.full_like(cols, j)], axis=1))
    return TraversalPlan(shape, np.concatenate(pts), "strided", {"band_width": width})


def _adjugate(basis_cols: list[list[int]]) -> list[list[int]]:
    """Integer adjugate of a square matrix given as a list of rows."""
    n = len(basis_cols)
    if n == 1:
        return [[1]]
    adj = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:j] + row[j + 1:] for k, row in enumerate(basis_cols) if k != i]
            adj[j][i] = (-1) ** (i + j) * determinant(minor)
    return adj


@dataclass(frozen=True)
class PencilDecomposition:
    """Coordinates of grid points relative to a lattice basis.

    ``sweep`` is the basis vector the pencils run along; ``face`` spans the
    cross-section. Fractional coordinates are ``coords / det`` with exact
    integer numerators.
    """

    sweep: Vector
    face: tuple[Vector, ...]
    adj: tuple[tuple[int, ...], ...]
    det: int

    @classmethod
    def from_basis(cls, vectors, sweep_index: int = -1) -> "PencilDecomposition":
        vecs = [tuple(v) for v in vectors]
        sweep = vecs.pop(sweep_index)
        order = vecs + [sweep]
        mat = [[v[i] for v in order] for i in range(len(sweep))]  # basis vectors as columns
        det = determinant(mat)
        if det == 0:
            raise ValueError("degenerate basis")
        adj = _adjugate(mat)
        if det < 0:
            det, adj = -det, [[-x for x in row] for row in adj]
        return cls(sweep, tuple(vecs), tuple(tuple(r) for r in adj), det)

    @property
    def d(self) -> int:
        return len(self.sweep)

    def coords(self, points: np.ndarray) -> np.ndarray:
        """Numerators of basis coordinates, last column along the sweep vector."""
        return np.asarray(points, dtype=np.int64) @ np.array(self.adj, dtype=np.int64).T

    def pencil_keys(self, points: np.ndarray) -> np.ndarray:
        return np.floor_divide(self.coords(points)[:, :-1], self.det)

    def sweep_position(self, points: np.ndarray) -> np.ndarray:
        return self.coords(points)[:, -1]

    def projections(self, stencil: Stencil) -> tuple[Fraction, Fraction]:
        """Min/max sweep coordinate of the stencil vectors, in units of the sweep vector."""
        ys = self.coords(stencil.as_array())[:, -1]
        return Fraction(int(ys.min()), self.det), Fraction(int(ys.max()), self.det)

    def width_ok(self, stencil: Stencil, associativity: int, rhs: int = 1) -> bool:
        """``|h+ - h-| <= a |v| / p``, i.e. the stencil's sweep extent fits one tile."""
        lo, hi = self.projections(stencil)
        return (hi - lo) * rhs <= associativity


def cache_fitting_order(
    shape: GridShape,
    stencil: Stencil,
    lattice: InterferenceLattice,
    config: CacheConfig,
    force: bool = False,
) -> TraversalPlan:
    """Sweep pencils of the reduced interference lattice one at a time.

    Points are grouped by the integer part of their face coordinates (one
    group per pencil) and each pencil is visited in increasing sweep
    coordinate, which steps the scanning face through every integer point.
    """
    if lattice.d != shape.d or lattice.strides_mod != InterferenceLattice(shape, lattice.cache_size).strides_mod:
        raise ValueError("lattice was built for a different grid")
    verdict = classify(lattice, stencil, config)
    dec = PencilDecomposition.from_basis(lattice.reduced.vectors)
    width_ok = dec.width_ok(stencil, config.associativity)
    if (verdict.unfavorable or not width_ok) and not force:
        raise UnfavorableLatticeError(
            f"grid {shape} is unfavorable for S={lattice.cache_size}: shortest vector "
            f"{verdict.shortest_vector} (length {verdict.shortest_len:.3f} < {verdict.threshold:.3f})"
            if verdict.unfavorable else f"stencil extent along {dec.sweep} exceeds the associativity")
    pts = interior_points(shape, stencil)
    coords = dec.coords(pts)
    keys = np.floor_divide(coords[:, :-1], dec.det)
    sort_keys = [pts[:, i] for i in range(shape.d)] + [coords[:, -1]]
    sort_keys += [keys[:, j] for j in reversed(range(keys.shape[1]))]
    order = np.lexsort(sort_keys)
    pts, keys = pts[order], keys[order]
    if keys.shape[1]:
        change = np.any(keys[1:] != keys[:-1], axis=1)
        starts = np.concatenate([[0], np.nonzero(change)[0] + 1])
    else:
        starts = np.array([0])
    sizes = np.diff(np.concatenate([starts, [len(pts)]]))
    lo, hi = dec.projections(stencil)
    meta = {
        "sweep": dec.sweep,
        "face": dec.face,
        "pencils": int(len(starts)),
        "pencil_sizes": (int(sizes.min()), float(sizes.mean()), int(sizes.max())),
        "h_minus": float(lo * norm(dec.sweep)),
        "h_plus": float(hi * norm(dec.sweep)),
        "width_ok": width_ok,
        "unfavorable": verdict.unfavorable,
        "forced": bool(force and (verdict.unfavorable or not width_ok)),
        "pencil_keys": keys,
        "decomposition": dec,
    }
    return TraversalPlan(shape, pts, "fit", meta)


def make_plan(kind: str, shape: GridShape, stencil: Stencil, config: CacheConfig,
              lattice: InterferenceLattice | None = None, force: bool = False) -> TraversalPlan:
    if kind == "natural":
        return natural_order(shape, stencil)
    if kind == "strided":
        return strided_example_order(shape, config, stencil)
    if kind == "fit":
        if lattice is None:
            lattice = InterferenceLattice(shape, config.size)
        return cache_fitting_order(shape, stencil, lattice, config, force=force)
    raise ValueError(f"unknown order {kind!r}")


# ---------------------------------------------------------------- multi-RHS layout


@dataclass(frozen=True)
class MultiArrayLayout:
    """Base addresses ``addr_i = addr_1 + m_i S + s_i`` for ``p`` RHS arrays, plus q."""

    bases: tuple[int, ...]
    offsets: tuple[int, ...]
    multipliers: tuple[int, ...]
    q_base: int
    assumption_ok: bool = True

    @property
    def p(self) -> int:
        return len(self.bases)


def multi_array_layout(
    p: int,
    cache_size: int,
    array_words: int,
    tile_offsets: tuple[int, ...] | None = None,
    base: int = 0,
    q_base: int | None = None,
    assumption_ok: bool = True,
) -> MultiArrayLayout:
    """Place ``p`` arrays of ``array_words`` words so tile ``i`` of array ``i`` gets its own cache image.

    ``m_i = m_{i-1} + ceil((|V| - s_i + s_{i-1}) / S)`` keeps consecutive arrays from overlapping.
    """
    if p < 1:
        raise ValueError("need p >= 1")
    s = tuple(tile_offsets) if tile_offsets is not None else (0,) * p
    if len(s) != p or s[0] != 0:
        raise ValueError("need p tile offsets starting with 0")
    S = cache_size
    m = [0]
    for i in range(1, p):
        m.append(m[-1] + -(-(array_words - s[i] + s[i - 1]) // S))
    bases = tuple(base + mi * S + si for mi, si in zip(m, s))
    if q_base is None:
        q_base = bases[-1] + array_words
    return MultiArrayLayout(bases, s, tuple(m), q_base, assumption_ok)


def single_array_layout(shape: GridShape, q_base: int | None = None) -> MultiArrayLayout:
    return multi_array_layout(1, 1, shape.size, q_base=q_base)


def parallelepiped_points(vectors) -> np.ndarray:
    """Integer points of the half-open fundamental parallelepiped of a basis."""
    vecs = np.array(vectors, dtype=np.int64)
    corners = np.array([np.array(c) @ vecs for c in itertools.product((0, 1), repeat=len(vecs))])
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    box = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    dec = PencilDecomposition.from_basis(vectors, sweep_index=len(vectors) - 1)
    c = dec.coords(box)
    inside = np.all((c >= 0) & (c < dec.det), axis=1)
    return box[inside]


@dataclass(frozen=True)
class TileGeometry:
    """Stripwise tiling of a fundamental parallelepiped along its longest basis vector."""

    layers: int
    layers_per_tile: int
    face_points: int
    offsets: tuple[int, ...]
    images: tuple[frozenset[int], ...]


def tile_geometry(lattice: InterferenceLattice, p: int) -> TileGeometry:
    """Cut the parallelepiped into ``p`` tiles and find the array offsets ``s_i``.

    Layers are the distinct sweep coordinates of its integer points; their cache
    images are cosets, so shifting an array by ``s_i`` maps tile 1 onto tile ``i``.
    """
    S = lattice.cache_size
    vecs = lattice.reduced.vectors
    pts = parallelepiped_points(vecs)
    if len(pts) != S:
        raise AssertionError(f"parallelepiped holds {len(pts)} points, expected {S}")
    dec = PencilDecomposition.from_basis(vecs)
    pos = dec.sweep_position(pts)
    values, layer = np.unique(pos, return_inverse=True)
    g = len(values)
    per_tile = g // p
    if per_tile < 1:
        raise ValueError(f"cannot cut {g} layers into {p} tiles")
    images_all = linearize_many(pts, lattice.shape) % S
    anchor = {}
    for i in range(len(pts)):
        anchor.setdefault(int(layer[i]), int(images_all[i]))
    images, offsets = [], []
    for t in range(p):
        mask = (layer >= t * per_tile) & (layer < (t + 1) * per_tile)
        images.append(frozenset(int(v) for v in images_all[mask]))
        offsets.append((anchor[t * per_tile] - anchor[0]) % S)
    for t in range(1, p):
        shifted = frozenset((v + offsets[t]) % S for v in images[0])
        if shifted != images[t]:
            raise AssertionError("tile images are not translates of the first tile")
    return TileGeometry(g, per_tile, S // g, tuple(offsets), tuple(images))


def multi_rhs_layout(lattice: InterferenceLattice, stencil: Stencil, config: CacheConfig, p: int,
                     base: int = 0) -> MultiArrayLayout:
    """Layout for ``p`` RHS arrays on a lattice; flags the sweep-width assumption."""
    geom = tile_geometry(lattice, p)
    dec = PencilDecomposition.from_basis(lattice.reduced.vectors)
    ok = norm(dec.sweep) / p >= stencil.diameter / config.associativity
    return multi_array_layout(p, lattice.cache_size, lattice.shape.size, geom.offsets, base, assumption_ok=ok)


# ---------------------------------------------------------------- driver


def address_stream(plan: TraversalPlan, stencil: Stencil, layout: MultiArrayLayout,
                   include_q: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Word addresses and array indices, point by point: each array's stencil reads, then q."""
    lin = linearize_many(plan.points, plan.shape)
    off = linearize_many(stencil.as_array(), plan.shape)
    cols, ids = [], []
    for j, b in enumerate(layout.bases):
        cols.append(b + lin[:, None] + off[None, :])
        ids.append(np.full(off.shape, j))
    if include_q:
        cols.append(layout.q_base + lin[:, None])
        ids.append(np.array([layout.p]))
    addrs = np.concatenate(cols, axis=1)
    if addrs.size and (addrs.min() < 0 or addrs.max() >= MAX_ADDRESS):
        raise OverflowError("address stream leaves the simulated address space")
    id_row = np.concatenate(ids).astype(np.int64)
    return addrs.ravel(), np.broadcast_to(id_row, addrs.shape).ravel()


def array_names(p: int) -> list[str]:
    return ["u"] if p == 1 else [f"u{i + 1}" for i in range(p)]


@dataclass
class StencilRun:
    report: MissReport
    outcomes: np.ndarray | None = None
    accesses_per_point: int = 0


def run_stencil(
    plan: TraversalPlan,
    stencil: Stencil,
    config: CacheConfig,
    layout: MultiArrayLayout | None = None,
    include_q: bool = False,
    record: bool = False,
) -> StencilRun:
    """Simulate the plan on a fresh cache; q writes bypass the cache unless ``include_q``."""
    if stencil.d != plan.shape.d:
        raise ValueError("stencil and grid dimensions differ")
    if layout is None:
        layout = single_array_layout(plan.shape)
    addrs, ids = address_stream(plan, stencil, layout, include_q)
    state = CacheState(config, capacity=int(addrs.max()) + 1 if addrs.size else 1)
    for name in array_names(layout.p) + (["q"] if include_q else []):
        state.array_index(name)
    outcomes = state.run(addrs, ids, record=record)
    per_point = stencil.size * layout.p + int(include_q)
    return StencilRun(state.report(), outcomes, per_point)


def simulate(plan: TraversalPlan, stencil: Stencil, config: CacheConfig, **kw) -> MissReport:
    return run_stencil(plan, stencil, config, **kw).report
