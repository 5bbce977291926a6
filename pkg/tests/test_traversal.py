import random

import numpy as np
import pytest

from stencilcache.bounds import BoundInputs, upper_bound
from stencilcache.cache_sim import REPLACEMENT_LOAD, CacheConfig
from stencilcache.grid import GridShape, k_extension, k_interior, linearize_many, star_stencil
from stencilcache.lattice import classify, interference_lattice
from stencilcache.traversal import (PencilDecomposition, UnfavorableLatticeError, address_stream,
                                    cache_fitting_order, make_plan, multi_array_layout, multi_rhs_layout,
                                    natural_order, parallelepiped_points, run_stencil, simulate,
                                    single_array_layout, strided_example_order, tile_geometry)


def as_set(plan):
    return {tuple(map(int, p)) for p in plan.points}


def is_permutation(plan, stencil):
    return len(plan) == len(as_set(plan)) and as_set(plan) == k_interior(plan.shape, stencil)


def strided_closed_form(n1, n2, r, k, a):
    return n1 * n2 + (n2 - 2) * 2 * r * (k * a - 1) - 4


def test_natural_order_example():
    plan = natural_order(GridShape((4, 4)), star_stencil(2, 1))
    assert [tuple(p) for p in plan] == [(1, 1), (2, 1), (1, 2), (2, 2)]
    plan = natural_order(GridShape((4, 3)), star_stencil(2, 1))
    assert [tuple(p) for p in plan] == [(1, 1), (2, 1)]


def test_natural_order_random_shapes():
    rng = random.Random(0)
    for _ in range(20):
        d = rng.randint(1, 3)
        shape = GridShape(tuple(rng.randint(3, 12) for _ in range(d)))
        st_ = star_stencil(d, 1)
        plan = natural_order(shape, st_)
        assert is_permutation(plan, st_)
        addrs = linearize_many(plan.points, shape)
        runs = np.split(addrs, np.nonzero(np.diff(plan.points[:, 1:], axis=0).any(axis=1))[0] + 1) if d > 1 else [addrs]
        assert all(np.all(np.diff(run) > 0) for run in runs)


def test_strided_k1_a1_is_natural():
    cfg = CacheConfig(16, 1, 1)
    st_ = star_stencil(2, 1)
    shape = GridShape((16, 8))
    plan = strided_example_order(shape, CacheConfig(1, 16, 1), st_)
    assert np.array_equal(plan.points, natural_order(shape, st_).points)
    assert plan.meta["band_width"] == 16
    assert is_permutation(strided_example_order(GridShape((32, 9)), cfg, st_), st_)


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("n2", [8, 16])
def test_strided_closed_form_wide_associativity(k, n2):
    # associativity 4 exceeds the stencil diameter, the regime where the
    # band-by-band count is exact
    S, a, r = 16, 4, 1
    st_ = star_stencil(2, r)
    shape = GridShape((k * S, n2))
    plan = strided_example_order(shape, CacheConfig(a, S // a, 1), st_)
    loads = simulate(plan, st_, CacheConfig.fully_associative(S))["u"].loads
    assert loads == strided_closed_form(k * S, n2, r, k, a)


def test_strided_preconditions():
    st_ = star_stencil(2, 1)
    with pytest.raises(ValueError):
        strided_example_order(GridShape((20, 8)), CacheConfig(1, 16, 1), st_)
    with pytest.raises(ValueError):
        strided_example_order(GridShape((16, 8, 3)), CacheConfig(1, 16, 1), star_stencil(3, 1))
    with pytest.raises(ValueError):
        strided_example_order(GridShape((16, 8)), CacheConfig(3, 5, 1), st_)


def test_fit_refuses_unfavorable():
    shape, st_, cfg = GridShape((45, 91, 100)), star_stencil(3, 2), CacheConfig(1, 4096, 1)
    lat = interference_lattice(shape, 4096)
    with pytest.raises(UnfavorableLatticeError):
        cache_fitting_order(shape, st_, lat, cfg)
    small = GridShape((45, 91, 8))
    plan = cache_fitting_order(small, st_, interference_lattice(small, 4096), cfg, force=True)
    assert plan.meta["forced"] and plan.meta["unfavorable"]
    assert is_permutation(plan, st_)


def test_fit_rejects_foreign_lattice():
    st_, cfg = star_stencil(2, 1), CacheConfig(1, 64, 1)
    with pytest.raises(ValueError):
        cache_fitting_order(GridShape((20, 20)), st_, interference_lattice((21, 20), 64), cfg)


def test_fit_everything_fits():
    shape, st_ = GridShape((6, 5)), star_stencil(2, 1)
    cfg = CacheConfig(1, 64, 1)
    plan = make_plan("fit", shape, st_, cfg)
    counts = simulate(plan, st_, cfg)["u"]
    assert counts.replacement_loads == 0
    assert counts.loads == len(k_extension(k_interior(shape, st_), st_))


def test_fit_small_case_below_upper_bound():
    shape, st_, cfg = GridShape((12, 10)), star_stencil(2, 1), CacheConfig(1, 16, 1)
    lat = interference_lattice(shape, 16)
    assert not classify(lat, st_, cfg).unfavorable
    plan = cache_fitting_order(shape, st_, lat, cfg)
    loads = simulate(plan, st_, cfg)["u"].loads
    bound = upper_bound(BoundInputs(shape, 16, 1, lat.reduced.eccentricity))
    assert loads <= bound.value


def test_fit_meta():
    shape, st_, cfg = GridShape((47, 91, 12)), star_stencil(3, 2), CacheConfig(1, 4096, 1)
    plan = make_plan("fit", shape, st_, cfg)
    m = plan.meta
    assert m["width_ok"] and not m["unfavorable"] and not m["forced"]
    assert m["pencils"] == len(np.unique(m["pencil_keys"], axis=0))
    assert m["h_minus"] <= 0 <= m["h_plus"]
    assert is_permutation(plan, st_)


def test_make_plan_unknown():
    with pytest.raises(ValueError):
        make_plan("spiral", GridShape((5, 5)), star_stencil(2, 1), CacheConfig(1, 4, 1))


def test_pencil_decomposition_exact_coordinates():
    lat = interference_lattice((45, 91, 100), 4096)
    dec = PencilDecomposition.from_basis(lat.reduced.vectors)
    basis = np.array(list(dec.face) + [dec.sweep])
    coords = dec.coords(basis)
    assert np.array_equal(coords, dec.det * np.eye(3, dtype=np.int64))


def test_parallelepiped_has_det_points():
    for dims, S in [((45, 91, 100), 64), ((12, 10), 16), ((7, 9, 11), 128)]:
        lat = interference_lattice(dims, S)
        pts = parallelepiped_points(lat.reduced.vectors)
        assert len(pts) == S
        images = {int(x) for x in linearize_many(pts, lat.shape) % S}
        assert len(images) == S


def test_pencil_boundary_replacements():
    """Direct mapped, w=1: every reloaded word lies within r of its pencil's boundary."""
    rng = random.Random(1)
    checked = 0
    while checked < 12:
        d = rng.choice([2, 3])
        S = rng.choice([64, 128, 256, 512])
        dims = tuple(rng.randint(8, 40 if d == 3 else 150) for _ in range(d))
        r = rng.choice([1, 2])
        shape, st_, cfg = GridShape(dims), star_stencil(d, r), CacheConfig(1, S, 1)
        lat = interference_lattice(shape, S)
        try:
            plan = cache_fitting_order(shape, st_, lat, cfg)
        except UnfavorableLatticeError:
            continue
        checked += 1
        run = run_stencil(plan, st_, cfg, record=True)
        outcomes = run.outcomes.reshape(len(plan), -1)
        pi, ki = np.nonzero(outcomes % 3 == REPLACEMENT_LOAD)
        dec = plan.meta["decomposition"]
        z = plan.points[pi] + st_.as_array()[ki]
        lo = plan.meta["pencil_keys"][pi] * dec.det
        num = dec.coords(z)[:, :-1]
        rows = np.linalg.norm(np.array(dec.adj, dtype=float)[:-1], axis=1)
        dist = np.minimum(np.abs(num - lo), np.abs(num - lo - dec.det)) / rows
        assert np.all(np.any(dist <= r + 1e-9, axis=1)), (dims, S, r)


def test_multi_array_layout_recurrence():
    lay = multi_array_layout(1, 16, 100)
    assert lay.bases == (0,) and lay.offsets == (0,) and lay.multipliers == (0,)
    lay = multi_array_layout(2, 16, 100, (0, 8))
    assert lay.multipliers == (0, 6)
    assert lay.bases == (0, 104)
    with pytest.raises(ValueError):
        multi_array_layout(0, 16, 100)
    with pytest.raises(ValueError):
        multi_array_layout(2, 16, 100, (4, 8))


@pytest.mark.parametrize("dims", [(12, 10), (5, 7, 9), (9, 13)])
@pytest.mark.parametrize("p", [2, 4])
def test_tile_images_disjoint_at_s16(dims, p):
    lat = interference_lattice(dims, 16)
    try:
        geom = tile_geometry(lat, p)
    except ValueError:
        pytest.skip("fewer layers than tiles")
    for i in range(p):
        for j in range(i + 1, p):
            assert not geom.images[i] & geom.images[j]
    lay = multi_rhs_layout(lat, star_stencil(len(dims), 1), CacheConfig(1, 16, 1), p)
    V = lat.shape.size
    # tile i of array i occupies the image of tile 1 of array 1 shifted by s_i
    for i in range(p):
        shifted = {(v + lay.bases[i]) % 16 for v in geom.images[0]}
        assert shifted == {(v + lay.bases[0]) % 16 for v in geom.images[i]}
        if i:
            assert lay.bases[i] >= lay.bases[i - 1] + V


def test_run_stencil_everything_fits():
    shape, st_ = GridShape((9, 8, 7)), star_stencil(3, 1)
    for kind in ("natural", "fit"):
        plan = make_plan(kind, shape, st_, CacheConfig(4, 256, 1), force=True)
        rep = simulate(plan, st_, CacheConfig(4, 256, 1))
        assert rep["u"].replacement_loads == 0


def test_run_stencil_with_q_and_rhs():
    shape, st_, cfg = GridShape((20, 20)), star_stencil(2, 1), CacheConfig(1, 64, 1)
    lat = interference_lattice(shape, 64)
    plan = make_plan("fit", shape, st_, cfg, lat, force=True)
    lay = multi_rhs_layout(lat, st_, cfg, 2)
    run = run_stencil(plan, st_, cfg, layout=lay, include_q=True)
    assert set(run.report.arrays) == {"u1", "u2", "q"}
    assert run.accesses_per_point == 2 * st_.size + 1
    assert run.report["q"].accesses == len(plan)
    addrs, ids = address_stream(plan, st_, lay, include_q=True)
    assert len(addrs) == len(plan) * run.accesses_per_point


def test_run_stencil_errors():
    plan = natural_order(GridShape((5, 5)), star_stencil(2, 1))
    with pytest.raises(ValueError):
        run_stencil(plan, star_stencil(3, 1), CacheConfig(1, 4, 1))
    huge = single_array_layout(GridShape((5, 5)), q_base=1 << 41)
    with pytest.raises(OverflowError):
        run_stencil(plan, star_stencil(2, 1), CacheConfig(1, 4, 1), layout=huge, include_q=True)


def test_with_storage():
    plan = natural_order(GridShape((5, 5)), star_stencil(2, 1))
    padded = plan.with_storage(GridShape((7, 5)))
    assert padded.shape == GridShape((7, 5)) and np.array_equal(padded.points, plan.points)
    with pytest.raises(ValueError):
        plan.with_storage(GridShape((4, 5)))
