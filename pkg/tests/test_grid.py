import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import brute_interior
from stencilcache.grid import (EmptyInteriorError, GridShape, Stencil, delinearize, interior_points, k_extension,
                               k_interior, linearize, linearize_many, star_stencil)


def test_shape_basics():
    g = GridShape((45, 91, 100))
    assert g.d == 3 and g.size == 45 * 91 * 100 and g.min_dim == 45
    assert g.strides == (1, 45, 4095)
    assert str(g) == "45x91x100"
    assert GridShape.parse("45x91x100") == g


@pytest.mark.parametrize("dims", [(), (0, 3), (4, -1)])
def test_shape_rejects_bad_dims(dims):
    with pytest.raises(ValueError):
        GridShape(dims)


def test_shape_parse_error():
    with pytest.raises(ValueError):
        GridShape.parse("4xfoo")


def test_linearize_examples():
    assert linearize((0, 0, 0), GridShape((7, 8, 9))) == 0
    assert linearize((1, 2, 3), GridShape((45, 91, 100))) == 12376


def test_linearize_out_of_bounds():
    with pytest.raises(ValueError):
        linearize((45, 0, 0), GridShape((45, 91, 100)))
    with pytest.raises(ValueError):
        delinearize(60, GridShape((3, 4, 5)))


def test_linearize_bijection_3x4x5():
    g = GridShape((3, 4, 5))
    addrs = [linearize(p, g) for p in itertools.product(range(3), range(4), range(5))]
    assert sorted(addrs) == list(range(g.size))
    for a in range(g.size):
        assert linearize(delinearize(a, g), g) == a


@given(st.lists(st.integers(1, 6), min_size=1, max_size=4), st.data())
def test_linearize_many_matches_scalar(dims, data):
    g = GridShape(tuple(dims))
    pts = np.array([[data.draw(st.integers(0, n - 1)) for n in dims] for _ in range(5)])
    assert linearize_many(pts, g).tolist() == [linearize(p, g) for p in pts.tolist()]


@pytest.mark.parametrize("d,r,size", [(3, 1, 7), (3, 2, 13), (2, 1, 5)])
def test_star_sizes(d, r, size):
    s = star_stencil(d, r)
    assert s.size == size == 1 + 2 * d * r
    assert s.diameter == 2 * r + 1 and s.radius == r
    assert s.is_symmetric()
    assert s.size <= (2 * r + 1) ** d


def test_star_rejects_bad_args():
    with pytest.raises(ValueError):
        star_stencil(0, 1)
    with pytest.raises(ValueError):
        star_stencil(2, 0)


def test_stencil_offsets_sorted_and_deduplicated():
    s = Stencil(((1, 0), (0, 0), (1, 0), (-1, 0)))
    assert s.offsets == ((-1, 0), (0, 0), (1, 0))


def test_stencil_parse(tmp_path):
    assert Stencil.parse("star:d=3,r=2") == star_stencil(3, 2)
    f = tmp_path / "k.txt"
    f.write_text("# offsets\n0 0\n1,0\n-1 0\n0 1\n")
    s = Stencil.parse(str(f))
    assert s.size == 4 and s.d == 2 and not s.is_symmetric()
    with pytest.raises(ValueError):
        Stencil.parse("star:r=2")


def test_stencil_mixed_dimensions():
    with pytest.raises(ValueError):
        Stencil(((0, 0), (1,)))


def test_interior_5x5():
    st_ = star_stencil(2, 1)
    R = k_interior(GridShape((5, 5)), st_)
    assert R == {(x, y) for x in range(1, 4) for y in range(1, 4)}
    ext = k_extension(R, st_)
    assert len(ext) == 21
    assert ext == {(x, y) for x in range(5) for y in range(5)} - {(0, 0), (0, 4), (4, 0), (4, 4)}


def test_interior_empty_flagged():
    with pytest.raises(EmptyInteriorError):
        interior_points(GridShape((3, 3)), star_stencil(2, 2))


def test_interior_natural_order():
    pts = interior_points(GridShape((4, 3)), star_stencil(2, 1))
    assert pts.tolist() == [[1, 1], [2, 1]]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 7), min_size=1, max_size=3), st.integers(1, 2),
       st.sets(st.tuples(st.integers(-2, 2), st.integers(-2, 2), st.integers(-2, 2)), min_size=1, max_size=6))
def test_interior_matches_brute_force(dims, r, raw):
    d = len(dims)
    stencil = Stencil(tuple(k[:d] for k in raw))
    expected = brute_interior(dims, stencil.offsets)
    g = GridShape(tuple(dims))
    if not expected:
        with pytest.raises(EmptyInteriorError):
            interior_points(g, stencil)
        return
    assert k_interior(g, stencil) == expected
    ext = k_extension(expected, stencil)
    assert all(g.contains(p) for p in ext)
    assert len(ext) <= stencil.size * len(expected)
