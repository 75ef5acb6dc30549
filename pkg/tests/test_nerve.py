import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import circle_frames
from ellipsoid_cover.cover import EllipsoidCover
from ellipsoid_cover.errors import BudgetExceededError
from ellipsoid_cover.geometry import Ellipsoid
from ellipsoid_cover.manifolds import Circle, Sphere
from ellipsoid_cover.nerve import (
    Disjoint,
    Inconclusive,
    SimplicialComplex,
    Witness,
    betti_numbers,
    build_nerve,
    intersect,
)
from ellipsoid_cover.sampling import generate_sample


def circle_cover(count, p=0.7, phase=0.0):
    model = Circle(1.0)
    return EllipsoidCover(tau=1.0, p=p, frames=tuple(circle_frames(model, count, phase)))


def test_intersect_neighbours_and_antipodes():
    cov = circle_cover(12)
    w = intersect([cov.ellipsoid(0), cov.ellipsoid(1)])
    assert isinstance(w, Witness)
    assert np.all(cov.forms(w.point)[[0, 1]] <= 1 + 1e-9)
    assert isinstance(intersect([cov.ellipsoid(0), cov.ellipsoid(6)]), Disjoint)


def test_single_ellipsoid_witness():
    cov = circle_cover(4)
    w = intersect([cov.ellipsoid(2)])
    assert isinstance(w, Witness)
    assert cov.ellipsoid(2).quadratic_form(w.point) <= 1 + 1e-9


def test_intersect_rejects_slabs_and_empty():
    from ellipsoid_cover.geometry import TangentFrame

    slab = Ellipsoid(TangentFrame([0.0, 0.0], [[1.0, 0.0]], [[0.0, 1.0]]), 0.5, math.inf)
    with pytest.raises(ValueError):
        intersect([slab])
    with pytest.raises(ValueError):
        intersect([])


@settings(max_examples=40)
@given(st.integers(0, 19), st.integers(0, 19), st.integers(0, 19))
def test_intersect_symmetric_and_sound(i, j, k):
    cov = circle_cover(20, p=0.5)
    ells = [cov.ellipsoid(i), cov.ellipsoid(j), cov.ellipsoid(k)]
    a = intersect(ells)
    b = intersect(ells[::-1])
    # near-tangent triples may be inconclusive, never contradictory
    assert {type(a), type(b)} != {Witness, Disjoint}
    if isinstance(a, Witness):
        assert np.all(cov.forms(a.point)[[i, j, k]] <= 1 + 1e-9)


def test_betti_small_complexes():
    hollow = SimplicialComplex.from_maximal(3, [(0, 1), (1, 2), (0, 2)])
    assert betti_numbers(hollow) == [1, 1]
    filled = SimplicialComplex.from_maximal(3, [(0, 1, 2)])
    assert betti_numbers(filled) == [1, 0, 0]
    octa = [(a, b, c) for a in (0, 1) for b in (2, 3) for c in (4, 5)]
    sphere = SimplicialComplex.from_maximal(6, octa)
    assert betti_numbers(sphere) == [1, 0, 1]
    assert sphere.euler_characteristic() == 2
    two = SimplicialComplex.from_maximal(4, [(0, 1), (2, 3)])
    assert betti_numbers(two, 2) == [2, 0, 0]


def test_complex_validation():
    with pytest.raises(ValueError):
        SimplicialComplex(3, (((0,), (1,), (2,)), ((0, 1), (1, 2)), ((0, 1, 2),)))
    with pytest.raises(ValueError):
        SimplicialComplex(2, (((0,), (1,)), ((1, 0),)))


def test_circle_nerve():
    model = Circle(1.0)
    sample = generate_sample(model, 0.2)
    assert len(sample) == 30
    cx = build_nerve(EllipsoidCover.from_sample(sample, 0.7), max_dim=3)
    assert [cx.count(k) for k in range(4)] == [30, 266, 1048, 2408]
    assert betti_numbers(cx, 2) == [1, 1, 0]
    assert not cx.warnings


def test_nerve_is_rotation_invariant():
    a = build_nerve(circle_cover(16), max_dim=2)
    b = build_nerve(circle_cover(16, phase=0.123), max_dim=2)
    assert [a.count(k) for k in range(3)] == [b.count(k) for k in range(3)]


def test_euler_poincare():
    cx = build_nerve(circle_cover(14), max_dim=3)
    b = betti_numbers(cx)
    assert cx.euler_characteristic() == sum((-1) ** k * x for k, x in enumerate(b))


def test_sparse_cover_has_isolated_vertices():
    cx = build_nerve(circle_cover(3, p=0.2), max_dim=2)
    assert cx.count(1) == 0
    assert betti_numbers(cx, 1) == [3, 0]


def test_sphere_nerve_small():
    model = Sphere(1.0)
    sample = generate_sample(model, 0.6)
    cx = build_nerve(EllipsoidCover.from_sample(sample, 0.9), max_dim=3)
    assert betti_numbers(cx, 2) == [1, 0, 1]


def test_budget():
    cov = circle_cover(30)
    with pytest.raises(BudgetExceededError):
        build_nerve(cov, max_dim=3, max_candidates=10)
    with pytest.raises(BudgetExceededError):
        build_nerve(cov, max_dim=3, deadline=0.0)


def test_dict_round_trip():
    cx = build_nerve(circle_cover(10), max_dim=2)
    d = cx.to_dict()
    again = SimplicialComplex.from_dict(d)
    assert again.simplices == cx.simplices
    assert d["betti"] == betti_numbers(cx)
