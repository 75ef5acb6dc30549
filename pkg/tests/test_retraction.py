import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import circle_frames
from ellipsoid_cover.bounds import lambda_bound
from ellipsoid_cover.cover import EllipsoidCover
from ellipsoid_cover.errors import ContainmentError, DomainError, InfeasibleParametersError
from ellipsoid_cover.manifolds import Circle, Sphere, Torus
from ellipsoid_cover.retraction import (
    EMPTY,
    RetractionConfig,
    SetDistanceGrids,
    SetKind,
    epsilon_ceiling,
    field_batch,
    flow,
    glued_field,
    halfline_expression,
    local_field,
    min_rotation,
    partition_of_unity,
    retract,
    set_distances,
    set_membership,
    trace_flow,
    verify_angle_bound,
    verify_halfline_inequality,
)
from ellipsoid_cover.sampling import generate_sample


def circle_cover(count, p=0.7):
    model = Circle(1.0)
    kappa = 2 * math.sin(math.pi / (2 * count))
    return model, EllipsoidCover(tau=1.0, p=p, frames=tuple(circle_frames(model, count)), kappa=kappa)


@pytest.fixture(scope="module")
def sparse():
    model, cov = circle_cover(6)
    return RetractionConfig.build(cov, model, set_grid_h=0.01)


@pytest.fixture(scope="module")
def dense():
    model, cov = circle_cover(40)
    return RetractionConfig.build(cov, model)


def points_in_cover(cfg, k, rng, off_manifold=1e-3):
    cov, out = cfg.cover, []
    lo, hi = cov.centers.min(0) - cov.tangent_semi_axis, cov.centers.max(0) + cov.tangent_semi_axis
    while len(out) < k:
        X = rng.uniform(lo, hi, (4 * k, cov.ambient_dim))
        keep = cov.contains(X) & (cfg.model.distance(X) > off_manifold)
        out.extend(X[keep])
    return np.array(out[:k])


def test_config_parameters(dense):
    assert dense.lam == pytest.approx(lambda_bound(dense.cover.kappa, 1.0))
    assert dense.w == pytest.approx((0.7 - dense.lam) / 2)
    assert 0 < dense.epsilon < epsilon_ceiling(0.7, dense.lam)
    assert dense.rk_step == 1e-3 and dense.set_grid_h == pytest.approx(0.014)


def test_config_rejects_bad_window():
    model, cov = circle_cover(6, p=0.2)
    with pytest.raises(InfeasibleParametersError):
        RetractionConfig.build(cov, model)
    model, cov = circle_cover(6, p=1.2)
    with pytest.raises(InfeasibleParametersError):
        RetractionConfig.build(cov, model)


def test_set_membership(sparse):
    cov = sparse.cover
    assert set_membership(cov, [3.0, 0.0]).kind is SetKind.OUTSIDE
    m = set_membership(cov, [1.65, 0.0])
    assert m.kind is SetKind.SE and m.index == 0
    mid = Circle(1.0).point(math.pi / 6)
    assert set_membership(cov, mid).kind is SetKind.OVERLAP


def test_set_distance_grid_converges(sparse, rng):
    fine = SetDistanceGrids(sparse.cover, 0.005)
    X = points_in_cover(sparse, 300, rng)
    worst = 0.0
    for x in X:
        for s in np.flatnonzero(sparse.cover.forms(x) < 1):
            a = np.array(sparse.grids.distances(int(s), x))
            b = np.array(fine.distances(int(s), x))
            both = np.isfinite(a) & np.isfinite(b)
            assert np.array_equal(np.isfinite(a), np.isfinite(b))
            worst = max(worst, float(np.max(np.abs(a - b)[both], initial=0.0)))
    # voxel sets differ by at most a half diagonal of the coarse grid on each side
    assert worst <= 0.01 * math.sqrt(2)


def test_set_distances_in_se_are_zero(sparse):
    d = set_distances(sparse, [1.65, 0.0])
    assert list(d) == [0]
    assert d[0][0] == 0.0 and d[0][1] > 0
    with pytest.raises(DomainError):
        set_distances(sparse, [3.0, 0.0])


@pytest.mark.parametrize("name", ["sparse", "dense"])
def test_partition_properties(name, request, rng):
    cfg = request.getfixturevalue(name)
    for x in points_in_cover(cfg, 300, rng):
        weights, fP = partition_of_unity(cfg, x)
        vals = np.array(list(weights.values()))
        assert np.all(vals >= 0) and 0 <= fP <= 1
        assert abs(vals.sum() + fP - 1) < 1e-12
        assert np.sum(vals > 0) <= 1
        if len(weights) == 1:
            assert vals[0] == 1.0


def test_empty_se_weight_is_zero(dense):
    # every point of the dense cover lies in two ellipsoids or none
    x = np.array([1.3, 0.0])
    weights, fP = partition_of_unity(dense, x)
    for s, (dse, _) in set_distances(dense, x).items():
        if dse == EMPTY:
            assert weights[s] == 0.0


def test_local_field(sparse, rng):
    cov = sparse.cover
    for x in points_in_cover(sparse, 200, rng):
        _, prv = sparse.model.project(x)
        for s in np.flatnonzero(cov.forms(x) < 1):
            E = cov.ellipsoid(int(s))
            F = local_field(E, sparse.model, x)
            nrm = E.outward_normal(x)
            assert np.dot(F, nrm) <= 1e-12
            assert np.linalg.norm(F) <= np.linalg.norm(prv) + 1e-12
            if np.dot(prv, nrm) <= 0:
                np.testing.assert_array_equal(F, prv)


@pytest.mark.parametrize("name", ["sparse", "dense"])
def test_glued_field_invariants(name, request, rng):
    cfg = request.getfixturevalue(name)
    res = field_batch(cfg, points_in_cover(cfg, 5000, rng))
    d2 = np.einsum("ij,ij->i", res.prv, res.prv)
    wp = np.einsum("ij,ij->i", res.W, res.prv)
    assert np.all(wp > 0)
    rate = np.einsum("ij,ij->i", res.V, res.prv) / np.sqrt(d2)
    assert np.max(np.abs(rate - 1)) < 1e-12
    assert np.all(res.positive <= 1)
    assert np.all((0 <= res.f_P) & (res.f_P <= 1))
    W, V = glued_field(cfg, res.X[0])
    np.testing.assert_allclose(V, res.V[0], rtol=0, atol=1e-15)


def test_dense_cover_field_is_normal_retraction(dense, rng):
    # no point of the 40-gon cover lies in a single ellipsoid, so f_P = 1
    res = field_batch(dense, points_in_cover(dense, 2000, rng))
    np.testing.assert_allclose(res.W, res.prv, rtol=0, atol=1e-15)


def test_local_field_angle_can_be_small(sparse):
    # inside E(S) just off the circle the level ellipsoid's outer normal is
    # nearly parallel to prv, so <F, prv> drops well below 2/3 |prv|^2
    x = np.array([-0.988031, 0.18699579])
    E = sparse.cover.ellipsoid(3)
    _, prv = sparse.model.project(x)
    ratio = np.dot(local_field(E, sparse.model, x), prv) / np.dot(prv, prv)
    assert ratio == pytest.approx(0.41633455, abs=1e-6)
    weights, _ = partition_of_unity(sparse, x)
    assert weights[3] == 1.0
    W, V = glued_field(sparse, x)
    assert np.linalg.norm(V) > math.sqrt(1.5)


def test_local_field_angle_oracle():
    # unit circle centred at (0, -1), sample at the origin: brute force over
    # the ellipsoid by bisection on the level, independent of the package
    p, worst = 0.7, 1.0
    a = math.sqrt(p + p * p)
    for t in np.linspace(-0.2, 0.2, 81):
        for n in np.linspace(-0.01, 0.01, 41):
            u = np.array([t, n])
            r = np.hypot(t, n + 1)
            prv = np.array([0.0, -1.0]) + (u - [0.0, -1.0]) / r - u
            if np.linalg.norm(prv) < 1e-12 or (t / a) ** 2 + (n / p) ** 2 >= 1:
                continue
            lo, hi = 1e-16, 1.0
            for _ in range(200):
                q = 0.5 * (lo + hi)
                if t * t / (q + q * q) + n * n / (q * q) > 1:
                    lo = q
                else:
                    hi = q
            g = np.array([t / (q + q * q), n / (q * q)])
            g /= np.linalg.norm(g)
            m = prv / np.linalg.norm(prv)
            dot = float(m @ g)
            worst = min(worst, 1 - dot * dot if dot > 0 else 1.0)
    assert worst < 2 / 3


def test_field_domain(dense):
    with pytest.raises(DomainError):
        glued_field(dense, [3.0, 0.0])
    with pytest.raises(DomainError):
        glued_field(dense, [1.0, 0.0])


def test_flow_distance_law(dense, rng):
    X = points_in_cover(dense, 60, rng, off_manifold=0.01)
    d = dense.model.distance(X)
    t = rng.uniform(0, 1, len(X)) * d
    Y = flow(dense, X, t)
    assert np.max(np.abs(dense.model.distance(Y) - (d - t))) <= 10 * dense.rk_step
    assert np.all(dense.cover.contains(Y))


def test_flow_identity_and_semigroup(dense):
    x = np.array([1.3, 0.2])
    np.testing.assert_array_equal(flow(dense, x, 0.0), x)
    a = flow(dense, flow(dense, x, 0.05), 0.07)
    b = flow(dense, x, 0.12)
    assert np.linalg.norm(a - b) < 1e-9


def test_flow_preconditions(dense):
    x = np.array([1.3, 0.0])
    with pytest.raises(DomainError):
        flow(dense, x, 0.31)
    with pytest.raises(DomainError):
        flow(dense, x, -0.1)
    with pytest.raises(DomainError):
        flow(dense, np.array([3.0, 0.0]), 0.1)


def test_trace_flow(dense):
    tr = trace_flow(dense, np.array([0.0, 1.35]), 0.2)
    assert tr.times[0] == 0 and tr.times[-1] == pytest.approx(0.2)
    np.testing.assert_allclose(tr.distances, 0.35 - tr.times, atol=1e-10)
    rec = tr.to_records()
    assert rec[-1]["x"] == tr.terminal.tolist()


def test_retract_endpoints(dense, rng):
    X = points_in_cover(dense, 30, rng)
    np.testing.assert_array_equal(retract(dense, X, 0.0), X)
    end = retract(dense, X, 1.0)
    assert np.max(dense.model.residual(end)) < 1e-12
    on = Circle(1.0).point(np.array([0.3, 2.0]))
    for t in (0.0, 0.3, 0.5, 0.8, 1.0):
        np.testing.assert_allclose(retract(dense, on, t), on, atol=1e-15)
    with pytest.raises(ValueError):
        retract(dense, X, 1.5)


def test_retract_continuous_in_time(dense):
    x = np.array([0.0, 1.6])
    a = retract(dense, x, 0.5)
    b = retract(dense, x, 0.5 + 1e-9)
    assert np.linalg.norm(a - b) < 1e-8
    # the first half stops at distance w from the manifold
    assert dense.model.distance(a) == pytest.approx(dense.w, abs=1e-10)


def test_sphere_and_torus_flows(rng):
    for model, kappa, p, h in ((Sphere(1.0), 0.5, 0.7, 0.05), (Torus(2.0, 0.5), 0.3, 0.4, 0.05)):
        sample = generate_sample(model, kappa)
        cfg = RetractionConfig.build(EllipsoidCover.from_sample(sample, p), model, set_grid_h=h)
        X = points_in_cover(cfg, 10, rng, off_manifold=0.01)
        d = model.distance(X)
        t = 0.9 * d
        Y = flow(cfg, X, t)
        assert np.max(np.abs(model.distance(Y) - (d - t))) <= 10 * cfg.rk_step


def test_halfline_expression_is_squared_distance(rng):
    for _ in range(200):
        q, ell, chi = rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, math.pi / 2)
        r = math.sqrt(q + q * q)
        X = np.array([r * math.sin(chi), q * math.cos(chi)])
        m = np.array([q * math.sin(chi), r * math.cos(chi)])
        m /= np.linalg.norm(m)
        for sign in (1, -1):
            exact = np.sum((X - (1 - ell) * m - np.array([0.0, sign])) ** 2)
            assert halfline_expression(q, ell, chi, sign, relaxed=False) == pytest.approx(exact, abs=1e-12)
            assert halfline_expression(q, ell, chi, sign) >= exact - 1e-12


def test_min_rotation_separates(rng):
    q = rng.uniform(0.01, 0.99, 50)
    chi = rng.uniform(0, math.pi / 2, 50)
    theta = min_rotation(q, chi)
    assert np.all(np.isfinite(theta))
    assert np.all(theta >= math.atan(math.sqrt(2)) - 1e-3)


@settings(max_examples=10)
@given(st.floats(0.0, 0.02).filter(lambda s: not 0 < s <= 0.01))
def test_verify_rejects_coarse_grids(step):
    with pytest.raises(ValueError):
        verify_halfline_inequality(step)
    with pytest.raises(ValueError):
        verify_angle_bound(step)


@given(st.lists(st.tuples(st.floats(0, 2), st.floats(0, 2)), min_size=1, max_size=6))
def test_capped_distances_give_one_positive_weight(pairs):
    from ellipsoid_cover.retraction import _consistent, _weight

    dse = np.array([a for a, _ in pairs])
    dde = np.array([b for _, b in pairs])
    _consistent(dse, dde, len(pairs))
    w = np.array([_weight(a, b) for a, b in zip(dse, dde)])
    assert np.all((0 <= w) & (w <= 1))
    assert np.sum(w > 0) <= 1
