import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ellipsoid_cover.bounds import (
    coverage_radius,
    density_check,
    density_report,
    lambda_bound,
    lambda_closed_form,
    max_density_ratio,
    thickening_covered,
)
from ellipsoid_cover.errors import WindowError


def test_coverage_radius_values():
    assert coverage_radius(0.96, 1.0) == pytest.approx(1.1761347297586142, abs=1e-12)
    assert coverage_radius(1e-12, 1.0) < 1e-5
    assert coverage_radius(0.5, 1.0) < coverage_radius(0.96, 1.0)


def test_lambda_values():
    assert lambda_bound(0.0, 1.0) == 0.0
    # bisection and the closed form agree; the value rounds to 0.7571
    lam = lambda_bound(1.0, 1.0)
    assert lam == pytest.approx(0.7570684646676455, abs=1e-12)
    assert lambda_closed_form(1.0, 1.0) == pytest.approx(lam, abs=1e-12)
    assert lambda_bound(2.0, 2.0) == pytest.approx(2 * lam, rel=1e-12)


def test_lambda_inverts_coverage(rng):
    for kappa, tau in zip(rng.uniform(0.01, 3, 1000), rng.uniform(0.1, 3, 1000)):
        lam = lambda_bound(kappa, tau)
        assert abs(coverage_radius(lam, tau) - kappa) < 1e-10


@given(st.floats(0.001, 2.0), st.floats(0.001, 2.0), st.floats(0.2, 3.0))
def test_lambda_monotone(k1, k2, tau):
    lo, hi = sorted((k1, k2))
    assert lambda_bound(lo, tau) <= lambda_bound(hi, tau)


def test_closed_form_matches_where_real(rng):
    checked = 0
    for kappa in np.linspace(0.05, 3.0, 60):
        cf = lambda_closed_form(kappa, 1.0)
        if cf is not None:
            assert cf == pytest.approx(lambda_bound(kappa, 1.0), abs=1e-8)
            checked += 1
    assert checked > 10


def test_density_check_examples():
    assert density_check(0.0, 1.0, 0.7)
    assert density_check(0.90, 1.0, 0.96)
    assert not density_check(0.92, 1.0, 0.96)
    with pytest.raises(WindowError):
        density_check(0.1, 1.0, 0.4)
    with pytest.raises(WindowError):
        density_check(0.1, 1.0, 0.97)


@given(st.floats(0.0, 1.0), st.floats(0.5, 0.96), st.floats(0.0, 0.2), st.floats(0.0, 0.2))
def test_density_check_monotone(kappa, p, dk, dp):
    p2 = min(p + dp, 0.96)
    if density_check(kappa, 1.0, p):
        assert density_check(max(kappa - dk, 0.0), 1.0, p)
        assert density_check(kappa, 1.0, p2)


@given(st.floats(0.0, 0.9), st.floats(0.5, 0.96), st.sampled_from([0.5, 2.0, 3.5]))
def test_density_check_homogeneous(kappa, p, c):
    assert density_check(kappa, 1.0, p) == density_check(c * kappa, c, c * p) or abs(
        kappa**2 - (coverage_radius(p, 1.0) ** 2 - 0.55)
    ) < 1e-9


def test_max_density_ratio():
    r = max_density_ratio()
    assert r == pytest.approx(0.9128, abs=5e-4)
    assert 0.5 * math.sqrt(3 / 5) < r < math.sqrt(2 * (math.sqrt(3) - 1))


def test_nondefault_constants_warn():
    with pytest.warns(UserWarning):
        density_check(0.1, 1.0, 0.9, M_p=0.99)


def test_thickening():
    assert thickening_covered(0.0, 0.8, 1.0, 1.0) == (0.8 > lambda_bound(1.0, 1.0))
    assert thickening_covered(0.1, 0.9, 1.0, 1.0)
    assert not thickening_covered(0.2, 0.9, 1.0, 1.0)


def test_density_report_invariants():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = density_report(0.5, 1.0, 0.8)
    assert rep.density_ok
    assert rep.lambda_ < rep.tau
    assert abs(coverage_radius(rep.lambda_, 1.0) - 0.5) < 1e-10
    assert rep.p_window == (0.5, 0.96)
    d = rep.as_dict()
    assert d["density_ok"] is True and d["lambda"] == rep.lambda_
