"""Window of admissible persistence parameters and the density criterion.

For a sample with Hausdorff distance ``kappa`` from a manifold of reach
``tau`` the union of open ellipsoids covers the manifold once
``coverage_radius(p, tau) > kappa``; :func:`lambda_bound` inverts that
relation.  The certified density criterion additionally subtracts the
offset ``kappa_off * tau^2`` and only holds for ``p`` in
``[M_P_LOW * tau, M_P_HIGH * tau]``.
"""
from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

from .errors import WindowError

M_P_LOW = 0.5
M_P_HIGH = 0.96
KAPPA_OFF = 0.55

#: sqrt(2 (sqrt(3) - 1)): coverage radius at p = tau, the limit without the offset
THEORETICAL_CEILING = math.sqrt(2 * (math.sqrt(3) - 1))
#: (1/2) sqrt(3/5), the density needed by the union-of-balls construction
BALL_BASELINE = 0.5 * math.sqrt(3 / 5)


def _warn_nondefault(m_p, M_p, kappa_off):
    if (m_p, M_p, kappa_off) != (M_P_LOW, M_P_HIGH, KAPPA_OFF):
        warnings.warn(
            "the lattice certificate was only established for "
            f"m_p={M_P_LOW}, M_p={M_P_HIGH}, kappa_off={KAPPA_OFF}",
            stacklevel=3,
        )


def coverage_radius(p: float, tau: float) -> float:
    """Radius around a sample point guaranteed to lie in its p-ellipsoid."""
    if p <= 0:
        return 0.0
    return math.sqrt(2 * p * (math.sqrt(tau * (p + 2 * tau)) - tau))


def lambda_bound(kappa: float, tau: float) -> float:
    """Smallest ``p`` with ``coverage_radius(p, tau) >= kappa``.

    Bisection on the strictly increasing coverage radius, run until the
    bracket collapses to adjacent floats.
    """
    if kappa < 0 or not tau > 0:
        raise ValueError("need kappa >= 0 and tau > 0")
    if kappa == 0:
        return 0.0
    lo, hi = 0.0, kappa + tau
    while coverage_radius(hi, tau) < kappa:
        lo, hi = hi, 2 * hi
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if coverage_radius(mid, tau) < kappa:
            lo = mid
        else:
            hi = mid
    # pick whichever endpoint reproduces kappa more closely
    if abs(coverage_radius(lo, tau) - kappa) < abs(coverage_radius(hi, tau) - kappa):
        return lo
    return hi


def lambda_closed_form(kappa: float, tau: float):
    """Cardano-type closed form for :func:`lambda_bound`.

    Evaluated in complex arithmetic with principal roots; returns the real
    part when the imaginary part cancels, otherwise ``None`` (the radicals
    then sit on a branch that does not give the real root).
    """
    k2, t2 = kappa * kappa, tau * tau
    disc = 81 * k2**4 * t2**2 - 408 * k2**3 * t2**3 - 96 * k2**2 * t2**4
    inner = 27 * k2**2 * t2 - 36 * k2 * t2**2 + 3 * cmath.sqrt(disc) - 8 * t2**3
    if inner == 0:
        return None
    cube = inner ** (1 / 3)
    lam = 2 * tau * (3 * k2 + t2) / (3 * cube) + cube / (6 * tau) - tau / 3
    if abs(lam.imag) > 1e-9 * max(1.0, abs(lam.real)):
        return None
    return lam.real


def density_check(
    kappa: float,
    tau: float,
    p: float,
    *,
    m_p: float = M_P_LOW,
    M_p: float = M_P_HIGH,
    kappa_off: float = KAPPA_OFF,
) -> bool:
    """Whether ``kappa^2 < coverage_radius(p, tau)^2 - kappa_off tau^2``.

    Raises
    ------
    WindowError
        If ``p`` is outside ``[m_p tau, M_p tau]``.
    """
    _warn_nondefault(m_p, M_p, kappa_off)
    lo, hi = m_p * tau, M_p * tau
    slack = 1e-12 * tau
    if not (lo - slack <= p <= hi + slack):
        raise WindowError(f"p={p} outside the certified window [{lo}, {hi}]")
    return kappa * kappa < coverage_radius(p, tau) ** 2 - kappa_off * tau * tau


def max_density_ratio(M_p: float = M_P_HIGH, kappa_off: float = KAPPA_OFF) -> float:
    """Largest certified ``kappa / tau``, reached at ``p = M_p tau``."""
    if (M_p, kappa_off) != (M_P_HIGH, KAPPA_OFF):
        _warn_nondefault(M_P_LOW, M_p, kappa_off)
    return math.sqrt(2 * M_p * (math.sqrt(2 + M_p) - 1) - kappa_off)


def thickening_covered(r: float, p: float, kappa: float, tau: float) -> bool:
    """Whether the closed r-thickening of the manifold lies in the union."""
    if r < 0:
        raise ValueError("r must be non-negative")
    return p > lambda_bound(kappa, tau) + r


@dataclass(frozen=True)
class DensityReport:
    kappa: float
    tau: float
    p: float
    lambda_: float
    p_window: tuple
    density_ok: bool
    coverage_radius_at_Mp: float

    def as_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "tau": self.tau,
            "p": self.p,
            "lambda": self.lambda_,
            "p_window": list(self.p_window),
            "density_ok": self.density_ok,
            "coverage_radius_at_Mp": self.coverage_radius_at_Mp,
        }


def density_report(
    kappa: float,
    tau: float,
    p: float | None = None,
    *,
    m_p: float = M_P_LOW,
    M_p: float = M_P_HIGH,
    kappa_off: float = KAPPA_OFF,
) -> DensityReport:
    """Summarise the persistence window for a sample; ``p`` defaults to ``M_p tau``."""
    if p is None:
        p = M_p * tau
    lam = lambda_bound(kappa, tau)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ok = density_check(kappa, tau, p, m_p=m_p, M_p=M_p, kappa_off=kappa_off)
    _warn_nondefault(m_p, M_p, kappa_off)
    return DensityReport(
        kappa=kappa,
        tau=tau,
        p=p,
        lambda_=lam,
        p_window=(max(lam, m_p * tau), M_p * tau),
        density_ok=ok,
        coverage_radius_at_Mp=coverage_radius(M_p * tau, tau),
    )
