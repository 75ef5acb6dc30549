"""Lattice certificate that a point in two ellipsoids retracts inside a third.

The worst-case planar geometry is parametrised by four numbers
``(alpha, sigma, p, chi)`` with reach normalised to 1:

* the manifold leaves the first sample point ``S'`` (at the origin, tangent
  along the x-axis) along a unit arc about ``(0, 1)`` for angle ``alpha``,
  then bends the other way along a unit arc about ``C`` for angle
  ``sigma``, ending at the sample point ``S``;
* ``X`` sits on the boundary of the p-ellipse at ``S'``, at angle ``chi``
  in the fourth quadrant.

``v`` is positive exactly when ``X`` is inside the open p-ellipse at ``S``.
A configuration has to be certified when the closest curve point ``Y`` to
``X`` lies outside the open ellipse at ``S'`` and ``S`` is within arc
distance ``kappa_eff(p)`` of ``Y``.  :func:`grid_certify` evaluates ``v``
on a lattice of cube centres of half-width at most ``delta`` and declares
the region certified when the minimum exceeds ``L * delta``.
"""
from __future__ import annotations

import json
import math
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numba
import numpy as np

from .errors import (
    CoverageError,
    DegenerateScanError,
    InfeasibleParametersError,
    RegionError,
)

M_P_LOW = 0.5
M_P_HIGH = 0.96
KAPPA_OFF = 0.55
MAX_DELTA = 0.01
CHECKPOINT_EVERY = 10**8

_FORM_TOL = 1e-12


@dataclass(frozen=True)
class Configuration:
    alpha: float
    sigma: float
    p: float
    chi: float

    def astuple(self):
        return (self.alpha, self.sigma, self.p, self.chi)


def alpha_max(M_p: float = M_P_HIGH) -> float:
    return math.atan(math.sqrt(M_p + M_p * M_p))


def in_region(config: Configuration, region: str = "C_tilde", m_p=M_P_LOW, M_p=M_P_HIGH) -> bool:
    """Membership in the configuration space ``C`` or the enlarged ``C_tilde``."""
    a, s, p, chi = config.astuple()
    eps = 1e-12
    if not (-eps <= a <= alpha_max(M_p) + eps and -eps <= s <= math.pi + eps):
        return False
    if not (m_p - eps <= p <= M_p + eps and -eps <= chi <= math.pi / 2 + eps):
        return False
    bound = p + p * p if region == "C" else 2 * p + p * p
    return math.tan(a) ** 2 <= bound + eps


def point_X(p: float, chi: float) -> np.ndarray:
    """Point on the boundary of the p-ellipse at the origin, fourth quadrant."""
    return np.array([math.sqrt(p + p * p) * math.cos(chi), -p * math.sin(chi)])


def arc_center(alpha: float) -> np.ndarray:
    """Centre of the second unit arc."""
    return np.array([2 * math.sin(alpha), 1 - 2 * math.cos(alpha)])


def point_S(alpha: float, sigma: float) -> np.ndarray:
    """Sample point at the end of the second arc."""
    return np.array(
        [
            2 * math.sin(alpha) - math.sin(alpha - sigma),
            1 - 2 * math.cos(alpha) + math.cos(alpha - sigma),
        ]
    )


def v_rotated(config: Configuration) -> float:
    """``v`` in coordinates translated to ``S`` and rotated by ``alpha - sigma``."""
    a, s, p, chi = config.astuple()
    X = point_X(p, chi)
    S = point_S(a, s)
    c, sn = math.cos(a - s), math.sin(a - s)
    dT, dN = X - S
    x2 = c * dT + sn * dN
    y2 = -sn * dT + c * dN
    return p * p * (p + 1) - (x2 * x2 * p + y2 * y2 * (p + 1))


def v_expanded(config: Configuration) -> float:
    """``v = p^2 (p+1) - |X - S|^2 p - <(-sin(a-s), cos(a-s)), X - S>^2``."""
    a, s, p, chi = config.astuple()
    d = point_X(p, chi) - point_S(a, s)
    w = -math.sin(a - s) * d[0] + math.cos(a - s) * d[1]
    return p * p * (p + 1) - float(d @ d) * p - w * w


def v(config: Configuration, *, m_p=M_P_LOW, M_p=M_P_HIGH) -> float:
    """Signed inside-ness of ``X`` in the open p-ellipse at ``S``.

    Both algebraic forms are evaluated and must agree to 1e-12.

    Raises
    ------
    RegionError
        If the configuration is outside ``C_tilde``.
    """
    if not in_region(config, "C_tilde", m_p, M_p):
        raise RegionError(f"{config} is outside C_tilde")
    rot = v_rotated(config)
    exp = v_expanded(config)
    if abs(rot - exp) > _FORM_TOL:
        raise ArithmeticError(f"forms of v disagree: {rot!r} vs {exp!r}")
    return rot


def lipschitz_L(m_p: float = M_P_LOW, M_p: float = M_P_HIGH) -> float:
    """Lipschitz coefficient of ``v`` on ``C_tilde`` (sup-norm in, 1-norm gradient)."""
    if not 0 < m_p < M_p < 1:
        raise ValueError("need 0 < m_p < M_p < 1")
    d_p = (1 + 2 * m_p) / (2 * math.sqrt(m_p + m_p * m_p))
    return (
        36
        + 46 * M_p
        + 16 * M_p**2
        + 2 * (2 + M_p) * (1 + M_p) * (d_p + math.sqrt(M_p + M_p * M_p))
    )


def kappa_eff(p: float, kappa_off: float = KAPPA_OFF) -> float:
    """Reduced bound on the curve distance between ``Y`` and ``S``."""
    rad = 2 * p * (math.sqrt(p + 2) - 1) - kappa_off
    if rad <= 0:
        raise InfeasibleParametersError(
            f"2p(sqrt(p+2)-1) - kappa_off = {rad:.6g} <= 0 for p={p}"
        )
    return math.sqrt(rad)


@dataclass(frozen=True)
class CurveProjection:
    """Closest point ``Y`` to ``X`` on the two-arc curve.

    ``position`` is the arc-length coordinate of ``Y`` measured from ``S'``;
    ``S`` itself sits at ``alpha + sigma``.
    """

    point: np.ndarray
    position: float
    on_first_arc: bool
    distance: float


@numba.njit(cache=True)
def _wrap_clamp(u, width):
    # angle u wrapped around the arc midpoint, then clamped onto [0, width]
    lo = 0.5 * width - math.pi
    u = u - 2 * math.pi * math.floor((u - lo) / (2 * math.pi))
    if u < 0.0:
        return 0.0
    if u > width:
        return width
    return u


def curve_projection(alpha: float, sigma: float, X) -> CurveProjection:
    """Nearest point to ``X`` on the union of the two arcs (closed-form, clamped)."""
    xt, xn = float(X[0]), float(X[1])
    t = math.atan2(xn - 1.0, xt) + math.pi / 2
    t = min(max(t, 0.0), alpha)
    y1 = np.array([math.sin(t), 1 - math.cos(t)])
    c = arc_center(alpha)
    u = alpha - math.atan2(xn - c[1], xt - c[0]) + math.pi / 2
    u = _wrap_clamp(u, sigma)
    y2 = c + np.array([-math.sin(alpha - u), math.cos(alpha - u)])
    d1 = math.hypot(xt - y1[0], xn - y1[1])
    d2 = math.hypot(xt - y2[0], xn - y2[1])
    if d1 <= d2:
        return CurveProjection(y1, t, True, d1)
    return CurveProjection(y2, alpha + u, False, d2)


def arc_distance_to_S(config: Configuration) -> float:
    """Arc length along the curve from ``Y`` (closest point to ``X``) to ``S``."""
    a, s, p, chi = config.astuple()
    proj = curve_projection(a, s, point_X(p, chi))
    return abs(a + s - proj.position)


def mandatory(config: Configuration, kappa_off: float = KAPPA_OFF) -> bool:
    """Whether ``S`` is within ``kappa_eff(p)`` of ``Y`` along the curve."""
    return arc_distance_to_S(config) <= kappa_eff(config.p, kappa_off)


def projection_outside_first(config: Configuration) -> bool:
    """Whether ``Y`` is outside the open p-ellipse at ``S'``.

    When ``Y`` is inside it the segment from ``X`` to ``Y`` already lies in
    that ellipse, so nothing needs certifying.
    """
    a, s, p, chi = config.astuple()
    y = curve_projection(a, s, point_X(p, chi)).point
    return y[0] ** 2 / (p + p * p) + y[1] ** 2 / (p * p) >= 1.0


def needs_certificate(config: Configuration, kappa_off: float = KAPPA_OFF) -> bool:
    return mandatory(config, kappa_off) and projection_outside_first(config)


@dataclass(frozen=True)
class CertifierParams:
    delta: float = 0.0004
    m_p: float = M_P_LOW
    M_p: float = M_P_HIGH
    kappa_off: float = KAPPA_OFF
    region: str = "C_tilde"
    #: optional sub-box ((alpha_lo, alpha_hi), (sigma_lo, sigma_hi), ...);
    #: defaults to the cuboid enclosing the configuration space
    box: tuple | None = None

    def __post_init__(self):
        if not 0 < self.m_p < self.M_p < 1:
            raise ValueError("need 0 < m_p < M_p < 1")
        if self.region not in ("C", "C_tilde"):
            raise ValueError("region must be 'C' or 'C_tilde'")

    def cuboid(self):
        if self.box is not None:
            return tuple(tuple(map(float, b)) for b in self.box)
        return (
            (0.0, alpha_max(self.M_p)),
            (0.0, math.pi),
            (self.m_p, self.M_p),
            (0.0, math.pi / 2),
        )


def lattice_axis(lo: float, hi: float, delta: float) -> np.ndarray:
    """Cube centres tiling ``[lo, hi]`` exactly with step ``<= 2 delta``."""
    if hi <= lo:
        return np.array([lo])
    n = max(1, math.ceil((hi - lo) / (2 * delta) - 1e-9))
    h = (hi - lo) / n
    return lo + h * (np.arange(n) + 0.5)


@dataclass(frozen=True)
class CertificateReport:
    delta: float
    L: float
    lattice_dims: tuple
    points_evaluated: int
    min_v: float
    argmin: Configuration
    argmin_index: tuple
    certified: bool
    wall_time: float
    m_p: float = M_P_LOW
    M_p: float = M_P_HIGH
    kappa_off: float = KAPPA_OFF
    region: str = "C_tilde"

    def to_json(self) -> str:
        d = asdict(self)
        arg = d.pop("argmin")
        for k, val in arg.items():
            d[f"argmin_{k}"] = val
        d["lattice_dims"] = list(self.lattice_dims)
        d["argmin_index"] = list(self.argmin_index)
        return json.dumps(d, indent=2, default=float)

    @classmethod
    def from_json(cls, text: str) -> "CertificateReport":
        d = json.loads(text)
        arg = Configuration(*(d.pop(f"argmin_{k}") for k in ("alpha", "sigma", "p", "chi")))
        d["lattice_dims"] = tuple(d["lattice_dims"])
        d["argmin_index"] = tuple(d["argmin_index"])
        return cls(argmin=arg, **d)


@numba.njit(cache=True, nogil=True)
def _scan_alpha(a, sigmas, ps, chis, kappa_off, tilde):
    """Minimum of v over one alpha slice of the lattice.

    Returns (min, j, k, l, evaluated, visited).  Ties keep the
    lexicographically first index because only strict improvements replace
    the running minimum and the loops run in index order.
    """
    n_p = ps.size
    n_x = chis.size
    sa = math.sin(a)
    ca = math.cos(a)
    ta2 = math.tan(a) ** 2
    cT = 2.0 * sa
    cN = 1.0 - 2.0 * ca
    xT = np.empty((n_p, n_x))
    xN = np.empty((n_p, n_x))
    y1T = np.empty((n_p, n_x))
    y1N = np.empty((n_p, n_x))
    t1 = np.empty((n_p, n_x))
    d1 = np.empty((n_p, n_x))
    rC = np.empty((n_p, n_x))
    u0 = np.empty((n_p, n_x))
    # everything that does not depend on sigma
    for k in range(n_p):
        p = ps[k]
        rp = math.sqrt(p + p * p)
        for l in range(n_x):
            xt = rp * math.cos(chis[l])
            xn = -p * math.sin(chis[l])
            xT[k, l] = xt
            xN[k, l] = xn
            t = math.atan2(xn - 1.0, xt) + 0.5 * math.pi
            if t < 0.0:
                t = 0.0
            elif t > a:
                t = a
            y1T[k, l] = math.sin(t)
            y1N[k, l] = 1.0 - math.cos(t)
            t1[k, l] = t
            d1[k, l] = math.sqrt((xt - y1T[k, l]) ** 2 + (xn - y1N[k, l]) ** 2)
            rC[k, l] = math.sqrt((xt - cT) ** 2 + (xn - cN) ** 2)
            u0[k, l] = a - math.atan2(xn - cN, xt - cT) + 0.5 * math.pi

    best = np.inf
    bj = -1
    bk = -1
    bl = -1
    evaluated = 0
    visited = 0
    for j in range(sigmas.size):
        s = sigmas[j]
        sam = math.sin(a - s)
        cam = math.cos(a - s)
        sT = cT - sam
        sN = cN + cam
        for k in range(n_p):
            p = ps[k]
            bound = 2.0 * p + p * p if tilde else p + p * p
            if ta2 > bound:
                continue
            visited += n_x
            keff2 = 2.0 * p * (math.sqrt(p + 2.0) - 1.0) - kappa_off
            if keff2 <= 0.0:
                continue
            keff = math.sqrt(keff2)
            inv_a2 = 1.0 / (p + p * p)
            inv_b2 = 1.0 / (p * p)
            top = p * p * (p + 1.0)
            for l in range(n_x):
                xt = xT[k, l]
                xn = xN[k, l]
                u = _wrap_clamp(u0[k, l], s)
                if u == 0.0:
                    y2t = sa
                    y2n = 1.0 - ca
                    dd2 = math.sqrt((xt - y2t) ** 2 + (xn - y2n) ** 2)
                elif u == s:
                    y2t = sT
                    y2n = sN
                    dd2 = math.sqrt((xt - y2t) ** 2 + (xn - y2n) ** 2)
                else:
                    r = rC[k, l]
                    y2t = cT + (xt - cT) / r
                    y2n = cN + (xn - cN) / r
                    dd2 = abs(r - 1.0)
                if d1[k, l] <= dd2:
                    yt = y1T[k, l]
                    yn = y1N[k, l]
                    pos = t1[k, l]
                else:
                    yt = y2t
                    yn = y2n
                    pos = a + u
                if abs(a + s - pos) > keff:
                    continue
                if yt * yt * inv_a2 + yn * yn * inv_b2 < 1.0:
                    continue
                dT = xt - sT
                dN = xn - sN
                w = -sam * dT + cam * dN
                val = top - (dT * dT + dN * dN) * p - w * w
                evaluated += 1
                if val < best:
                    best = val
                    bj = j
                    bk = k
                    bl = l
    return best, bj, bk, bl, evaluated, visited


# ---------------------------------------------------------------- checkpoints

_MAGIC = b"ELLCERT\x00"
_VERSION = 1
_HEADER = struct.Struct("<8sI4d4I")
_RECORD = struct.Struct("<?d3qqq")


def _header_bytes(params: CertifierParams, dims) -> bytes:
    return _HEADER.pack(
        _MAGIC, _VERSION, params.delta, params.m_p, params.M_p, params.kappa_off, *dims
    )


def save_checkpoint(path, params: CertifierParams, dims, results) -> None:
    """Write per-slice partial minima; ``results[i]`` is None for pending slices."""
    buf = bytearray(_header_bytes(params, dims))
    for res in results:
        if res is None:
            buf += _RECORD.pack(False, 0.0, 0, 0, 0, 0, 0)
        else:
            buf += _RECORD.pack(True, *res)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf)
    os.replace(tmp, path)


def load_checkpoint(path, params: CertifierParams, dims) -> list:
    with open(path, "rb") as fh:
        data = fh.read()
    head = data[: _HEADER.size]
    if len(head) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, version, *_ = _HEADER.unpack(head)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a certifier checkpoint")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    if head != _header_bytes(params, dims):
        raise ValueError(f"{path}: checkpoint was written for different parameters")
    body = data[_HEADER.size:]
    n = dims[0]
    if len(body) != n * _RECORD.size:
        raise ValueError(f"{path}: expected {n} records")
    out = []
    for i in range(n):
        done, *rest = _RECORD.unpack_from(body, i * _RECORD.size)
        out.append(tuple(rest) if done else None)
    return out


# ---------------------------------------------------------------------- scan


def default_workers() -> int:
    env = os.environ.get("ELLIPSOID_COVER_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def grid_certify(
    params: CertifierParams,
    *,
    workers: int | None = None,
    checkpoint: str | os.PathLike | None = None,
    checkpoint_every: int = CHECKPOINT_EVERY,
) -> CertificateReport:
    """Scan the lattice and report the minimum of ``v`` over scanned points.

    The alpha axis is split into one slice per lattice index; slices run on a
    thread pool (the kernel releases the GIL) and are reduced in index
    order, so the result does not depend on ``workers``.  With
    ``checkpoint`` set, finished slices are persisted every
    ``checkpoint_every`` lattice visits and reused on restart.

    Raises
    ------
    CoverageError
        If ``delta`` exceeds 0.01.
    DegenerateScanError
        If no lattice point needs certifying.
    """
    if not 0 < params.delta <= MAX_DELTA:
        raise CoverageError(f"delta={params.delta} outside (0, {MAX_DELTA}]")
    t0 = time.perf_counter()
    axes = [lattice_axis(lo, hi, params.delta) for lo, hi in params.cuboid()]
    alphas, sigmas, ps, chis = axes
    dims = tuple(ax.size for ax in axes)
    tilde = params.region == "C_tilde"

    results = [None] * dims[0]
    if checkpoint is not None and os.path.exists(checkpoint):
        results = load_checkpoint(checkpoint, params, dims)

    def work(i):
        best, j, k, l, ev, vis = _scan_alpha(
            alphas[i], sigmas, ps, chis, params.kappa_off, tilde
        )
        return i, (best, j, k, l, ev, vis)

    pending = [i for i, r in enumerate(results) if r is None]
    workers = workers or default_workers()
    since_save = 0
    per_slice = dims[1] * dims[2] * dims[3]
    if workers == 1:
        it = map(work, pending)
        pool = None
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        it = pool.map(work, pending)
    try:
        for i, res in it:
            results[i] = res
            since_save += per_slice
            if checkpoint is not None and since_save >= checkpoint_every:
                save_checkpoint(checkpoint, params, dims, results)
                since_save = 0
    finally:
        if pool is not None:
            pool.shutdown()
    if checkpoint is not None:
        save_checkpoint(checkpoint, params, dims, results)

    best, arg, evaluated = math.inf, None, 0
    for i, (val, j, k, l, ev, _) in enumerate(results):
        evaluated += ev
        if ev and val < best:
            best, arg = val, (i, j, k, l)
    if arg is None:
        raise DegenerateScanError("no lattice point in the region needs certifying")
    i, j, k, l = arg
    L = lipschitz_L(params.m_p, params.M_p)
    return CertificateReport(
        delta=params.delta,
        L=L,
        lattice_dims=dims,
        points_evaluated=int(evaluated),
        min_v=float(best),
        argmin=Configuration(float(alphas[i]), float(sigmas[j]), float(ps[k]), float(chis[l])),
        argmin_index=(int(i), int(j), int(k), int(l)),
        certified=bool(best > L * params.delta),
        wall_time=time.perf_counter() - t0,
        m_p=params.m_p,
        M_p=params.M_p,
        kappa_off=params.kappa_off,
        region=params.region,
    )
