"""Deformation retraction of the ellipsoid union onto an analytic manifold.

The retraction runs in two stages.  First the flow of a normalised
velocity field pulls every point towards the manifold at unit speed until
it is ``w`` away.  Then the straight-line normal retraction finishes the
job.  The velocity field glues per-ellipsoid fields ``F_S`` with a partition
of unity built from distances to the sets

* ``Se(S)``: points of the union covered by ``E_p(S)`` alone,
* ``De(S)``: points of the union outside ``E_p(S)``.

Those sets have no closed form, so their distance functions are tabulated
on a voxel grid per ellipsoid.  Every grid lives in the ellipsoid's own
tangent-normal frame, so all grids of a cover share one shape and one
kernel interpolates any of them.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .bounds import lambda_bound
from .cover import EllipsoidCover
from .errors import ContainmentError, DomainError, InfeasibleParametersError
from .geometry import Ellipsoid

#: Distance reported for ``Se(S)`` when that set is empty.
EMPTY = math.inf

_OUTSIDE, _SE, _DE, _OVERLAP = 0, 1, 2, 3

# status codes returned by the field kernel
_OK, _NOT_COVERED, _ON_MANIFOLD = 0, 1, 2


def epsilon_ceiling(p: float, lam: float, tau: float = 1.0) -> float:
    """Upper limit for the flow-containment margin ``epsilon``."""
    ph, lh = p / tau, lam / tau
    inner = ph * (3 * ph * ph - lh * lh + 2 * ph * (2 + lh)) / (1 + ph)
    return tau * min((ph - lh) / 2, ph - 0.5 * math.sqrt(inner))


# -- numba kernels -----------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _depth(A, B, tau):
    if A <= 0.0 and B <= 0.0:
        return 0.0
    if A <= 0.0:
        return math.sqrt(B)
    if B <= 0.0:
        return 0.5 * (math.sqrt(tau * tau + 4.0 * A) - tau)
    lo = max(math.sqrt(B), 0.5 * (math.sqrt(tau * tau + 4.0 * A) - tau))
    hi = math.sqrt(A + B)
    q = hi
    for _ in range(100):
        f = ((q + tau) * q - (A + B)) * q - tau * B
        if f > 0.0:
            hi = q
        else:
            lo = q
        df = (3.0 * q + 2.0 * tau) * q - (A + B)
        nq = q - f / df if df > 0.0 else 0.5 * (lo + hi)
        if not (lo < nq < hi):
            nq = 0.5 * (lo + hi)
        if abs(nq - q) <= 1e-16 * q:
            return nq
        q = nq
    return q


@numba.njit(cache=True, nogil=True)
def _classify(label, M, b, ctr, m, a2, p2, ext, h, shape):
    """Label every voxel of one ellipsoid's grid.

    Neighbour ``k`` maps local coordinates ``u`` to its own frame by
    ``M[k] @ u + b[k]`` and lies in the ball of radius ``sqrt(a2)`` about
    ``ctr[k]``.
    """
    n = ext.shape[0]
    K = M.shape[0]
    u = np.empty(n)
    last = 0
    for flat in range(label.shape[0]):
        rem = flat
        for j in range(n - 1, -1, -1):
            u[j] = -ext[j] + h * (rem % shape[j])
            rem //= shape[j]
        own = 0.0
        for j in range(n):
            own += u[j] * u[j] / (a2 if j < m else p2)
        other = False
        for i in range(K):
            k = (last + i) % K
            r2 = 0.0
            for j in range(n):
                r2 += (u[j] - ctr[k, j]) ** 2
            if r2 >= a2:
                continue
            val = 0.0
            for j in range(n):
                y = b[k, j]
                for l in range(n):
                    y += M[k, j, l] * u[l]
                val += y * y / (a2 if j < m else p2)
            if val < 1.0:
                other = True
                last = k
                break
        if own < 1.0:
            label[flat] = _OVERLAP if other else _SE
        else:
            label[flat] = _DE if other else _OUTSIDE


@numba.njit(cache=True, nogil=True)
def _interp(table, u, ext, h, shape, strides):
    """Multilinear interpolation of a flattened grid table at local coords ``u``."""
    n = u.shape[0]
    base = np.empty(n, np.int64)
    frac = np.empty(n)
    for j in range(n):
        g = (u[j] + ext[j]) / h
        top = shape[j] - 1
        if g <= 0.0:
            base[j] = 0
            frac[j] = 0.0
        elif g >= top:
            base[j] = top - 1
            frac[j] = 1.0
        else:
            b = int(math.floor(g))
            if b >= top:
                b = top - 1
            base[j] = b
            frac[j] = g - b
    out = 0.0
    for corner in range(1 << n):
        wgt = 1.0
        idx = 0
        for j in range(n):
            if (corner >> j) & 1:
                wgt *= frac[j]
                idx += (base[j] + 1) * strides[j]
            else:
                wgt *= 1.0 - frac[j]
                idx += base[j] * strides[j]
        if wgt != 0.0:
            out += wgt * table[idx]
    return out


@numba.njit(cache=True, nogil=True)
def _psi(t):
    return math.exp(-1.0 / t) if t > 0.0 else 0.0


@numba.njit(cache=True, nogil=True)
def _weight(dse, dde):
    """Smooth bump quotient: 1 where dse <= dde/2, 0 where dde <= 1.5 dse."""
    g = _psi(dde - 1.5 * dse)
    k = _psi(dse - 0.5 * dde)
    if g + k == 0.0:
        return 0.0
    return g / (g + k)


@numba.njit(cache=True, nogil=True)
def _consistent(dse, dde, cnt):
    """Clamp ``dde[a]`` to ``min(dse[b], b != a)`` in place.

    ``Se(S'')`` lies inside ``De(S')`` whenever ``S' != S''``, so the exact
    distances satisfy this; imposing it on interpolated values keeps the
    supports of the weights disjoint.
    """
    lo1 = math.inf
    lo2 = math.inf
    arg = -1
    for c in range(cnt):
        if dse[c] < lo1:
            lo2 = lo1
            lo1 = dse[c]
            arg = c
        elif dse[c] < lo2:
            lo2 = dse[c]
    for c in range(cnt):
        other = lo2 if c == arg else lo1
        if other < dde[c]:
            dde[c] = other


@numba.njit(cache=True, nogil=True)
def _fields(X, prv, forms, C, Rs, m, tau, a2, p2, slot, se_empty,
            dse_tab, dde_tab, ext, h, shape, strides):
    k, n = X.shape
    W = np.zeros((k, n))
    V = np.zeros((k, n))
    fP = np.ones(k)
    npos = np.zeros(k, np.int64)
    status = np.zeros(k, np.int64)
    u = np.empty(n)
    F = np.empty(n)
    g = np.empty(n)
    N = forms.shape[1]
    idx = np.empty(N, np.int64)
    dse = np.empty(N)
    dde = np.empty(N)
    for i in range(k):
        cnt = 0
        for s in range(forms.shape[1]):
            if forms[i, s] < 1.0:
                cnt += 1
        if cnt == 0:
            status[i] = _NOT_COVERED
            continue
        d2 = 0.0
        for l in range(n):
            d2 += prv[i, l] * prv[i, l]
        if d2 == 0.0:
            status[i] = _ON_MANIFOLD
            continue
        # distances for every ellipsoid containing X, then the weights
        c = 0
        for s in range(forms.shape[1]):
            if forms[i, s] >= 1.0:
                continue
            idx[c] = s
            if cnt == 1:
                dse[c] = 0.0  # X is in Se(S) itself
                dde[c] = 1.0
            elif se_empty[s]:
                dse[c] = math.inf
                dde[c] = 0.0
            else:
                for j in range(n):
                    acc = 0.0
                    for l in range(n):
                        acc += Rs[s, j, l] * (X[i, l] - C[s, l])
                    u[j] = acc
                dse[c] = _interp(dse_tab[slot[s]], u, ext, h, shape, strides)
                dde[c] = _interp(dde_tab[slot[s]], u, ext, h, shape, strides)
            c += 1
        _consistent(dse, dde, cnt)
        for c in range(cnt):
            s = idx[c]
            f = 0.0 if math.isinf(dse[c]) else _weight(dse[c], dde[c])
            if f <= 0.0:
                continue
            npos[i] += 1
            # local field: prv with its outward-normal component removed
            A = 0.0
            B = 0.0
            for j in range(n):
                acc = 0.0
                for l in range(n):
                    acc += Rs[s, j, l] * (X[i, l] - C[s, l])
                u[j] = acc
                if j < m:
                    A += acc * acc
                else:
                    B += acc * acc
            q = _depth(A, B, tau)
            nn = 0.0
            for l in range(n):
                acc = 0.0
                for j in range(n):
                    acc += Rs[s, j, l] * u[j] / ((tau * q + q * q) if j < m else q * q)
                g[l] = acc
                nn += acc * acc
            nn = math.sqrt(nn)
            dot = 0.0
            for l in range(n):
                g[l] /= nn
                dot += prv[i, l] * g[l]
            for l in range(n):
                F[l] = prv[i, l] - dot * g[l] if dot > 0.0 else prv[i, l]
                W[i, l] += f * F[l]
            fP[i] -= f
        wp = 0.0
        for l in range(n):
            W[i, l] += fP[i] * prv[i, l]
            wp += W[i, l] * prv[i, l]
        scale = math.sqrt(d2) / wp
        for l in range(n):
            V[i, l] = scale * W[i, l]
    return W, V, fP, npos, status


# -- set classification ------------------------------------------------------


class SetKind(enum.Enum):
    OUTSIDE = "outside"
    SE = "in_Se"
    OVERLAP = "in_overlap"


@dataclass(frozen=True)
class SetMembership:
    kind: SetKind
    index: int | None = None


def set_membership(cover: EllipsoidCover, X) -> SetMembership:
    """Which of ``Se(S)``, an overlap, or the outside of the union ``X`` is in."""
    inside = np.flatnonzero(cover.forms(X) < 1.0)
    if len(inside) == 0:
        return SetMembership(SetKind.OUTSIDE)
    if len(inside) == 1:
        return SetMembership(SetKind.SE, int(inside[0]))
    return SetMembership(SetKind.OVERLAP)


class SetDistanceGrids:
    """Lazily built distance tables to ``Se(S)`` and ``De(S)``, one per ellipsoid.

    Each table covers the box ``[-a-pad, a+pad]^m x [-p-pad, p+pad]^(n-m)``
    in the tangent-normal frame of ``S``.  Voxels are classified exactly
    and the two distance fields come from a Euclidean distance transform.
    """

    def __init__(self, cover: EllipsoidCover, h: float, pad: float | None = None):
        if math.isinf(cover.tau):
            raise ValueError("set distances need bounded ellipsoids")
        self.cover = cover
        self.h = float(h)
        self.pad = 0.5 * cover.p if pad is None else float(pad)
        n, m = cover.ambient_dim, cover.dim
        a, p = cover.tangent_semi_axis, cover.p
        self.ext = np.array([a + self.pad] * m + [p + self.pad] * (n - m))
        self.shape = np.array([int(math.ceil(2 * e / self.h)) + 1 for e in self.ext], dtype=np.int64)
        self.strides = np.array(
            [int(np.prod(self.shape[j + 1:])) for j in range(n)], dtype=np.int64
        )
        self.voxels = int(np.prod(self.shape))
        N = len(cover)
        self.C = cover.centers
        self.Rs = np.array(
            [np.vstack([f.tangent_basis, f.normal_basis]) for f in cover.frames]
        )
        self.a2 = cover.tau * p + p * p
        self.p2 = p * p
        self.slot = np.full(N, -1, dtype=np.int64)
        self.se_empty = np.zeros(N, dtype=np.bool_)
        # untouched rows of np.empty are never committed to memory
        self.dse = np.empty((N, self.voxels), dtype=np.float64)
        self.dde = np.empty((N, self.voxels), dtype=np.float64)
        self._tree = cKDTree(self.C)
        self._reach = float(np.linalg.norm(self.ext)) + a
        self._next = 0

    def labels(self, s: int) -> np.ndarray:
        nbrs = np.array(self._tree.query_ball_point(self.C[s], self._reach), dtype=np.int64)
        nbrs = nbrs[nbrs != s]
        R = self.Rs[s]
        ctr = (self.C[nbrs] - self.C[s]) @ R.T
        # keep neighbours whose bounding ball meets the box
        gap = np.maximum(np.abs(ctr) - self.ext, 0.0)
        keep = np.einsum("ij,ij->i", gap, gap) < self.a2
        nbrs, ctr = nbrs[keep], ctr[keep]
        n = len(self.ext)
        M = np.ascontiguousarray((self.Rs[nbrs] @ R.T).reshape(len(nbrs), n, n))
        b = -np.einsum("kjl,kl->kj", M, ctr).reshape(len(nbrs), n)
        label = np.empty(self.voxels, dtype=np.int8)
        _classify(label, M, b, np.ascontiguousarray(ctr).reshape(len(nbrs), n), self.cover.dim,
                  self.a2, self.p2, self.ext, self.h, self.shape)
        return label.reshape(tuple(self.shape))

    def ensure(self, indices) -> None:
        for s in np.unique(np.asarray(indices, dtype=np.int64)):
            if self.slot[s] >= 0:
                continue
            lab = self.labels(int(s))
            se = lab == _SE
            de = lab == _DE
            if se.any():
                dse = ndimage.distance_transform_edt(~se, sampling=self.h)
            else:
                self.se_empty[s] = True
                dse = np.full(lab.shape, EMPTY)
            if de.any():
                dde = ndimage.distance_transform_edt(~de, sampling=self.h)
            else:
                dde = np.full(lab.shape, EMPTY)
            self.dse[self._next] = dse.ravel()
            self.dde[self._next] = dde.ravel()
            self.slot[s] = self._next
            self._next += 1

    def local(self, s: int, X) -> np.ndarray:
        return self.Rs[s] @ (np.asarray(X, dtype=float) - self.C[s])

    def distances(self, s: int, X) -> tuple:
        self.ensure([s])
        u = self.local(s, X)
        row = self.slot[s]
        dse = EMPTY if self.se_empty[s] else _interp(self.dse[row], u, self.ext, self.h, self.shape, self.strides)
        dde = _interp(self.dde[row], u, self.ext, self.h, self.shape, self.strides)
        return float(dse), float(dde)


# -- configuration -----------------------------------------------------------


@dataclass(eq=False)
class RetractionConfig:
    """Everything the flow needs: cover, model, ``lambda``, ``w`` and step sizes."""

    cover: EllipsoidCover
    model: object
    lam: float
    w: float
    epsilon: float
    set_grid_h: float
    rk_step: float
    grids: SetDistanceGrids = field(repr=False, default=None)

    @classmethod
    def build(cls, cover, model, *, set_grid_h=None, rk_step=None, epsilon=None, lam=None):
        tau = cover.tau
        if math.isinf(tau):
            raise ValueError("the retraction needs a manifold of finite reach")
        if lam is None:
            lam = lambda_bound(cover.kappa, tau) if cover.kappa == cover.kappa else 0.0
        p = cover.p
        if not lam < p < tau:
            raise InfeasibleParametersError(f"need lambda={lam:.6g} < p={p} < tau={tau}")
        ceiling = epsilon_ceiling(p, lam, tau)
        if epsilon is None:
            epsilon = 0.9 * ceiling
        elif not 0 < epsilon < ceiling:
            raise InfeasibleParametersError(f"epsilon must lie in (0, {ceiling:.6g})")
        h = p / 50 if set_grid_h is None else float(set_grid_h)
        step = 1e-3 * tau if rk_step is None else float(rk_step)
        return cls(cover, model, lam, (p - lam) / 2, epsilon, h, step, SetDistanceGrids(cover, h))


# -- fields ------------------------------------------------------------------


@dataclass(frozen=True)
class FieldSample:
    """Glued fields at a batch of points, with partition diagnostics."""

    X: np.ndarray
    prv: np.ndarray
    W: np.ndarray
    V: np.ndarray
    f_P: np.ndarray
    positive: np.ndarray  # number of f_S > 0 per point


def _evaluate(config: RetractionConfig, X, prv=None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if prv is None:
        _, prv = config.model.project(X)
    forms = config.cover.forms(X)
    counts = np.sum(forms < 1.0, axis=1)
    need = np.flatnonzero((forms < 1.0).any(axis=0) & (((forms < 1.0) & (counts[:, None] > 1)).any(axis=0)))
    g = config.grids
    g.ensure(need)
    W, V, fP, npos, status = _fields(
        X, prv, forms, g.C, g.Rs, config.cover.dim, float(config.cover.tau), g.a2, g.p2,
        g.slot, g.se_empty, g.dse, g.dde, g.ext, g.h, g.shape, g.strides,
    )
    return X, prv, W, V, fP, npos, status


def field_batch(config: RetractionConfig, X) -> FieldSample:
    """Evaluate ``W~`` and ``V`` at a stack of points of ``O`` off the manifold."""
    X, prv, W, V, fP, npos, status = _evaluate(config, X)
    if np.any(status == _NOT_COVERED):
        raise DomainError("field requested outside the union of ellipsoids")
    if np.any(status == _ON_MANIFOLD):
        raise DomainError("field requested on the manifold")
    return FieldSample(X, prv, W, V, fP, npos)


def set_distances(config: RetractionConfig, X) -> dict:
    """``{S: (d(Se(S), X), d(De(S), X))}`` for every ellipsoid containing ``X``.

    Exact zeros when ``X`` itself lies in ``Se(S)``; ``EMPTY`` stands for
    the distance to an empty ``Se(S)``.  Each ``d(De(S), X)`` is capped by
    the other ellipsoids' ``d(Se, X)``, as it is for the exact distances.
    """
    X = np.asarray(X, dtype=float)
    inside = np.flatnonzero(config.cover.forms(X) < 1.0)
    if len(inside) == 0:
        raise DomainError("point is outside the union of ellipsoids")
    if len(inside) == 1:
        _, dde = config.grids.distances(int(inside[0]), X)
        return {int(inside[0]): (0.0, dde)}
    dse = np.empty(len(inside))
    dde = np.empty(len(inside))
    for c, s in enumerate(inside):
        dse[c], dde[c] = config.grids.distances(int(s), X)
    _consistent(dse, dde, len(inside))
    return {int(s): (float(a), float(b)) for s, a, b in zip(inside, dse, dde)}


def partition_of_unity(config: RetractionConfig, X) -> tuple:
    """Weights ``({S: f_S(X)}, f_P(X))``; only ellipsoids containing ``X`` can be nonzero."""
    dist = set_distances(config, X)
    weights = {s: (0.0 if math.isinf(dse) else float(_weight(dse, dde))) for s, (dse, dde) in dist.items()}
    return weights, 1.0 - sum(weights.values())


def local_field(E: Ellipsoid, model, X) -> np.ndarray:
    """``prv(X)`` projected onto the half-space bounded by the level ellipsoid's tangent plane."""
    X = np.asarray(X, dtype=float)
    _, prv = model.project(X)
    if not np.any(prv):
        return np.zeros_like(X)
    nrm = E.outward_normal(X)
    out = np.dot(prv, nrm)
    return prv - out * nrm if out > 0 else prv


def glued_field(config: RetractionConfig, X) -> tuple:
    """``(W~(X), V(X))`` at a single point."""
    res = field_batch(config, np.asarray(X, dtype=float)[None])
    return res.W[0], res.V[0]


# -- flow --------------------------------------------------------------------


@dataclass(frozen=True)
class FlowTrace:
    start: np.ndarray
    times: np.ndarray
    positions: np.ndarray
    distances: np.ndarray
    fields: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.positions[-1]

    @property
    def samples(self):
        return list(zip(self.times, self.positions, self.distances, self.fields))

    def to_records(self) -> list:
        return [
            {"t": float(t), "x": x.tolist(), "d": float(d)}
            for t, x, d in zip(self.times, self.positions, self.distances)
        ]


def _velocity(config, X):
    _, _, _, V, _, _, status = _evaluate(config, X)
    bad = status != _OK
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        if status[i] == _NOT_COVERED:
            raise ContainmentError(f"flow left the union of ellipsoids at {X[i].tolist()}")
        raise DomainError(f"flow reached the manifold at {X[i].tolist()}")
    return V


def _integrate(config: RetractionConfig, X0, T, record=False):
    """RK4 integration of ``V`` from each row of ``X0`` for its own time ``T``.

    Each trajectory uses the largest step not above ``rk_step`` that divides
    its time exactly, so it stops on the requested time.
    """
    X = np.array(X0, dtype=float)
    T = np.asarray(T, dtype=float)
    steps = np.ceil(T / config.rk_step - 1e-9).astype(np.int64)
    steps[T <= 0] = 0
    dt = np.where(steps > 0, T / np.maximum(steps, 1), 0.0)
    logs = [[(0.0, X[i].copy())] for i in range(len(X))] if record else None
    for k in range(int(steps.max(initial=0))):
        act = np.flatnonzero(steps > k)
        x = X[act]
        hh = dt[act][:, None]
        k1 = _velocity(config, x)
        k2 = _velocity(config, x + 0.5 * hh * k1)
        k3 = _velocity(config, x + 0.5 * hh * k2)
        k4 = _velocity(config, x + hh * k3)
        x = x + hh / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(config.cover.contains(x)):
            bad = x[~config.cover.contains(x)][0]
            raise ContainmentError(f"flow left the union of ellipsoids at {bad.tolist()}")
        X[act] = x
        if record:
            for j, i in enumerate(act):
                logs[i].append(((k + 1) * dt[i], x[j].copy()))
    return X, logs


def _check_times(config, X, t):
    d = config.model.distance(X)
    d = np.atleast_1d(d)
    t = np.broadcast_to(np.asarray(t, dtype=float), d.shape)
    if np.any(t < 0):
        raise DomainError("flow time must be non-negative")
    if np.any((t > 0) & (t >= d)):
        raise DomainError("flow time must stay below the distance to the manifold")
    if not np.all(config.cover.contains(np.atleast_2d(X))):
        raise DomainError("start point is outside the union of ellipsoids")
    return t


def flow(config: RetractionConfig, X, t):
    """``Phi(X, t)``: follow ``V`` for time ``t < d(M, X)``.

    ``X`` may be one point or a stack; ``t`` a scalar or one time per point.
    """
    X = np.asarray(X, dtype=float)
    Xs = np.atleast_2d(X)
    t = _check_times(config, Xs, t)
    out, _ = _integrate(config, Xs, t)
    return out.reshape(X.shape)


def trace_flow(config: RetractionConfig, X, t) -> FlowTrace:
    """Like :func:`flow` for one start point, keeping every step."""
    X = np.asarray(X, dtype=float)
    t = _check_times(config, X[None], t)
    _, logs = _integrate(config, X[None], t, record=True)
    times = np.array([s for s, _ in logs[0]])
    pos = np.array([x for _, x in logs[0]])
    dist = config.model.distance(pos)
    fields = _velocity(config, pos) if len(pos) > 1 or dist[0] > 0 else np.zeros_like(pos)
    return FlowTrace(X.copy(), times, pos, np.atleast_1d(dist), fields)


def retract(config: RetractionConfig, X, t):
    """Strong deformation retraction of ``O`` onto the manifold at time ``t`` in [0, 1].

    For ``t <= 1/2`` the flow runs for ``min(d(M,X) - w, 2 t tau)``.  For
    ``t > 1/2`` the end point ``Y`` of the flow moves on the segment
    towards ``pr(Y)`` with parameter ``2t - 1``.  Points within ``w`` of the
    manifold skip the flow.
    """
    if not 0 <= t <= 1:
        raise ValueError("t must lie in [0, 1]")
    X = np.asarray(X, dtype=float)
    Xs = np.atleast_2d(X)
    if not np.all(config.cover.contains(Xs)):
        raise DomainError("retract is defined on the union of ellipsoids")
    d = np.atleast_1d(config.model.distance(Xs))
    run = np.maximum(d - config.w, 0.0)
    u = np.minimum(run, min(2 * t, 1.0) * config.cover.tau)
    Y, _ = _integrate(config, Xs, u)
    if t > 0.5:
        s = 2 * t - 1
        pr, _ = config.model.project(Y)
        Y = (1 - s) * Y + s * pr
    return Y.reshape(X.shape)


# -- re-verification of the two planar inequalities ----------------------------


def _open_grid(step):
    k = int(round(1 / step))
    return np.arange(1, k) / k


def _chi_grid(step):
    k = int(math.ceil((math.pi / 2) / step))
    return np.linspace(0.0, math.pi / 2, k + 1)


def halfline_expression(q, ell, chi, sign, relaxed=True):
    """Squared distance from ``X - (1 - ell) m`` to ``(0, sign)``, expanded.

    With ``relaxed`` the ``(1 - ell)^2`` term is replaced by its upper
    bound 1, giving the loosened expression; otherwise the value is the
    exact squared distance for ``m`` equal to the outward normal.
    """
    q, ell, chi = np.broadcast_arrays(*map(np.asarray, (q, ell, chi)))
    c = np.cos(chi)
    root = np.sqrt((1 + q) / (c * c + q))
    one = 1.0 if relaxed else (1 - ell) ** 2
    return (1 + q) ** 2 - q * (1 + sign * c) ** 2 + one - 2 * (1 - ell) * root * (q - sign * c)


def verify_halfline_inequality(grid_step: float = 0.01, relaxed: bool = True) -> float:
    """Grid maximum over q, ell in (0,1), chi in [0, pi/2] and both signs.

    ``relaxed=True`` evaluates the loosened expression; ``relaxed=False``
    the exact squared distance.  The claim to check is that it stays below 4.
    """
    if not 0 < grid_step <= 0.01:
        raise ValueError("grid_step must lie in (0, 0.01]")
    q = _open_grid(grid_step)[:, None, None]
    ell = _open_grid(grid_step)[None, :, None]
    chi = _chi_grid(grid_step)[None, None, :]
    return float(max(np.max(halfline_expression(q, ell, chi, s, relaxed)) for s in (1, -1)))


def _rotation_gap(q, chi, theta):
    """``|X - m_theta - (0,-1)| - 2`` at ``ell = 0``; arrays broadcast."""
    r = np.sqrt(q + q * q)
    x0, x1 = r * np.sin(chi), q * np.cos(chi)
    n0, n1 = q * np.sin(chi), r * np.cos(chi)
    nn = np.hypot(n0, n1)
    n0, n1 = n0 / nn, n1 / nn
    c, s = np.cos(theta), np.sin(theta)
    m0, m1 = c * n0 - s * n1, s * n0 + c * n1
    return np.hypot(x0 - m0, x1 - m1 + 1.0) - 2.0


def min_rotation(q, chi, scan: int = 1440, iters: int = 64):
    """Smallest rotation of the outward normal that separates the two balls.

    Scans ``[0, pi]`` in both senses for the first sign change of the gap and
    bisects it.  Accepts arrays.  Returns ``nan`` where no rotation works.
    """
    q, chi = np.broadcast_arrays(np.asarray(q, float), np.asarray(chi, float))
    shape = q.shape
    q, chi = q.ravel(), chi.ravel()
    if len(q) > 1024:
        parts = [min_rotation(q[i:i + 1024], chi[i:i + 1024], scan, iters) for i in range(0, len(q), 1024)]
        return np.concatenate(parts).reshape(shape)
    thetas = np.linspace(0.0, math.pi, scan + 1)
    best = np.full(q.shape, np.inf)
    for sense in (1.0, -1.0):
        gap = _rotation_gap(q[:, None], chi[:, None], sense * thetas[None, :])
        ok = gap >= 0
        has = ok.any(axis=1)
        first = np.argmax(ok, axis=1)
        lo = thetas[np.maximum(first - 1, 0)]
        hi = thetas[first]
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            pos = _rotation_gap(q, chi, sense * mid) >= 0
            hi = np.where(pos, mid, hi)
            lo = np.where(pos, lo, mid)
        best = np.where(has, np.minimum(best, hi), best)
    best[np.isinf(best)] = np.nan
    return best.reshape(shape)


def verify_angle_bound(grid_step: float = 0.01) -> float:
    """Grid minimum of :func:`min_rotation` over q in (0,1), chi in [0, pi/2]."""
    if not 0 < grid_step <= 0.01:
        raise ValueError("grid_step must lie in (0, 0.01]")
    q = _open_grid(grid_step)[:, None]
    chi = _chi_grid(grid_step)[None, :]
    theta = min_rotation(q, chi)
    if np.isnan(theta).any():
        return float("nan")
    return float(theta.min())
