"""Tangent-normal frames, tangent-normal ellipsoids and the depth parameter.

Everything here works in an arbitrary ambient dimension ``n`` with an
``m``-dimensional tangent space.  Points are 1-D float arrays of length
``n``; functions that accept points also accept stacks of shape ``(k, n)``
and then return arrays of length ``k``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, FrameError

#: Reach of an affine subspace.
INFINITE_REACH = math.inf

#: Default half-width of the "boundary" band on the quadratic form.
BOUNDARY_TOL = 1e-9

_GRAM_TOL = 1e-8


def _as_rows(basis, n: int) -> np.ndarray:
    arr = np.asarray(basis, dtype=float)
    if arr.size == 0:
        return np.zeros((0, n))
    return np.atleast_2d(arr)


def complete_basis(tangent: np.ndarray, n: int) -> np.ndarray:
    """Orthonormal complement of ``tangent`` rows in R^n.

    Gram-Schmidt against e_1, ..., e_n in that order, so the result is
    deterministic for a given input.
    """
    vecs = [np.asarray(t, dtype=float) for t in _as_rows(tangent, n)]
    out = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        for v in vecs + out:
            e = e - np.dot(e, v) * v
        # a second pass keeps the result orthogonal to 1e-16
        for v in vecs + out:
            e = e - np.dot(e, v) * v
        norm = np.linalg.norm(e)
        if norm > 1e-6:
            out.append(e / norm)
        if len(out) + len(vecs) == n:
            break
    return np.array(out).reshape(len(out), n)


@dataclass(frozen=True, eq=False)
class TangentFrame:
    """Orthonormal tangent-normal coordinate system anchored at ``origin``.

    ``tangent_basis`` has shape ``(m, n)`` and ``normal_basis`` shape
    ``(n - m, n)``; rows are basis vectors.
    """

    origin: np.ndarray
    tangent_basis: np.ndarray
    normal_basis: np.ndarray

    def __post_init__(self):
        origin = np.array(self.origin, dtype=float).reshape(-1)
        n = origin.size
        tangent = np.array(_as_rows(self.tangent_basis, n), dtype=float)
        normal = np.array(_as_rows(self.normal_basis, n), dtype=float)
        if tangent.shape[1] != n or normal.shape[1] != n:
            raise FrameError(
                f"basis vectors must have length {n}, got tangent {tangent.shape}"
                f" and normal {normal.shape}"
            )
        if tangent.shape[0] + normal.shape[0] != n:
            raise FrameError(
                f"{tangent.shape[0]} tangent + {normal.shape[0]} normal vectors"
                f" do not span R^{n}"
            )
        full = np.vstack([tangent, normal])
        dev = np.max(np.abs(full @ full.T - np.eye(n)))
        if dev > _GRAM_TOL:
            raise FrameError(f"frame is not orthonormal (Gram deviation {dev:.3g})")
        for arr in (origin, tangent, normal):
            arr.flags.writeable = False
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "tangent_basis", tangent)
        object.__setattr__(self, "normal_basis", normal)

    @classmethod
    def from_tangent(cls, origin, tangent, normal=None) -> "TangentFrame":
        """Build a frame, completing a missing normal basis deterministically."""
        origin = np.asarray(origin, dtype=float).reshape(-1)
        tangent = _as_rows(tangent, origin.size)
        if normal is None:
            normal = complete_basis(tangent, origin.size)
        return cls(origin, tangent, normal)

    @property
    def ambient_dim(self) -> int:
        return self.origin.size

    @property
    def dim(self) -> int:
        return self.tangent_basis.shape[0]

    def coordinates(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Tangent and normal coordinates of ``X`` relative to the frame."""
        d = np.asarray(X, dtype=float) - self.origin
        return d @ self.tangent_basis.T, d @ self.normal_basis.T

    def to_ambient(self, tangent_coords, normal_coords) -> np.ndarray:
        t = np.asarray(tangent_coords, dtype=float)
        nrm = np.asarray(normal_coords, dtype=float)
        return self.origin + t @ self.tangent_basis + nrm @ self.normal_basis


def split_components(frame: TangentFrame, X) -> tuple:
    """Squared tangent norm ``A`` and squared normal norm ``B`` of X - origin."""
    t, nrm = frame.coordinates(X)
    A = np.sum(t * t, axis=-1)
    B = np.sum(nrm * nrm, axis=-1)
    if np.ndim(A) == 0:
        return float(A), float(B)
    return A, B


def depth_root(A, B, tau):
    """Positive root ``q`` of ``A/(tau q + q^2) + B/q^2 = 1``.

    Equivalently the positive root of ``q^3 + tau q^2 - (A+B) q - tau B``.
    Vectorised over ``A``, ``B`` and ``tau``.  For infinite ``tau`` the tangent term
    vanishes and ``q = sqrt(B)``.

    Raises
    ------
    DegenerateInputError
        If ``A`` and ``B`` are both zero somewhere.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    T = np.asarray(tau, dtype=float)
    scalar = A.ndim == 0 and B.ndim == 0 and T.ndim == 0
    A, B, T = np.broadcast_arrays(np.atleast_1d(A), np.atleast_1d(B), np.atleast_1d(T))
    if np.any((A == 0) & (B == 0)):
        raise DegenerateInputError("depth is undefined for A = B = 0")
    if np.any(A < 0) or np.any(B < 0):
        raise ValueError("A and B must be non-negative")
    if not np.all(T > 0):
        raise ValueError("tau must be positive")

    with np.errstate(divide="ignore", invalid="ignore"):
        # closed forms on the coordinate axes
        q_tangent = np.where(np.isinf(T), 0.0, 2.0 * A / (np.sqrt(T * T + 4.0 * A) + T))
        q = np.where((A == 0) | np.isinf(T), np.sqrt(B), q_tangent)
        both = (A > 0) & (B > 0) & np.isfinite(T)
        if np.any(both):
            a, b, t = A[both], B[both], T[both]
            s = a + b
            # sqrt(A+B) bounds the root from above and lies right of the
            # cubic's positive critical point, so Newton descends monotonically
            x = np.sqrt(s)
            for _ in range(100):
                f = ((x + t) * x - s) * x - t * b
                df = (3.0 * x + 2.0 * t) * x - s
                step = f / df
                x_new = x - step
                done = ~(x_new < x)
                x = np.where(done, x, x_new)
                if np.all(done | (np.abs(step) <= 1e-16 * x)):
                    break
            q[both] = x
    return float(q[0]) if scalar else q


def depth_residual(A, B, tau, q):
    """``A/(tau q + q^2) + B/q^2 - 1``; zero at the depth root."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    q = np.asarray(q, dtype=float)
    return A / (tau * q + q * q) + B / (q * q) - 1.0


def pep(frame: TangentFrame, tau, X):
    """Depth parameter of ``X`` relative to the frame's origin.

    The unique ``q`` with ``X`` on the boundary of the closed ``q``-ellipsoid
    at the origin; zero at the origin itself.  For infinite reach this is the
    normal distance.
    """
    A, B = split_components(frame, X)
    scalar = np.ndim(A) == 0
    A = np.atleast_1d(A)
    B = np.atleast_1d(B)
    q = np.zeros_like(A)
    nz = (A > 0) | (B > 0)
    if np.any(nz):
        q[nz] = depth_root(A[nz], B[nz], tau)
    return float(q[0]) if scalar else q


def cone_distance_bound(y_tangent, y_normal, tau):
    """Upper bound ``sqrt(yT^2 + (yN + tau)^2) - tau`` on manifold distance."""
    yT = np.asarray(y_tangent, dtype=float)
    yN = np.asarray(y_normal, dtype=float)
    # hypot(yT, yN + tau) - tau, rearranged to avoid cancellation
    num = yT * yT + yN * yN + 2.0 * tau * yN
    out = num / (np.hypot(yT, yN + tau) + tau)
    return float(out) if out.ndim == 0 else out


def ellipse_point(q, chi, tau=1.0, from_normal=False):
    """Planar (tangent, normal) coordinates of a point on the q-ellipse.

    ``from_normal=False`` gives ``(sqrt(tau q + q^2) cos chi, -q sin chi)``,
    the fourth-quadrant parametrisation used by the certifier; with
    ``from_normal=True`` the angle is measured from the normal axis:
    ``(sqrt(tau q + q^2) sin chi, q cos chi)``.
    """
    a = math.sqrt(tau * q + q * q)
    if from_normal:
        return np.array([a * math.sin(chi), q * math.cos(chi)])
    return np.array([a * math.cos(chi), -q * math.sin(chi)])


class Membership(enum.Enum):
    INSIDE = "inside"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """Tangent-normal ellipsoid of persistence parameter ``p`` at a frame.

    Tangent semi-axes ``sqrt(tau p + p^2)``, normal semi-axes ``p``.  With
    infinite reach it degenerates to the slab ``{normal distance < p}``.
    """

    frame: TangentFrame
    p: float
    tau: float

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError(f"persistence parameter must be positive, got {self.p}")
        if not self.tau > 0:
            raise ValueError(f"reach must be positive, got {self.tau}")

    @property
    def center(self) -> np.ndarray:
        return self.frame.origin

    @property
    def tangent_semi_axis(self) -> float:
        return math.sqrt(self.tau * self.p + self.p**2)

    @property
    def normal_semi_axis(self) -> float:
        return float(self.p)

    def quadratic_form(self, X):
        """Value of the defining quadratic form; < 1 inside, 1 on the boundary."""
        A, B = split_components(self.frame, X)
        if math.isinf(self.tau):
            return B / self.p**2
        return A / (self.tau * self.p + self.p**2) + B / self.p**2

    def contains(self, X):
        """Membership in the open ellipsoid."""
        return self.quadratic_form(X) < 1.0

    def membership(self, X, tol: float = BOUNDARY_TOL) -> Membership:
        """Classify a single point as inside, on the boundary, or outside."""
        if tol < 0:
            raise ValueError("tol must be non-negative")
        val = self.quadratic_form(X)
        if val < 1.0 - tol:
            return Membership.INSIDE
        if val > 1.0 + tol:
            return Membership.OUTSIDE
        return Membership.BOUNDARY

    def depth(self, X):
        """Depth parameter of ``X`` relative to this ellipsoid's centre."""
        return pep(self.frame, self.tau, X)

    def outward_normal(self, X) -> np.ndarray:
        """Unit normal at ``X`` of the level ellipsoid through ``X``, pointing out.

        The level sets of the depth parameter are the ellipsoids
        ``E_q``; the outward normal of ``E_q`` at ``X`` is the normalised
        gradient of ``A/(tau q + q^2) + B/q^2`` with ``q`` frozen.
        """
        q = self.depth(X)
        if q == 0:
            raise DegenerateInputError("normal undefined at the ellipsoid centre")
        t, nrm = self.frame.coordinates(X)
        if math.isinf(self.tau):
            g = nrm @ self.frame.normal_basis
        else:
            g = (t / (self.tau * q + q * q)) @ self.frame.tangent_basis + (
                nrm / (q * q)
            ) @ self.frame.normal_basis
        return g / np.linalg.norm(g)
