"""Analytic manifold models with exact reach, projection and frames.

Each model knows its closest-point map, so the quantities that are only
abstract for a general manifold (distance, projection, normal spaces) are
available exactly here.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import MedialAxisError
from .geometry import INFINITE_REACH, TangentFrame, complete_basis

_MEDIAL_TOL = 1e-9


class AnalyticManifold:
    """Base class; subclasses implement the closest-point map and frames."""

    kind: str = ""
    ambient_dim: int
    dim: int
    reach: float

    def project(self, X):
        """Closest point ``pr(X)`` and the vector ``prv(X) = pr(X) - X``.

        Accepts a single point ``(n,)`` or a stack ``(k, n)``.
        """
        X = np.asarray(X, dtype=float)
        pr = self._project(np.atleast_2d(X))
        pr = pr.reshape(X.shape)
        return pr, pr - X

    def distance(self, X):
        _, prv = self.project(X)
        d = np.linalg.norm(prv, axis=-1)
        return float(d) if np.ndim(d) == 0 else d

    def residual(self, Y):
        """How far ``Y`` is from satisfying the manifold's defining equations."""
        raise NotImplementedError

    def frame_at(self, Y) -> TangentFrame:
        raise NotImplementedError

    def grid(self, spacing: float) -> np.ndarray:
        """Dense parametric grid of manifold points with roughly the given spacing."""
        raise NotImplementedError

    def grid_size(self, spacing: float) -> int:
        """Number of points ``grid(spacing)`` would return, without building it."""
        raise NotImplementedError

    def grid_fill_radius(self, spacing: float) -> float:
        """Upper bound on the distance from any manifold point to ``grid(spacing)``."""
        raise NotImplementedError

    def _project(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def spec(self) -> str:
        """Compact ``kind:args`` string accepted by :func:`parse_model`."""
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.spec!r})"


class Circle(AnalyticManifold):
    """Circle of radius ``R`` about the origin of R^2."""

    kind = "circle"

    def __init__(self, radius: float = 1.0):
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.ambient_dim = 2
        self.dim = 1
        self.reach = self.radius

    @property
    def spec(self):
        return f"circle:{self.radius!r}"

    def _project(self, X):
        r = np.linalg.norm(X, axis=1)
        if np.any(r < _MEDIAL_TOL):
            raise MedialAxisError("projection onto a circle is undefined at its centre")
        return X * (self.radius / r)[:, None]

    def residual(self, Y):
        return np.abs(np.linalg.norm(Y, axis=-1) - self.radius)

    def frame_at(self, Y):
        Y = np.asarray(Y, dtype=float)
        u = Y / np.linalg.norm(Y)
        return TangentFrame(Y, [[-u[1], u[0]]], [u])

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def grid(self, spacing):
        return self.point(2 * math.pi * np.arange(self._grid_count(spacing)) / self._grid_count(spacing))

    def _grid_count(self, spacing):
        return max(8, int(math.ceil(2 * math.pi * self.radius / spacing)))

    def grid_size(self, spacing):
        return self._grid_count(spacing)

    def grid_fill_radius(self, spacing):
        # chord to the midpoint of an arc between neighbours
        return 2 * self.radius * math.sin(math.pi / (2 * self._grid_count(spacing)))


class Sphere(AnalyticManifold):
    """Round (n-1)-sphere of radius ``R`` about the origin of R^n."""

    kind = "sphere"

    def __init__(self, radius: float = 1.0, ambient_dim: int = 3):
        if not radius > 0:
            raise ValueError("radius must be positive")
        if ambient_dim < 2:
            raise ValueError("ambient dimension must be at least 2")
        self.radius = float(radius)
        self.ambient_dim = int(ambient_dim)
        self.dim = self.ambient_dim - 1
        self.reach = self.radius

    @property
    def spec(self):
        if self.ambient_dim == 3:
            return f"sphere:{self.radius!r}"
        return f"sphere:{self.radius!r},{self.ambient_dim}"

    def _project(self, X):
        r = np.linalg.norm(X, axis=1)
        if np.any(r < _MEDIAL_TOL):
            raise MedialAxisError("projection onto a sphere is undefined at its centre")
        return X * (self.radius / r)[:, None]

    def residual(self, Y):
        return np.abs(np.linalg.norm(Y, axis=-1) - self.radius)

    def frame_at(self, Y):
        Y = np.asarray(Y, dtype=float)
        u = Y / np.linalg.norm(Y)
        return TangentFrame(Y, complete_basis(u[None, :], self.ambient_dim), [u])

    def grid(self, spacing):
        if self.ambient_dim != 3:
            raise NotImplementedError("parametric grids are only provided for the 2-sphere")
        # Fibonacci lattice: near-uniform, spacing ~ sqrt(4 pi R^2 / k)
        k = self.grid_size(spacing)
        i = np.arange(k) + 0.5
        z = 1 - 2 * i / k
        phi = math.pi * (1 + math.sqrt(5)) * i
        rho = np.sqrt(1 - z * z)
        return self.radius * np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)

    def grid_size(self, spacing):
        return max(20, int(math.ceil(4 * math.pi * self.radius**2 / spacing**2)))

    def grid_fill_radius(self, spacing):
        # the Fibonacci lattice has no closed-form fill radius; measured values
        # stay near 0.75 of the nominal spacing, so the full spacing is used
        k = self.grid_size(spacing)
        return self.radius * math.sqrt(4 * math.pi / k)


class Torus(AnalyticManifold):
    """Torus of revolution in R^3, core radius ``R`` and tube radius ``r``.

    Restricted to ``R > 2r`` so that the reach is exactly ``r``.
    """

    kind = "torus"

    def __init__(self, major: float = 2.0, minor: float = 0.5):
        if not (minor > 0 and major > 2 * minor):
            raise ValueError("torus requires major > 2 * minor > 0")
        self.major = float(major)
        self.minor = float(minor)
        self.ambient_dim = 3
        self.dim = 2
        self.reach = self.minor

    @property
    def spec(self):
        return f"torus:{self.major!r},{self.minor!r}"

    def _core_point(self, X):
        rho = np.hypot(X[:, 0], X[:, 1])
        if np.any(rho < _MEDIAL_TOL):
            raise MedialAxisError("projection onto a torus is undefined on its axis")
        c = np.zeros_like(X)
        c[:, 0] = self.major * X[:, 0] / rho
        c[:, 1] = self.major * X[:, 1] / rho
        return c

    def _project(self, X):
        c = self._core_point(X)
        d = X - c
        dn = np.linalg.norm(d, axis=1)
        if np.any(dn < _MEDIAL_TOL):
            raise MedialAxisError("projection onto a torus is undefined on its core circle")
        return c + d * (self.minor / dn)[:, None]

    def residual(self, Y):
        Y = np.asarray(Y, dtype=float)
        rho = np.hypot(Y[..., 0], Y[..., 1])
        return np.abs(np.hypot(rho - self.major, Y[..., 2]) - self.minor)

    def point(self, theta, phi):
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        w = self.major + self.minor * np.cos(phi)
        return np.stack([w * np.cos(theta), w * np.sin(theta), self.minor * np.sin(phi)], axis=-1)

    def angles(self, Y):
        Y = np.asarray(Y, dtype=float)
        theta = np.arctan2(Y[..., 1], Y[..., 0])
        phi = np.arctan2(Y[..., 2], np.hypot(Y[..., 0], Y[..., 1]) - self.major)
        return theta, phi

    def frame_at(self, Y):
        Y = np.asarray(Y, dtype=float)
        theta, phi = self.angles(Y)
        ct, st, cp, sp = math.cos(theta), math.sin(theta), math.cos(phi), math.sin(phi)
        e_theta = [-st, ct, 0.0]
        e_phi = [-sp * ct, -sp * st, cp]
        normal = [cp * ct, cp * st, sp]
        return TangentFrame(Y, [e_theta, e_phi], [normal])

    def _grid_counts(self, spacing):
        k_theta = max(8, int(math.ceil(2 * math.pi * (self.major + self.minor) / spacing)))
        k_phi = max(8, int(math.ceil(2 * math.pi * self.minor / spacing)))
        return k_theta, k_phi

    def grid_size(self, spacing):
        k_theta, k_phi = self._grid_counts(spacing)
        return k_theta * k_phi

    def grid_fill_radius(self, spacing):
        # half the diagonal of a parameter cell, measured in arc length
        k_theta, k_phi = self._grid_counts(spacing)
        dt = 2 * math.pi * (self.major + self.minor) / k_theta
        dp = 2 * math.pi * self.minor / k_phi
        return 0.5 * math.hypot(dt, dp)

    def grid(self, spacing):
        k_theta, k_phi = self._grid_counts(spacing)
        th, ph = np.meshgrid(
            2 * math.pi * np.arange(k_theta) / k_theta,
            2 * math.pi * np.arange(k_phi) / k_phi,
            indexing="ij",
        )
        return self.point(th.ravel(), ph.ravel())


class AffineSubspace(AnalyticManifold):
    """Span of the first ``m`` coordinate axes of R^n (infinite reach)."""

    kind = "affine"

    def __init__(self, dim: int, ambient_dim: int):
        if not 0 <= dim <= ambient_dim:
            raise ValueError("need 0 <= dim <= ambient_dim")
        self.dim = int(dim)
        self.ambient_dim = int(ambient_dim)
        self.reach = INFINITE_REACH

    @property
    def spec(self):
        return f"affine:{self.dim},{self.ambient_dim}"

    def _project(self, X):
        pr = X.copy()
        pr[:, self.dim:] = 0.0
        return pr

    def residual(self, Y):
        Y = np.asarray(Y, dtype=float)
        return np.linalg.norm(Y[..., self.dim:], axis=-1)

    def frame_at(self, Y):
        eye = np.eye(self.ambient_dim)
        return TangentFrame(Y, eye[: self.dim], eye[self.dim:])

    def grid(self, spacing):
        raise NotImplementedError("an affine subspace is not compact")


def parse_model(text: str) -> AnalyticManifold:
    """Parse ``circle:R``, ``sphere:R[,n]``, ``torus:R,r`` or ``affine:m,n``."""
    kind, _, args = text.partition(":")
    vals = [float(v) for v in args.split(",") if v.strip()] if args else []
    kind = kind.strip().lower()
    if kind == "circle":
        return Circle(*vals)
    if kind == "sphere":
        if len(vals) == 2:
            return Sphere(vals[0], int(vals[1]))
        return Sphere(*vals)
    if kind == "torus":
        return Torus(*vals)
    if kind == "affine":
        if len(vals) != 2:
            raise ValueError("affine model needs 'affine:m,n'")
        return AffineSubspace(int(vals[0]), int(vals[1]))
    raise ValueError(f"unknown manifold kind {kind!r}")
