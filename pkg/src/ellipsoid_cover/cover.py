"""Union of tangent-normal ellipsoids around sample points."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Ellipsoid, TangentFrame


@dataclass(frozen=True, eq=False)
class EllipsoidCover:
    """Ellipsoids ``E_p(S)`` for every sample frame ``S``.

    Quadratic forms against all ellipsoids are evaluated in one vectorised
    pass; ``forms(X)[i] < 1`` means ``X`` lies in the i-th open ellipsoid.
    """

    tau: float
    p: float
    frames: tuple
    kappa: float = math.nan
    _centers: np.ndarray = field(init=False, repr=False)
    _tangent: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("a cover needs at least one sample")
        if not self.p > 0:
            raise ValueError("p must be positive")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "_centers", np.array([f.origin for f in frames]))
        object.__setattr__(self, "_tangent", np.array([f.tangent_basis for f in frames]))

    def __len__(self):
        return len(self.frames)

    @classmethod
    def from_sample(cls, sample, p: float) -> "EllipsoidCover":
        return cls(tau=sample.tau, p=p, frames=tuple(sample.frames()), kappa=sample.kappa)

    @property
    def centers(self) -> np.ndarray:
        return self._centers

    @property
    def ambient_dim(self) -> int:
        return self._centers.shape[1]

    @property
    def dim(self) -> int:
        return self._tangent.shape[1]

    @property
    def tangent_semi_axis(self) -> float:
        return math.sqrt(self.tau * self.p + self.p**2)

    def ellipsoid(self, i: int) -> Ellipsoid:
        return Ellipsoid(self.frames[i], self.p, self.tau)

    def ellipsoids(self):
        return [self.ellipsoid(i) for i in range(len(self))]

    def components(self, X):
        """Squared tangent and normal norms of ``X`` relative to every centre.

        For ``X`` of shape ``(n,)`` returns two arrays of shape ``(N,)``; for
        ``(k, n)`` arrays of shape ``(k, N)``.
        """
        X = np.asarray(X, dtype=float)
        d = X[..., None, :] - self._centers
        t = np.einsum("...ij,imj->...im", d, self._tangent)
        A = np.sum(t * t, axis=-1)
        B = np.maximum(np.sum(d * d, axis=-1) - A, 0.0)
        return A, B

    def forms(self, X):
        A, B = self.components(X)
        if math.isinf(self.tau):
            return B / self.p**2
        return A / (self.tau * self.p + self.p**2) + B / self.p**2

    def membership_counts(self, X):
        """Number of open ellipsoids containing each point."""
        return np.sum(self.forms(X) < 1.0, axis=-1)

    def contains(self, X):
        """Membership in the open union."""
        return np.any(self.forms(X) < 1.0, axis=-1)

    def bounding_box(self, pad: float = 0.0):
        """Axis-aligned box enclosing every ellipsoid."""
        r = max(self.tangent_semi_axis, self.p) + pad
        return self._centers.min(axis=0) - r, self._centers.max(axis=0) + r
