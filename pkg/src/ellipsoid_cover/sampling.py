"""Synthetic samples of analytic manifolds and the sample file format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ResolutionError
from .geometry import TangentFrame, complete_basis
from .manifolds import AnalyticManifold, parse_model

#: Largest parametric grid generate_sample will build.
MAX_GRID_POINTS = 4_000_000


@dataclass(frozen=True, eq=False)
class SampleFile:
    """Sample points with tangent (and optionally normal) bases.

    ``points`` has shape ``(N, n)``, ``tangents`` ``(N, m, n)`` and
    ``normals`` either ``None`` or ``(N, n - m, n)``.
    """

    tau: float
    kappa: float
    points: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray | None = None
    model: str | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or len(pts) == 0:
            raise FormatError("points must be a non-empty (N, n) array")
        n = pts.shape[1]
        tan = np.array(self.tangents, dtype=float).reshape(len(pts), -1, n)
        if not self.kappa >= 0:
            raise FormatError("kappa must be non-negative")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "tangents", tan)
        if self.normals is not None:
            nrm = np.array(self.normals, dtype=float).reshape(len(pts), n - tan.shape[1], n)
            object.__setattr__(self, "normals", nrm)
        # validates orthonormality
        self.frames()

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    @property
    def manifold_dim(self) -> int:
        return self.tangents.shape[1]

    def __len__(self):
        return len(self.points)

    def frames(self):
        out = []
        for i, x in enumerate(self.points):
            if self.normals is None:
                nrm = complete_basis(self.tangents[i], self.ambient_dim)
            else:
                nrm = self.normals[i]
            out.append(TangentFrame(x, self.tangents[i], nrm))
        return out

    def manifold(self) -> AnalyticManifold | None:
        return parse_model(self.model) if self.model else None

    def to_dict(self) -> dict:
        pts = []
        for i, x in enumerate(self.points):
            rec = {"x": x.tolist(), "tangent": self.tangents[i].tolist()}
            if self.normals is not None:
                rec["normal"] = self.normals[i].tolist()
            pts.append(rec)
        d = {
            "ambient_dim": self.ambient_dim,
            "manifold_dim": self.manifold_dim,
            "tau": "inf" if math.isinf(self.tau) else self.tau,
            "kappa": self.kappa,
            "points": pts,
        }
        if self.model:
            d["model"] = self.model
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SampleFile":
        def need(obj, key, where):
            if not isinstance(obj, dict) or key not in obj:
                raise FormatError(f"missing field {where}{key!r}")
            return obj[key]

        n = int(need(d, "ambient_dim", ""))
        m = int(need(d, "manifold_dim", ""))
        tau = need(d, "tau", "")
        tau = math.inf if tau in ("inf", "Infinity") else float(tau)
        kappa = float(need(d, "kappa", ""))
        recs = need(d, "points", "")
        if not isinstance(recs, list) or not recs:
            raise FormatError("field 'points' must be a non-empty list")
        pts, tans, nrms = [], [], []
        for i, r in enumerate(recs):
            x = np.asarray(need(r, "x", f"points[{i}]."), dtype=float)
            t = np.asarray(need(r, "tangent", f"points[{i}]."), dtype=float).reshape(m, -1)
            if x.shape != (n,) or t.shape[1] != n:
                raise FormatError(f"points[{i}]: expected x of length {n} and a {m}x{n} tangent")
            pts.append(x)
            tans.append(t)
            if "normal" in r:
                nrms.append(np.asarray(r["normal"], dtype=float).reshape(n - m, n))
        if nrms and len(nrms) != len(pts):
            raise FormatError("either every point or no point carries a normal basis")
        return cls(
            tau=tau,
            kappa=kappa,
            points=np.array(pts),
            tangents=np.array(tans).reshape(len(pts), m, n),
            normals=np.array(nrms) if nrms else None,
            model=d.get("model"),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SampleFile":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(data)


def farthest_point_order(points: np.ndarray, start: int = 0, stop_radius: float = 0.0):
    """Greedy farthest-point subsampling.

    Adds points until every input point is within ``stop_radius`` of the
    selection.  Returns the selected indices and the final covering radius
    of the selection over ``points``.
    """
    points = np.asarray(points, dtype=float)
    chosen = [int(start)]
    dist = np.linalg.norm(points - points[start], axis=1)
    while True:
        far = int(np.argmax(dist))
        radius = float(dist[far])
        if radius <= stop_radius:
            return np.array(chosen), radius
        chosen.append(far)
        np.minimum(dist, np.linalg.norm(points - points[far], axis=1), out=dist)


def generate_sample(
    model: AnalyticManifold,
    target_kappa: float,
    *,
    grid_spacing: float | None = None,
    seed: int | None = None,
) -> SampleFile:
    """Sample ``model`` with Hausdorff distance at most ``target_kappa``.

    Farthest-point subsampling of a parametric grid.  The emitted ``kappa``
    is the grid covering radius plus the grid's fill radius, an upper bound
    on the distance from any manifold point to the sample.  ``seed`` picks
    the starting grid point (index 0 when omitted).
    """
    if not target_kappa > 0:
        raise ValueError("target_kappa must be positive")
    h = target_kappa / 4 if grid_spacing is None else float(grid_spacing)
    fill = model.grid_fill_radius(h)
    if fill >= target_kappa:
        raise ResolutionError(
            f"grid spacing {h} has fill radius {fill:.3g} >= target kappa {target_kappa};"
            f" use grid_spacing <= {target_kappa / 4:.3g}"
        )
    size = model.grid_size(h)
    if size > MAX_GRID_POINTS:
        raise ResolutionError(
            f"target kappa {target_kappa} needs a grid of {size} points"
            f" (limit {MAX_GRID_POINTS}); raise grid_spacing towards {target_kappa / 2:.3g}"
        )
    grid = model.grid(h)
    start = 0 if seed is None else int(np.random.default_rng(seed).integers(len(grid)))
    idx, radius = farthest_point_order(grid, start, target_kappa - fill)
    pts = grid[idx]
    frames = [model.frame_at(x) for x in pts]
    return SampleFile(
        tau=model.reach,
        kappa=radius + fill,
        points=pts,
        tangents=np.array([f.tangent_basis for f in frames]),
        normals=np.array([f.normal_basis for f in frames]),
        model=model.spec,
    )
