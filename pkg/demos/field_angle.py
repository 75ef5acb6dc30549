"""Where the glued field leans away from the closest-point direction.

For a regular hexagon sample of the unit circle at p = 0.7 (a cover that
passes the density check), scan random points of the union and report the
smallest ratio <W, prv> / |prv|^2 and the largest speed |V|.

Run:  python demos/field_angle.py
"""
import math

import numpy as np

from ellipsoid_cover import EllipsoidCover, density_check
from ellipsoid_cover.manifolds import Circle
from ellipsoid_cover.retraction import RetractionConfig, field_batch

model = Circle(1.0)
angles = 2 * np.pi * np.arange(6) / 6
frames = tuple(model.frame_at(model.point(a)) for a in angles)
kappa = 2 * math.sin(math.pi / 12)
cover = EllipsoidCover(tau=1.0, p=0.7, frames=frames, kappa=kappa)
print(f"kappa = {kappa:.4f}, density check at p = 0.7: {density_check(kappa, 1.0, 0.7)}")

cfg = RetractionConfig.build(cover, model, set_grid_h=0.01)
rng = np.random.default_rng(0)
X = rng.uniform(-1.9, 1.9, (400_000, 2))
X = X[cover.contains(X) & (model.distance(X) > 0)][:100_000]
res = field_batch(cfg, X)
ratio = np.einsum("ij,ij->i", res.W, res.prv) / np.einsum("ij,ij->i", res.prv, res.prv)
speed = np.linalg.norm(res.V, axis=1)
i = int(np.argmin(ratio))
print(f"min <W,prv>/|prv|^2 = {ratio[i]:.4f} at {X[i]} (distance {model.distance(X[i]):.4f})")
print(f"points below 2/3: {int(np.sum(ratio < 2 / 3))} of {len(X)}; max |V| = {speed.max():.3f}")
