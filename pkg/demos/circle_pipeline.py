"""Sample a circle, check the density bound, build the nerve and retract.

Run:  python demos/circle_pipeline.py
"""
import numpy as np

from ellipsoid_cover import EllipsoidCover, build_nerve, betti_numbers, density_report, generate_sample
from ellipsoid_cover.manifolds import Circle
from ellipsoid_cover.retraction import RetractionConfig, retract, trace_flow

model = Circle(1.0)
sample = generate_sample(model, 0.3)
p = 0.7
rep = density_report(sample.kappa, model.reach, p)
print(f"{len(sample)} samples, kappa = {sample.kappa:.4f}, lambda = {rep.lambda_:.4f}, density ok: {rep.density_ok}")

cover = EllipsoidCover.from_sample(sample, p)
cx = build_nerve(cover, max_dim=3)
print("simplices per dimension:", [cx.count(k) for k in range(cx.max_dim + 1)])
print("betti numbers:", betti_numbers(cx, 2))

cfg = RetractionConfig.build(cover, model)
start = np.array([0.3, 1.4])
tr = trace_flow(cfg, start, 0.3)
for t, x, d in list(zip(tr.times, tr.positions, tr.distances))[::50]:
    print(f"t = {t:.3f}  x = ({x[0]:+.5f}, {x[1]:+.5f})  d = {d:.5f}")
end = retract(cfg, start, 1.0)
print("retract(x, 1) =", end, "on the circle:", bool(model.residual(end) < 1e-12))
