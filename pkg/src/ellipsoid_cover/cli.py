"""Command line interface: ``python -m ellipsoid_cover <command> ...``.

Exit status is 0 on success, 1 when the computation hits a domain error
(bad parameters, failed certificate preconditions, flow leaving the union)
and 2 for usage errors, including malformed input files.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import EllipsoidCoverError, FormatError


def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _emit(pairs):
    for key, val in pairs:
        if isinstance(val, (list, tuple)):
            val = "[" + ", ".join(fmt(v) for v in val) + "]"
        else:
            val = fmt(val)
        print(f"{key}={val}")


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh)
        fh.write("\n")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from exc


def _load_cover(path, p):
    from .cover import EllipsoidCover
    from .sampling import SampleFile

    data = _read_json(path)
    sample = SampleFile.from_dict(data)
    if p is None:
        p = data.get("p") if isinstance(data, dict) else None
        if p is None:
            raise FormatError(f"{path}: no 'p' field; pass --p")
    return sample, EllipsoidCover.from_sample(sample, float(p))


# -- subcommands ---------------------------------------------------------------


def cmd_sample(args):
    from .manifolds import parse_model
    from .sampling import generate_sample

    model = parse_model(args.model)
    sample = generate_sample(model, args.kappa, grid_spacing=args.grid_spacing, seed=args.seed)
    sample.save(args.out)
    _emit([("points", len(sample)), ("kappa", sample.kappa), ("tau", sample.tau)])


def cmd_bounds(args):
    from .bounds import density_report

    rep = density_report(args.kappa, args.tau, args.p, m_p=args.mp, M_p=args.Mp, kappa_off=args.kappa_off)
    _emit(
        [
            ("density_ok", rep.density_ok),
            ("lambda", rep.lambda_),
            ("window", rep.p_window),
            ("coverage_radius_at_Mp", rep.coverage_radius_at_Mp),
        ]
    )


def cmd_certify(args):
    from .certifier import CertifierParams, grid_certify

    params = CertifierParams(delta=args.delta, m_p=args.mp, M_p=args.Mp, kappa_off=args.kappa_off)
    rep = grid_certify(params, workers=args.workers, checkpoint=args.resume)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(rep.to_json() + "\n")
    _emit(
        [
            ("min_v", rep.min_v),
            ("argmin", rep.argmin.astuple()),
            ("L", rep.L),
            ("points_evaluated", rep.points_evaluated),
            ("certified", rep.certified),
        ]
    )


def cmd_nerve(args):
    from .nerve import betti_numbers, build_nerve

    _, cover = _load_cover(args.cover, args.p)
    # Betti numbers are reported below the top dimension only, where every
    # boundary map they need has been computed
    top = max(cover.dim + 1, 3) if args.max_dim is None else args.max_dim
    cx = build_nerve(cover, max_dim=top, deadline=args.deadline)
    betti = betti_numbers(cx, top - 1)
    if args.out:
        _write_json(args.out, cx.to_dict(betti))
    _emit([("simplices", [cx.count(k) for k in range(cx.max_dim + 1)]), ("betti", betti)])
    for w in cx.warnings:
        print(f"warning: {w}", file=sys.stderr)


def _starts(path):
    data = _read_json(path)
    if isinstance(data, dict):
        if "points" not in data:
            raise FormatError(f"{path}: expected a list of points or an object with 'points'")
        data = data["points"]
    try:
        pts = np.array(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: points must be lists of numbers") from exc
    if pts.ndim != 2:
        raise FormatError(f"{path}: points must all have the same length")
    return pts


def cmd_retract(args):
    from .manifolds import parse_model
    from .retraction import RetractionConfig, retract, trace_flow

    _, cover = _load_cover(args.cover, args.p)
    model = parse_model(args.model)
    starts = _starts(args.starts)
    if starts.shape[1] != cover.ambient_dim:
        raise FormatError(f"start points have dimension {starts.shape[1]}, cover has {cover.ambient_dim}")
    if not 0 <= args.t <= 1:
        raise EllipsoidCoverError("--t must lie in [0, 1]")
    cfg = RetractionConfig.build(cover, model, set_grid_h=args.grid_h, rk_step=args.rk_step)
    tau = cover.tau
    traces = []
    worst = 0.0
    for x in starts:
        d = model.distance(x)
        u = min(max(d - cfg.w, 0.0), min(2 * args.t, 1.0) * tau)
        tr = trace_flow(cfg, x, u)
        recs = [
            {"t": float(s / (2 * tau)), "x": y.tolist(), "d": float(dd)}
            for s, y, dd in zip(tr.times, tr.positions, tr.distances)
        ]
        worst = max(worst, float(np.max(np.abs(tr.distances - (d - tr.times)))))
        if args.t > 0.5:
            y = retract(cfg, x, args.t)
            recs.append({"t": float(args.t), "x": y.tolist(), "d": float(model.distance(y))})
        traces.append(recs)
    _write_json(args.out, traces)
    _emit(
        [
            ("trajectories", len(traces)),
            ("w", cfg.w),
            ("max_distance_law_error", worst),
        ]
    )


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    from .certifier import KAPPA_OFF, M_P_HIGH, M_P_LOW

    ap = argparse.ArgumentParser(prog="ellipsoid-cover", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sample", help="farthest-point sample of an analytic manifold")
    sp.add_argument("--model", required=True, help="circle:R, sphere:R[,n], torus:R,r")
    sp.add_argument("--kappa", type=float, required=True, help="target Hausdorff density")
    sp.add_argument("--grid-spacing", type=float, default=None)
    sp.add_argument("--seed", type=int, default=None, help="picks the first grid point")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("bounds", help="persistence window and density check")
    sp.add_argument("--kappa", type=float, required=True)
    sp.add_argument("--tau", type=float, required=True)
    sp.add_argument("--p", type=float, default=None)
    sp.add_argument("--mp", type=float, default=M_P_LOW)
    sp.add_argument("--Mp", type=float, default=M_P_HIGH)
    sp.add_argument("--kappa-off", type=float, default=KAPPA_OFF)
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("certify", help="lattice scan of the two-ellipse configuration space")
    sp.add_argument("--delta", type=float, required=True)
    sp.add_argument("--mp", type=float, default=M_P_LOW)
    sp.add_argument("--Mp", type=float, default=M_P_HIGH)
    sp.add_argument("--kappa-off", type=float, default=KAPPA_OFF)
    sp.add_argument("--resume", default=None, help="checkpoint file, created if missing")
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("nerve", help="nerve complex and mod-2 Betti numbers")
    sp.add_argument("--cover", required=True, help="sample file, optionally with a 'p' field")
    sp.add_argument("--p", type=float, default=None)
    sp.add_argument("--max-dim", type=int, default=None,
                    help="top simplex dimension (default max(m+1, 3)); Betti numbers go to max-dim - 1")
    sp.add_argument("--deadline", type=float, default=None, help="seconds")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_nerve)

    sp = sub.add_parser("retract", help="integrate the retraction flow from start points")
    sp.add_argument("--cover", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--p", type=float, default=None)
    sp.add_argument("--starts", required=True, help="JSON list of points")
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--rk-step", type=float, default=None)
    sp.add_argument("--grid-h", type=float, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_retract)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        args.func(args)
    except FormatError as exc:
        print(f"{ap.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (EllipsoidCoverError, ValueError) as exc:
        print(f"{ap.prog} {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
