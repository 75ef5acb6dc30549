"""Nerve of an ellipsoid cover and its mod-2 homology.

k-wise intersection is decided by cyclic alternating projection onto the
closed ellipsoids.  Candidate simplices are generated level by level from
the simplices already accepted (a k-set is tried only when all of its
(k-1)-faces are present), so the result is downward closed.  Betti numbers
come from ranks of the coboundary matrices over Z/2, reduced with the
clearing optimisation.
"""
from __future__ import annotations

import math
import time
import warnings as _warnings
from dataclasses import dataclass, field
from itertools import combinations

import numba
import numpy as np
from scipy.spatial import cKDTree

from .cover import EllipsoidCover
from .errors import BudgetExceededError
from .geometry import Ellipsoid

# the sandboxed TBB is too old for numba; it falls back to another layer
_warnings.filterwarnings("ignore", message="The TBB threading layer", category=numba.NumbaWarning)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITERS = 10_000

WITNESS, DISJOINT, INCONCLUSIVE = 0, 1, 2


@dataclass(frozen=True)
class Witness:
    point: np.ndarray
    iterations: int = 0


@dataclass(frozen=True)
class Disjoint:
    gap: float
    iterations: int = 0


@dataclass(frozen=True)
class Inconclusive:
    gap: float
    iterations: int = 0


# -- kernels ---------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _form(x, c, R, s):
    val = 0.0
    for j in range(R.shape[0]):
        y = 0.0
        for l in range(x.shape[0]):
            y += R[j, l] * (x[l] - c[l])
        val += y * y / (s[j] * s[j])
    return val


@numba.njit(cache=True, nogil=True)
def _project(x, c, R, s, out):
    """Closest point of the closed ellipsoid to ``x``, written to ``out``."""
    n = x.shape[0]
    y = np.empty(n)
    val = 0.0
    for j in range(n):
        acc = 0.0
        for l in range(n):
            acc += R[j, l] * (x[l] - c[l])
        y[j] = acc
        val += acc * acc / (s[j] * s[j])
    if val <= 1.0:
        for l in range(n):
            out[l] = x[l]
        return
    # phi(mu) = sum s^2 y^2 / (s^2 + mu)^2 - 1 is convex and decreasing with
    # phi(0) > 0, so Newton from mu = 0 increases monotonically to the root
    mu = 0.0
    for _ in range(200):
        phi = -1.0
        dphi = 0.0
        for j in range(n):
            d = s[j] * s[j] + mu
            t = s[j] * s[j] * y[j] * y[j] / (d * d)
            phi += t
            dphi -= 2.0 * t / d
        step = phi / dphi
        mu_new = mu - step
        if not mu_new > mu:
            break
        mu = mu_new
        if -step <= 1e-16 * (mu + s[n - 1] * s[n - 1]):
            break
    for j in range(n):
        y[j] = y[j] * s[j] * s[j] / (s[j] * s[j] + mu)
    for l in range(n):
        acc = c[l]
        for j in range(n):
            acc += R[j, l] * y[j]
        out[l] = acc


@numba.njit(cache=True, nogil=True)
def _start_point(C, Rs, S):
    """Minimiser of the summed quadratic forms (uniform dual weights)."""
    k, n = C.shape
    A = np.zeros((n, n))
    b = np.zeros(n)
    for i in range(k):
        Q = np.zeros((n, n))
        for j in range(n):
            w = 1.0 / (S[i, j] * S[i, j])
            for a in range(n):
                for bb in range(n):
                    Q[a, bb] += w * Rs[i, j, a] * Rs[i, j, bb]
        A += Q
        b += Q @ C[i]
    return np.linalg.solve(A, b)


@numba.njit(cache=True, nogil=True)
def _separation_bound(C, Rs, S, U):
    """Certified lower bound on ``min_x max_i form_i(x) - 1`` from normals ``U``.

    With ``sum_i U[i] = 0`` the ellipsoids inflated to ``form <= 1 + g`` are
    disjoint whenever ``sum_i <U[i], C[i]> + sqrt(1 + g) sum_i h_i < 0``,
    ``h_i`` being the support function of the centred ellipsoid.  Returns
    the supremum of such ``g`` (negative when ``U`` certifies nothing).
    """
    k, n = C.shape
    lin = 0.0
    spread = 0.0
    for i in range(k):
        h2 = 0.0
        for j in range(n):
            acc = 0.0
            for l in range(n):
                acc += Rs[i, j, l] * U[i, l]
            h2 += (S[i, j] * acc) ** 2
            lin += U[i, j] * C[i, j]
        spread += math.sqrt(h2)
    if spread == 0.0 or -lin <= spread:
        return -1.0
    r = -lin / spread
    return r * r - 1.0


@numba.njit(cache=True, nogil=True)
def _pocs(C, Rs, S, tol, max_iters, scale):
    """Returns (status, point, gap, iterations).

    ``gap`` is max form minus one at the final point, except for DISJOINT
    where it is the certified separation bound.
    """
    k, n = C.shape
    if k == 1:
        return WITNESS, C[0].copy(), -1.0, 0
    x = _start_point(C, Rs, S)
    trail = np.empty((k + 1, n))
    U = np.empty((k, n))
    floor = 8.0 * 2.220446049250313e-16 * scale
    gap = np.inf
    for it in range(max_iters + 1):
        gap = -np.inf
        for i in range(k):
            g = _form(x, C[i], Rs[i], S[i]) - 1.0
            if g > gap:
                gap = g
        if gap <= tol:
            return WITNESS, x, gap, it
        if it == max_iters:
            break
        trail[0] = x
        for i in range(k):
            _project(trail[i], C[i], Rs[i], S[i], trail[i + 1])
        x = trail[k].copy()
        # outward normals of the sweep; closing the cycle through the end
        # point makes them sum to zero
        for l in range(n):
            tot = 0.0
            for i in range(1, k):
                U[i, l] = trail[i, l] - trail[i + 1, l]
                tot += U[i, l]
            U[0, l] = -tot
        bound = _separation_bound(C, Rs, S, U)
        if bound > tol:
            return DISJOINT, x, bound, it + 1
        disp = 0.0
        for l in range(n):
            disp += (trail[k, l] - trail[0, l]) ** 2
        if math.sqrt(disp) <= max(tol * tol * scale, floor):
            # stalled without a certificate either way
            break
    gap = -np.inf
    for i in range(k):
        g = _form(x, C[i], Rs[i], S[i]) - 1.0
        if g > gap:
            gap = g
    return INCONCLUSIVE, x, gap, it


@numba.njit(cache=True, parallel=True)
def _test_batch(cands, C, Rs, S, tol, max_iters, scale):
    m, k = cands.shape
    n = C.shape[1]
    status = np.empty(m, dtype=np.int8)
    for r in numba.prange(m):
        sub_c = np.empty((k, n))
        sub_r = np.empty((k, n, n))
        sub_s = np.empty((k, n))
        for i in range(k):
            idx = cands[r, i]
            sub_c[i] = C[idx]
            sub_r[i] = Rs[idx]
            sub_s[i] = S[idx]
        st, _, _, _ = _pocs(sub_c, sub_r, sub_s, tol, max_iters, scale)
        status[r] = st
    return status


# -- single queries ----------------------------------------------------------


def _pack(ellipsoids):
    C = np.array([e.center for e in ellipsoids], dtype=float)
    Rs = np.array(
        [np.vstack([e.frame.tangent_basis, e.frame.normal_basis]) for e in ellipsoids],
        dtype=float,
    )
    S = np.array(
        [
            [e.tangent_semi_axis] * e.frame.dim + [e.normal_semi_axis] * (e.frame.ambient_dim - e.frame.dim)
            for e in ellipsoids
        ],
        dtype=float,
    )
    return C, Rs, S


def intersect(ellipsoids, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS):
    """Decide whether closed ellipsoids have a common point.

    Returns :class:`Witness` (a point whose quadratic form is at most
    ``1 + tol`` for every ellipsoid), :class:`Disjoint` or
    :class:`Inconclusive`.  Disjointness is certified by the outward normals
    of a projection sweep: they sum to zero, and when the support functions
    sum to a negative value no point lies in all ellipsoids inflated to
    ``form <= 1 + gap``; ``gap > tol`` is the largest such inflation.
    """
    ellipsoids = list(ellipsoids)
    if not ellipsoids:
        raise ValueError("need at least one ellipsoid")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if any(math.isinf(e.tau) for e in ellipsoids):
        raise ValueError("intersection tests need bounded ellipsoids (finite reach)")
    C, Rs, S = _pack(ellipsoids)
    scale = float(np.max(S))
    st, x, gap, its = _pocs(C, Rs, S, float(tol), int(max_iters), scale)
    if st == WITNESS:
        return Witness(np.asarray(x), int(its))
    if st == DISJOINT:
        return Disjoint(float(gap), int(its))
    return Inconclusive(float(gap), int(its))


# -- complexes ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SimplicialComplex:
    """Abstract simplicial complex on vertices ``0 .. vertex_count - 1``.

    ``simplices[k]`` is a sorted list of strictly increasing k+1 tuples.
    """

    vertex_count: int
    simplices: tuple
    warnings: tuple = ()
    _index: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        levels = [sorted(tuple(int(v) for v in s) for s in level) for level in self.simplices]
        if not levels:
            levels = [[(i,) for i in range(self.vertex_count)]]
        for k, level in enumerate(levels):
            for s in level:
                if len(s) != k + 1 or any(a >= b for a, b in zip(s, s[1:])):
                    raise ValueError(f"simplex {s} is not a strictly increasing {k + 1}-tuple")
            if len(set(level)) != len(level):
                raise ValueError(f"duplicate {k}-simplices")
        if [s[0] for s in levels[0]] != list(range(self.vertex_count)):
            raise ValueError("level 0 must list every vertex exactly once")
        while len(levels) > 1 and not levels[-1]:
            levels.pop()
        object.__setattr__(self, "simplices", tuple(tuple(lv) for lv in levels))
        object.__setattr__(self, "warnings", tuple(self.warnings))
        object.__setattr__(self, "_index", [{s: i for i, s in enumerate(lv)} for lv in levels])
        for k in range(1, len(levels)):
            lower = self._index[k - 1]
            for s in levels[k]:
                for face in combinations(s, k):
                    if face not in lower:
                        raise ValueError(f"face {face} of {s} is missing")

    @classmethod
    def from_maximal(cls, vertex_count, maximal, max_dim=None):
        """Downward closure of the given simplices, truncated at ``max_dim``."""
        top = max((len(s) for s in maximal), default=1) - 1
        if max_dim is not None:
            top = min(top, max_dim)
        levels = [set() for _ in range(top + 1)]
        levels[0] = {(i,) for i in range(vertex_count)}
        for s in maximal:
            s = tuple(sorted(s))
            for k in range(1, min(len(s), top + 1)):
                levels[k].update(combinations(s, k + 1))
        return cls(vertex_count, tuple(levels))

    @property
    def max_dim(self) -> int:
        return len(self.simplices) - 1

    def count(self, k: int) -> int:
        return len(self.simplices[k]) if 0 <= k < len(self.simplices) else 0

    def euler_characteristic(self) -> int:
        return sum((-1) ** k * len(lv) for k, lv in enumerate(self.simplices))

    def index(self, simplex) -> int:
        return self._index[len(simplex) - 1][tuple(simplex)]

    def all_simplices(self):
        return [list(s) for lv in self.simplices[1:] for s in lv]

    def to_dict(self, betti=None) -> dict:
        return {
            "vertices": self.vertex_count,
            "simplices": self.all_simplices(),
            "betti": list(betti) if betti is not None else betti_numbers(self),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimplicialComplex":
        n = int(d["vertices"])
        return cls.from_maximal(n, [tuple(s) for s in d["simplices"]]).with_warnings(d.get("warnings", ()))

    def with_warnings(self, warnings) -> "SimplicialComplex":
        return SimplicialComplex(self.vertex_count, self.simplices, tuple(warnings))


def _coboundary_columns(cx: SimplicialComplex, k: int):
    """Row indices of each column of the coboundary from k- to (k+1)-cochains."""
    cols = [[] for _ in range(cx.count(k))]
    if k + 1 > cx.max_dim:
        return cols
    lower = cx._index[k]
    for j, s in enumerate(cx.simplices[k + 1]):
        for face in combinations(s, k + 1):
            cols[lower[face]].append(j)
    return cols


def boundary_ranks(cx: SimplicialComplex, top: int) -> list:
    """``rank d_k`` over Z/2 for ``k = 1 .. top`` (index 0 holds 0).

    Uses ``rank d_{k+1} = rank delta_k`` and reduces coboundary matrices
    from low to high degree; a k-simplex that is the pivot of a reduced
    column of ``delta_{k-1}`` has a column of ``delta_k`` that reduces to
    zero, so it is skipped.
    """
    ranks = [0] * (top + 1)
    cleared = set()
    for k in range(0, top):
        cols = _coboundary_columns(cx, k)
        pivots = {}
        new_cleared = set()
        for j, rows in enumerate(cols):
            if j in cleared or not rows:
                continue
            col = set(rows)
            while col:
                low = max(col)
                other = pivots.get(low)
                if other is None:
                    pivots[low] = col
                    new_cleared.add(low)
                    break
                col ^= other
        ranks[k + 1] = len(pivots)
        cleared = new_cleared
    return ranks


def betti_numbers(cx: SimplicialComplex, up_to_dim: int | None = None) -> list:
    """Mod-2 Betti numbers ``b_0 .. b_{up_to_dim}``.

    Dimensions above the complex's top use an empty boundary (zero rank).
    Ranks of the boundary maps beyond ``max_dim`` are zero, so ``b_k`` for
    ``k = max_dim`` counts cycles that are not filled in the stored complex.
    """
    if up_to_dim is None:
        up_to_dim = cx.max_dim
    if up_to_dim < 0:
        raise ValueError("up_to_dim must be non-negative")
    ranks = boundary_ranks(cx, min(up_to_dim + 1, cx.max_dim))
    ranks += [0] * (up_to_dim + 2 - len(ranks))
    return [cx.count(k) - ranks[k] - ranks[k + 1] for k in range(up_to_dim + 1)]


# -- nerve construction ------------------------------------------------------


def _next_candidates(accepted, k, check=None):
    """(k+1)-sets all of whose k-faces are in ``accepted`` (sorted k-tuples).

    ``check(count, k)`` is called periodically while the list grows.
    """
    acc = set(accepted)
    by_prefix = {}
    for s in accepted:
        by_prefix.setdefault(s[:-1], []).append(s[-1])
    out = []
    next_check = 100_000
    for prefix, tails in by_prefix.items():
        tails.sort()
        for a in range(len(tails)):
            for b in range(a + 1, len(tails)):
                cand = prefix + (tails[a], tails[b])
                if all(cand[:i] + cand[i + 1:] in acc for i in range(len(cand) - 2)):
                    out.append(cand)
        if check is not None and len(out) >= next_check:
            check(len(out), k)
            next_check = len(out) + 100_000
    out.sort()
    return out


def build_nerve(
    cover: EllipsoidCover,
    max_dim: int | None = None,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    batch: int = 200_000,
    deadline: float | None = None,
    max_candidates: int | None = None,
) -> SimplicialComplex:
    """Nerve of the closed ellipsoids of ``cover`` up to dimension ``max_dim``.

    ``max_dim`` defaults to the manifold dimension plus one.  Candidate sets
    whose intersection test is inconclusive are excluded and listed in the
    result's ``warnings``.

    ``deadline`` (seconds of wall time) and ``max_candidates`` (per level)
    bound the work; exceeding either raises :class:`BudgetExceededError`.
    """
    start = time.monotonic()

    def check(level_size, k):
        if max_candidates is not None and level_size > max_candidates:
            raise BudgetExceededError(
                f"{level_size} candidate {k}-simplices exceed the limit of {max_candidates}"
            )
        if deadline is not None and time.monotonic() - start > deadline:
            raise BudgetExceededError(
                f"nerve construction passed its {deadline} s deadline at dimension {k}"
            )

    if max_dim is None:
        max_dim = cover.dim + 1
    if max_dim < 1:
        raise ValueError("max_dim must be at least 1")
    if math.isinf(cover.tau):
        raise ValueError("nerves need bounded ellipsoids (finite reach)")
    ells = cover.ellipsoids()
    C, Rs, S = _pack(ells)
    scale = float(np.max(S))
    N = len(cover)
    warnings = []
    levels = [[(i,) for i in range(N)]]

    # two ellipsoids can only meet if their centres are within twice the
    # longest semi-axis
    pairs = cKDTree(C).query_pairs(2 * scale * (1 + 1e-12), output_type="ndarray")
    cands = sorted(tuple(sorted(map(int, p))) for p in pairs)
    k = 1
    while cands and k <= max_dim:
        check(len(cands), k)
        arr = np.array(cands, dtype=np.int64)
        parts = []
        for i in range(0, len(arr), batch):
            parts.append(_test_batch(arr[i:i + batch], C, Rs, S, float(tol), int(max_iters), scale))
            check(len(cands), k)
        status = np.concatenate(parts)
        for c in arr[status == INCONCLUSIVE]:
            warnings.append(f"inconclusive intersection test for simplex {tuple(int(v) for v in c)}")
        level = [cands[i] for i in np.flatnonzero(status == WITNESS)]
        if not level:
            break
        levels.append(level)
        k += 1
        if k > max_dim:
            break
        cands = _next_candidates(level, k, check)
    return SimplicialComplex(N, tuple(levels), tuple(warnings))
