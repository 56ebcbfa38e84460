"""Ring triangulation, the piecewise linear minimum time interpolant and
error measurement against oracles."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import contains_many
from .reach import ReachFlow

UNREACHED = math.inf

_MEMBER_TOL = 1e-9
_BARY_TOL = 1e-9
_AREA_RTOL = 1e-14


@dataclass
class Triangulation:
    """Strip triangulation of the annuli between consecutive rings.

    Nodes are the supporting points of all rings; every triangle draws its
    vertices from exactly two consecutive rings by construction.
    """

    points: np.ndarray
    times: np.ndarray
    triangles: np.ndarray
    strip: np.ndarray
    delta_gamma: float
    dropped: int
    crossing_strips: list


def triangulate(flow: ReachFlow) -> Triangulation:
    """Index-paired strip triangulation over a full-dimensional flow.

    Between rings i and i+1 each direction index k spawns the triangles
    (Y_i^k, Y_i^{k+1}, Y_{i+1}^k) and (Y_i^{k+1}, Y_{i+1}^k, Y_{i+1}^{k+1});
    zero-area triangles (coincident supporting points) are dropped.
    """
    rings = flow.rings
    nr = len(flow.grid.directions)
    pts = np.vstack([r.Y for r in rings])
    times = np.concatenate([np.full(nr, r.t) for r in rings])
    span = pts.max(axis=0) - pts.min(axis=0)
    area_tol = _AREA_RTOL * max(float(span @ span), 1.0)

    tris = []
    strip = []
    for i in range(len(rings) - 1):
        a = i * nr
        b = (i + 1) * nr
        for k in range(nr - 1):
            tris.append((a + k, a + k + 1, b + k))
            tris.append((a + k + 1, b + k, b + k + 1))
            strip.extend((i, i))
    tris = np.asarray(tris, dtype=np.intp)
    strip = np.asarray(strip, dtype=np.intp)

    p0, p1, p2 = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    e1 = p1 - p0
    e2 = p2 - p0
    area2 = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    keep = area2 > 2.0 * area_tol
    dropped = int((~keep).sum())
    tris = tris[keep]
    strip = strip[keep]

    if len(tris):
        p0, p1, p2 = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
        diam = np.sqrt(np.maximum.reduce([
            ((p1 - p0) ** 2).sum(axis=1),
            ((p2 - p1) ** 2).sum(axis=1),
            ((p0 - p2) ** 2).sum(axis=1),
        ]))
        delta_gamma = float(diam.max())
    else:
        delta_gamma = 0.0

    crossing = []
    for i in range(len(rings) - 1):
        if not contains_many(rings[i + 1].R, rings[i].R.vertices, _MEMBER_TOL).all():
            crossing.append(i)
    return Triangulation(pts, times, tris, strip, delta_gamma, dropped, crossing)


class MinTimeField:
    """Evaluable fully discrete minimum time function.

    Inside the discretized target the value is t0; inside the annulus
    between rings i-1 and i values come from barycentric interpolation of
    the node times; outside the outermost ring the point is unreached
    (value +inf).
    """

    def __init__(self, flow: ReachFlow):
        self.flow = flow
        self.t0 = flow.problem.t0
        self.times = flow.times
        self.target = flow.rings[0].R
        self.outer = flow.rings[-1].R
        self.mode = "full"
        self.tri = None
        if all(r.R.degeneracy != "full" for r in flow.rings):
            self._init_degenerate()
        else:
            self.tri = triangulate(flow)
            self._strip_tris = [
                self.tri.triangles[self.tri.strip == i]
                for i in range(len(flow.rings) - 1)
            ]
            self._nested = flow.nested(_MEMBER_TOL)

    # -- degenerate flows -------------------------------------------------

    def _init_degenerate(self):
        rings = self.flow.rings
        if self.outer.degeneracy == "point":
            self.mode = "point"
            self.anchor = self.outer.vertices[0]
            return
        self.mode = "segment"
        a, b = self.outer.vertices[0], self.outer.vertices[1]
        d = b - a
        self.anchor = a
        self.axis = d / np.linalg.norm(d)
        los, his = [], []
        for r in rings:
            s = (r.R.vertices - a) @ self.axis
            los.append(float(s.min()))
            his.append(float(s.max()))
            off = r.R.vertices - a - np.outer(s, self.axis)
            if np.abs(off).max() > 1e-7:
                raise ValueError("segment rings are not collinear")
        self.lo = np.array(los)
        self.hi = np.array(his)

    def _evaluate_degenerate(self, pts: np.ndarray) -> np.ndarray:
        out = np.full(len(pts), UNREACHED)
        if self.mode == "point":
            hit = np.sqrt(((pts - self.anchor) ** 2).sum(axis=1)) <= _MEMBER_TOL
            out[hit] = self.t0
            return out
        rel = pts - self.anchor
        s = rel @ self.axis
        off = rel - np.outer(s, self.axis)
        on_line = np.sqrt((off ** 2).sum(axis=1)) <= _MEMBER_TOL
        for p in np.nonzero(on_line)[0]:
            out[p] = self._segment_value(s[p])
        return out

    def _segment_value(self, s: float) -> float:
        lo, hi, times = self.lo, self.hi, self.times
        if s < lo[-1] - _MEMBER_TOL or s > hi[-1] + _MEMBER_TOL:
            return UNREACHED
        if lo[0] - _MEMBER_TOL <= s <= hi[0] + _MEMBER_TOL:
            return float(times[0])
        for i in range(1, len(times)):
            if lo[i] - _MEMBER_TOL <= s <= hi[i] + _MEMBER_TOL:
                if s < lo[i - 1]:
                    a, b = lo[i], lo[i - 1]
                else:
                    a, b = hi[i], hi[i - 1]
                if b == a:
                    return float(times[i])
                lam = np.clip((s - a) / (b - a), 0.0, 1.0)
                return float(times[i] + lam * (times[i - 1] - times[i]))
        return UNREACHED

    # -- full-dimensional flows -------------------------------------------

    def _locate(self, pts: np.ndarray) -> np.ndarray:
        """Smallest ring index containing each point (-1 if none)."""
        rings = self.flow.rings
        K = len(rings) - 1
        loc = np.full(len(pts), -1, dtype=np.intp)
        inside_outer = contains_many(self.outer, pts, _MEMBER_TOL)
        idx = np.nonzero(inside_outer)[0]
        if not len(idx):
            return loc
        if self._nested and K > 100:
            lo = np.zeros(len(idx), dtype=np.intp)
            hi = np.full(len(idx), K, dtype=np.intp)
            while (lo < hi).any():
                mid = (lo + hi) // 2
                for m in np.unique(mid[lo < hi]):
                    sel = (mid == m) & (lo < hi)
                    inside = contains_many(rings[m].R, pts[idx[sel]], _MEMBER_TOL)
                    sub = np.nonzero(sel)[0]
                    hi[sub[inside]] = m
                    lo[sub[~inside]] = m + 1
            loc[idx] = lo
            return loc
        remaining = idx
        for i in range(K + 1):
            if not len(remaining):
                break
            inside = contains_many(rings[i].R, pts[remaining], _MEMBER_TOL)
            loc[remaining[inside]] = i
            remaining = remaining[~inside]
        return loc

    def _interp_strip(self, strip: int, pts: np.ndarray) -> np.ndarray:
        tri = self.tri
        tris = self._strip_tris[strip]
        t_lo, t_hi = self.times[strip], self.times[strip + 1]
        out = np.empty(len(pts))
        if not len(tris):
            out[:] = t_hi
            return out
        A = tri.points[tris[:, 0]]
        B = tri.points[tris[:, 1]]
        C = tri.points[tris[:, 2]]
        TA = tri.times[tris[:, 0]]
        TB = tri.times[tris[:, 1]]
        TC = tri.times[tris[:, 2]]
        ab = B - A
        ac = C - A
        det = ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0]
        for lo in range(0, len(pts), 2048):
            chunk = pts[lo:lo + 2048]
            rx = chunk[:, None, 0] - A[None, :, 0]
            ry = chunk[:, None, 1] - A[None, :, 1]
            l2 = (rx * ac[None, :, 1] - ry * ac[None, :, 0]) / det[None, :]
            l3 = (ab[None, :, 0] * ry - ab[None, :, 1] * rx) / det[None, :]
            l1 = 1.0 - l2 - l3
            lmin = np.minimum(np.minimum(l1, l2), l3)
            best = lmin.argmax(axis=1)
            rows = np.arange(len(chunk))
            vals = (l1[rows, best] * TA[best] + l2[rows, best] * TB[best]
                    + l3[rows, best] * TC[best])
            # Points that fall only in dropped triangles resolve through the
            # nearest surviving triangle's barycentric extension, clamped to
            # the strip's time range.
            outside = lmin[rows, best] < -_BARY_TOL
            vals[outside] = np.clip(vals[outside], t_lo, t_hi)
            out[lo:lo + 2048] = vals
        return out

    def evaluate_many(self, pts) -> np.ndarray:
        """Vectorized evaluation; +inf marks unreached points."""
        pts = np.asarray(pts, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1)
        workers = int(os.environ.get("MINTIME_THREADS", "1") or "1")
        if workers > 1 and len(pts) > 4096:
            chunks = np.array_split(pts, workers)
            with ThreadPoolExecutor(max_workers=workers) as ex:
                return np.concatenate(list(ex.map(self._evaluate_block, chunks)))
        return self._evaluate_block(pts)

    def _evaluate_block(self, pts: np.ndarray) -> np.ndarray:
        if self.mode != "full":
            return self._evaluate_degenerate(pts)
        out = np.full(len(pts), UNREACHED)
        loc = self._locate(pts)
        out[loc == 0] = self.t0
        for strip in range(len(self.flow.rings) - 1):
            sel = np.nonzero(loc == strip + 1)[0]
            if len(sel):
                out[sel] = self._interp_strip(strip, pts[sel])
        return out

    def evaluate(self, x) -> float:
        """Minimum time value at a single point (inf when unreached)."""
        return float(self.evaluate_many(np.asarray(x, dtype=float).reshape(1, -1))[0])

    @property
    def delta_gamma(self) -> float:
        return self.tri.delta_gamma if self.tri is not None else 0.0


def make_grid(bounds=(-1.0, 1.0, -1.0, 1.0), dx: float = 0.02) -> np.ndarray:
    """Uniform test grid over [x_lo, x_hi] x [y_lo, y_hi], spacing dx."""
    if dx <= 0:
        raise ValueError("grid spacing must be positive")
    xlo, xhi, ylo, yhi = bounds
    nx = int(round((xhi - xlo) / dx)) + 1
    ny = int(round((yhi - ylo) / dx)) + 1
    xs = np.linspace(xlo, xhi, nx)
    ys = np.linspace(ylo, yhi, ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


@dataclass
class ErrorReport:
    """Supremum-norm comparison of a field against an oracle on a grid."""

    linf: float
    worst_point: np.ndarray
    n_compared: int
    n_field_unreached: int
    n_oracle_unreached: int

    def to_json(self) -> dict:
        return {
            "Linf": self.linf,
            "worst_point": list(map(float, self.worst_point)),
            "n_compared": self.n_compared,
            "n_field_unreached": self.n_field_unreached,
            "n_oracle_unreached": self.n_oracle_unreached,
        }


def error_norm(field: MinTimeField, oracle, grid: np.ndarray,
               tf: float | None = None) -> ErrorReport:
    """L-infinity error over grid points where both values are finite.

    Points where exactly one side is unreached (or beyond tf) are counted
    separately rather than folded into the norm.
    """
    if tf is None:
        tf = field.flow.problem.tf
    approx = field.evaluate_many(grid)
    exact = np.array([oracle(x) for x in grid], dtype=float)
    ok_a = np.isfinite(approx) & (approx <= tf + 1e-12)
    ok_e = np.isfinite(exact) & (exact <= tf + 1e-12)
    both = ok_a & ok_e
    if not both.any():
        raise ValueError("no comparable grid points")
    diff = np.abs(approx[both] - exact[both])
    w = diff.argmax()
    return ErrorReport(
        linf=float(diff[w]),
        worst_point=grid[both][w],
        n_compared=int(both.sum()),
        n_field_unreached=int((ok_e & ~ok_a).sum()),
        n_oracle_unreached=int((ok_a & ~ok_e).sum()),
    )


def field_error(field: MinTimeField, reference: MinTimeField,
                grid: np.ndarray, tf: float | None = None) -> ErrorReport:
    """error_norm with another field as the oracle (self-convergence)."""
    ref = reference.evaluate_many(grid)
    lookup = {tuple(p): v for p, v in zip(map(tuple, grid), ref)}
    return error_norm(field, lambda x: lookup[tuple(x)], grid, tf)


def fit_order(steps, errors, fixed_p: float | None = None):
    """Least squares fit of errors ~ C * h^p in log-log coordinates."""
    h = np.asarray(steps, dtype=float)
    e = np.asarray(errors, dtype=float)
    if (h <= 0).any() or (e <= 0).any():
        raise ValueError("step sizes and errors must be positive")
    if fixed_p is not None:
        logc = float(np.mean(np.log(e) - fixed_p * np.log(h)))
        return math.exp(logc), float(fixed_p)
    if len(h) < 2:
        raise ValueError("need at least two data points")
    A = np.column_stack([np.ones(len(h)), np.log(h)])
    (logc, p), *_ = np.linalg.lstsq(A, np.log(e), rcond=None)
    return math.exp(logc), float(p)
