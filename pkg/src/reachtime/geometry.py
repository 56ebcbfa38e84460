"""Exact floating-point arithmetic for convex compact sets in the plane.

Convex sets are represented either by their ordered extreme points
(:class:`ConvexPolytope`, which may degenerate to a segment or a point) or
symbolically as a :class:`Ball`.  All operations are pure; polytopes are
immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Relative tolerance for collinearity decisions inside the hull, scaled by
# the squared bounding-box diagonal of the input cloud.
HULL_COLLINEAR_RTOL = 1e-12

FULL = "full"
SEGMENT = "segment"
POINT = "point"


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("expected a nonempty (N, n) point array")
    if not np.isfinite(arr).all():
        raise ValueError("points must be finite")
    return arr


def lex_rank(points: np.ndarray) -> np.ndarray:
    """Rank of each point in lexicographic order (last = largest)."""
    keys = tuple(points[:, k] for k in reversed(range(points.shape[1])))
    order = np.lexsort(keys)
    rank = np.empty(len(points), dtype=np.intp)
    rank[order] = np.arange(len(points))
    return rank


def lexmax_support_indices(points: np.ndarray, directions: np.ndarray,
                           chunk: int = 256) -> np.ndarray:
    """Index of the supporting point of a finite cloud per direction.

    Ties on the support value are broken by picking the lexicographically
    largest attaining point, so the result is deterministic bit for bit.
    """
    points = np.asarray(points, dtype=float)
    directions = np.asarray(directions, dtype=float)
    rank = lex_rank(points)
    out = np.empty(len(directions), dtype=np.intp)
    for lo in range(0, len(directions), chunk):
        block = directions[lo:lo + chunk]
        vals = block @ points.T
        best = vals.max(axis=1)
        attain = vals == best[:, None]
        out[lo:lo + chunk] = np.where(attain, rank, -1).argmax(axis=1)
    return out


@dataclass(frozen=True)
class ConvexPolytope:
    """Convex compact set given by ordered extreme points.

    For full-dimensional planar sets the vertices are in counterclockwise
    order starting from the lexicographically smallest one.  Segments keep
    their two distinct endpoints, points a single vertex.
    """

    vertices: np.ndarray
    degeneracy: str = FULL

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        object.__setattr__(self, "vertices", v)
        v.setflags(write=False)

    @property
    def n(self) -> int:
        return self.vertices.shape[1]

    def support(self, l) -> float:
        return support_value(self, l)

    def support_point(self, l) -> np.ndarray:
        return supporting_point(self, l)

    def contains(self, x, tol: float = 1e-9) -> bool:
        return contains(self, x, tol)

    def to_json(self) -> dict:
        return {"vertices": self.vertices.tolist(), "degeneracy": self.degeneracy}

    @staticmethod
    def from_json(obj: dict) -> "ConvexPolytope":
        return ConvexPolytope(np.asarray(obj["vertices"], dtype=float),
                              obj["degeneracy"])

    @staticmethod
    def point(p) -> "ConvexPolytope":
        return convex_hull(_as_points(p))

    @staticmethod
    def segment(a, b) -> "ConvexPolytope":
        return convex_hull(np.vstack([_as_points(a), _as_points(b)]))

    @staticmethod
    def box(lo, hi) -> "ConvexPolytope":
        """Axis-aligned box in 1 or 2 dimensions."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or (hi < lo).any():
            raise ValueError("inconsistent box bounds")
        if len(lo) == 1:
            pts = np.array([[lo[0]], [hi[0]]])
        elif len(lo) == 2:
            pts = np.array([[lo[0], lo[1]], [hi[0], lo[1]],
                            [hi[0], hi[1]], [lo[0], hi[1]]])
        else:
            raise ValueError("box supports dimensions 1 and 2 only")
        return convex_hull(pts)


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball; kept symbolic until discretization."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", c)
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    @property
    def n(self) -> int:
        return len(self.center)

    def support(self, l) -> float:
        l = np.asarray(l, dtype=float)
        return float(self.center @ l) + self.radius * float(np.linalg.norm(l))

    def support_point(self, l) -> np.ndarray:
        l = np.asarray(l, dtype=float)
        return self.center + self.radius * l


@dataclass(frozen=True)
class DirectionGrid:
    """Finite set of unit directions discretizing the sphere."""

    directions: np.ndarray
    kind: str

    def __len__(self) -> int:
        return len(self.directions)

    @property
    def n(self) -> int:
        return self.directions.shape[1]


def unit_directions(count: int, kind: str = "reach", dim: int = 2) -> DirectionGrid:
    """Direction grid l^k = (cos, sin)(2*pi*(k-1)/(count-1)), k = 1..count.

    The final entry deliberately duplicates the first (full wraparound), so a
    grid of `count` entries carries `count - 1` distinct directions.  For
    one-dimensional control sets the grid is always {-1, +1}.
    """
    if count < 2:
        raise ValueError("direction count must be at least 2")
    if dim == 1:
        if count != 2:
            raise ValueError("one-dimensional grids have exactly 2 directions")
        return DirectionGrid(np.array([[-1.0], [1.0]]), kind)
    if dim != 2:
        raise ValueError("direction grids support dimensions 1 and 2 only")
    k = np.arange(count)
    angles = 2.0 * np.pi * (k % (count - 1)) / (count - 1)
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    return DirectionGrid(dirs, kind)


def support_value(P, l) -> float:
    """Support function: max over the set of <l, x> (exact for polytopes)."""
    if isinstance(P, Ball):
        return P.support(l)
    l = np.asarray(l, dtype=float)
    return float((P.vertices @ l).max())


def supporting_point(P, l) -> np.ndarray:
    """A vertex attaining the support value.

    When the supporting face is an edge, the lexicographically largest
    attaining vertex is returned, making the choice deterministic.
    """
    if isinstance(P, Ball):
        return P.support_point(l)
    l = np.asarray(l, dtype=float)
    idx = lexmax_support_indices(P.vertices, l.reshape(1, -1))[0]
    return P.vertices[idx].copy()


def convex_hull(points) -> ConvexPolytope:
    """Monotone-chain hull returning only extreme points.

    Collinear triples are detected with a cross-product threshold relative to
    the bounding-box scale; collinear input collapses to a segment and
    coincident input to a point.
    """
    pts = _as_points(points)
    pts = np.unique(pts, axis=0)
    span = pts.max(axis=0) - pts.min(axis=0)
    scale2 = float(span @ span)
    if len(pts) == 1 or scale2 == 0.0:
        return ConvexPolytope(pts[:1].copy(), POINT)
    if pts.shape[1] == 1:
        return ConvexPolytope(np.array([[pts[:, 0].min()], [pts[:, 0].max()]]), SEGMENT)
    if pts.shape[1] != 2:
        # n > 2 is supported only for the trivially degenerate cases above.
        d = pts[-1] - pts[0]
        resid = pts - pts[0] - np.outer((pts - pts[0]) @ d / (d @ d), d)
        if (np.abs(resid) <= 1e-12 * np.sqrt(scale2)).all():
            s = (pts - pts[0]) @ d
            return ConvexPolytope(np.vstack([pts[s.argmin()], pts[s.argmax()]]), SEGMENT)
        raise ValueError("full-dimensional hulls are only implemented for n = 2")

    eps = HULL_COLLINEAR_RTOL * scale2
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                u = out[-1] - out[-2]
                w = p - out[-2]
                if u[0] * w[1] - u[1] * w[0] > eps:
                    break
                out.pop()
            out.append(p)
        return out

    lower = chain(pts)
    upper = chain(pts[::-1])
    verts = np.array(lower[:-1] + upper[:-1])
    if len(verts) == 2:
        return ConvexPolytope(verts, SEGMENT)
    if len(verts) == 1:
        return ConvexPolytope(verts, POINT)
    return ConvexPolytope(verts, FULL)


def minkowski_sum(P: ConvexPolytope, Q: ConvexPolytope) -> ConvexPolytope:
    """Hull of all pairwise vertex sums; support values add exactly."""
    if P.n != Q.n:
        raise ValueError("dimension mismatch in Minkowski sum")
    sums = (P.vertices[:, None, :] + Q.vertices[None, :, :]).reshape(-1, P.n)
    return convex_hull(sums)


def linear_image(M, P: ConvexPolytope) -> ConvexPolytope:
    """Image M * P; satisfies support(l, M*P) = support(M^T l, P)."""
    M = np.asarray(M, dtype=float)
    return convex_hull(P.vertices @ M.T)


def scale(alpha: float, P: ConvexPolytope) -> ConvexPolytope:
    if alpha < 0:
        raise ValueError("scale factor must be nonnegative")
    if alpha == 0.0:
        return ConvexPolytope(np.zeros((1, P.n)), POINT)
    return ConvexPolytope(alpha * P.vertices, P.degeneracy)


def _edges(P: ConvexPolytope):
    v = P.vertices
    if P.degeneracy == POINT:
        return v, v
    if P.degeneracy == SEGMENT:
        return v[:1], v[1:]
    return v, np.roll(v, -1, axis=0)


def distance_to(x, P: ConvexPolytope) -> float:
    """Euclidean distance from a point to a convex polytope (0 inside)."""
    x = np.asarray(x, dtype=float)
    if P.degeneracy == POINT:
        return float(np.linalg.norm(x - P.vertices[0]))
    a, b = _edges(P)
    d = b - a
    lens2 = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("ij,ij->i", x - a, d) / np.where(lens2 > 0, lens2, 1.0), 0.0, 1.0)
    proj = a + t[:, None] * d
    dist = float(np.sqrt(((x - proj) ** 2).sum(axis=1)).min())
    if P.degeneracy == FULL and contains(P, x, tol=0.0):
        return 0.0
    return dist


def signed_depth(x, P: ConvexPolytope) -> float:
    """Distance from x to the complement of P.

    Positive inside a full-dimensional polytope (exact for convex sets),
    zero at best for segments and points since their interior is empty.
    """
    x = np.asarray(x, dtype=float)
    if P.degeneracy != FULL:
        return -distance_to(x, P)
    a, b = _edges(P)
    d = b - a
    lens = np.sqrt(np.einsum("ij,ij->i", d, d))
    cross = d[:, 0] * (x - a)[:, 1] - d[:, 1] * (x - a)[:, 0]
    return float((cross / np.where(lens > 0, lens, 1.0)).min())


def contains(P: ConvexPolytope, x, tol: float = 1e-9) -> bool:
    """Membership with tolerance, via signed edge distances."""
    x = np.asarray(x, dtype=float)
    if P.degeneracy == FULL:
        return signed_depth(x, P) >= -tol
    return distance_to(x, P) <= tol


def contains_many(P: ConvexPolytope, pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Vectorized membership test for an (N, 2) point array."""
    pts = np.asarray(pts, dtype=float)
    if P.degeneracy == POINT:
        return np.sqrt(((pts - P.vertices[0]) ** 2).sum(axis=1)) <= tol
    a, b = _edges(P)
    d = b - a
    if P.degeneracy == SEGMENT:
        lens2 = float(d[0] @ d[0])
        t = np.clip((pts - a[0]) @ d[0] / lens2, 0.0, 1.0)
        proj = a[0] + t[:, None] * d[0]
        return np.sqrt(((pts - proj) ** 2).sum(axis=1)) <= tol
    lens = np.sqrt(np.einsum("ij,ij->i", d, d))
    rel0 = pts[:, None, 0] - a[None, :, 0]
    rel1 = pts[:, None, 1] - a[None, :, 1]
    cross = d[None, :, 0] * rel1 - d[None, :, 1] * rel0
    return (cross / lens[None, :]).min(axis=1) >= -tol


def hausdorff(P: ConvexPolytope, Q: ConvexPolytope) -> float:
    """Hausdorff distance between convex polytopes.

    The distance function to a convex set is convex, so the maximum over
    each polytope is attained at an extreme point; scanning vertices is
    exact.
    """
    d1 = max(distance_to(v, Q) for v in P.vertices)
    d2 = max(distance_to(w, P) for w in Q.vertices)
    return max(d1, d2)
