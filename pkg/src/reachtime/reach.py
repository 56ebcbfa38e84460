"""Set-valued integration schemes and the supporting-point ring recursion.

Fully discrete reachable sets are propagated on the coarse grid
t_i = t0 + i*dt as rings of supporting points, one per reach direction.
A coarse step maps the previous supporting points through the transition
matrix and Minkowski-adds the quadrature sum of mapped control polytopes;
supporting points of the resulting set are extracted per direction, which
decomposes exactly over the Minkowski summands.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (Ball, ConvexPolytope, DirectionGrid, convex_hull,
                       contains_many, lexmax_support_indices, signed_depth,
                       unit_directions)
from .linsys import LinearProblem, NonlinearProblem, Propagator, ReversedProblem, reverse

OVERFLOW_LIMIT = 1e12

_RULE_ORDER = {"riemann": 1, "trapezoid": 2}
_ODE_ORDER = {"euler": 1, "heun": 2, "exact": None}

METHOD_NAMES = {
    "riemann-exact": ("combination", "riemann", "exact"),
    "trapezoid-exact": ("combination", "trapezoid", "exact"),
    "riemann-euler": ("combination", "riemann", "euler"),
    "trapezoid-heun": ("combination", "trapezoid", "heun"),
    "euler": ("runge-kutta", None, "euler"),
    "heun": ("runge-kutta", None, "heun"),
}


class BlowupError(RuntimeError):
    """Raised when ring coordinates leave the finite range."""

    def __init__(self, step: int, magnitude: float):
        super().__init__(f"reachable set blew up at coarse step {step} "
                         f"(coordinate magnitude {magnitude:.3e})")
        self.step = step


@dataclass(frozen=True)
class SchemeSpec:
    """Discretization: quadrature rule, ODE method, fine/coarse step counts."""

    family: str
    rule: str | None
    ode: str
    N: int
    K: int

    def __post_init__(self):
        if self.K < 1 or self.N < 1:
            raise ValueError("K and N must be positive")
        if self.family == "quadrature":
            # The global quadrature method is the combination method with the
            # exact propagator; normalize rather than keep a separate path.
            object.__setattr__(self, "family", "combination")
            object.__setattr__(self, "ode", "exact")
        if self.family == "combination":
            if self.rule not in _RULE_ORDER:
                raise ValueError(f"unknown quadrature rule {self.rule!r}")
            if self.ode not in _ODE_ORDER:
                raise ValueError(f"unknown ODE method {self.ode!r}")
            p = _ODE_ORDER[self.ode]
            if p is not None and p != _RULE_ORDER[self.rule]:
                raise ValueError("quadrature rule and ODE solver must have "
                                 "the same order")
        elif self.family == "runge-kutta":
            if self.ode not in ("euler", "heun"):
                raise ValueError("set-valued Runge-Kutta supports euler and heun")
            if self.rule is not None:
                raise ValueError("Runge-Kutta schemes take no quadrature rule")
        else:
            raise ValueError(f"unknown scheme family {self.family!r}")

    @staticmethod
    def from_name(name: str, K: int, N: int) -> "SchemeSpec":
        if name not in METHOD_NAMES:
            raise ValueError(f"unknown method {name!r}; choose from "
                             f"{sorted(METHOD_NAMES)}")
        family, rule, ode = METHOD_NAMES[name]
        return SchemeSpec(family, rule, ode, N=N, K=K)

    @property
    def name(self) -> str:
        for name, spec in METHOD_NAMES.items():
            if spec == (self.family, self.rule, self.ode):
                return name
        return f"{self.family}:{self.rule}:{self.ode}"

    @property
    def order(self) -> int:
        if self.family == "combination":
            return _RULE_ORDER[self.rule]
        return _ODE_ORDER[self.ode]


def composite_weights(rule: str, N: int) -> np.ndarray:
    """Per-node weights c_j over one coarse interval (j = 0..N).

    Riemann uses left endpoints, the trapezoid rule (1/2, 1, ..., 1, 1/2);
    h * sum(c_j) telescopes the interval for both.
    """
    if rule == "riemann":
        w = np.ones(N + 1)
        w[N] = 0.0
        return w
    if rule == "trapezoid":
        w = np.ones(N + 1)
        w[0] = w[N] = 0.5
        return w
    raise ValueError(f"unknown quadrature rule {rule!r}")


@dataclass(frozen=True)
class ReachRing:
    """Supporting points (index-aligned with the direction grid) at time t."""

    t: float
    Y: np.ndarray
    R: ConvexPolytope


@dataclass
class ReachFlow:
    """Sequence of rings R_hd(t_i), i = 0..K, plus provenance."""

    rings: list
    problem: object
    scheme: SchemeSpec
    grid: DirectionGrid
    u_points: np.ndarray
    _nested: bool | None = field(default=None, repr=False)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.rings])

    @property
    def delta_t(self) -> float:
        return (self.problem.tf - self.problem.t0) / self.scheme.K

    @property
    def h(self) -> float:
        return self.delta_t / self.scheme.N

    @property
    def degenerate(self) -> bool:
        return all(r.R.degeneracy != "full" for r in self.rings)

    def nested(self, tol: float = 1e-9) -> bool:
        """Whether every ring contains its predecessor (cached)."""
        if self._nested is None:
            ok = True
            for a, b in zip(self.rings, self.rings[1:]):
                if not contains_many(b.R, a.R.vertices, tol).all():
                    ok = False
                    break
            self._nested = ok
        return self._nested


def discretize_set(X, grid: DirectionGrid):
    """Supporting points of X per grid direction and their hull."""
    D = grid.directions
    if isinstance(X, Ball):
        norms = np.sqrt((D * D).sum(axis=1))
        points = X.center + X.radius * D / norms[:, None]
    else:
        idx = lexmax_support_indices(X.vertices, D)
        points = X.vertices[idx]
    return points, convex_hull(points)


def _one_step_matrices(prop: Propagator, t_i: float, h: float, N: int):
    """One-step matrices Phi_j and suffix products M_j = Phi(t_end, t_ij)."""
    phis = [prop.step(t_i + j * h, h) for j in range(N)]
    n = phis[0].shape[0]
    M = [np.eye(n)] * (N + 1)
    for j in range(N - 1, -1, -1):
        M[j] = M[j + 1] @ phis[j]
    return phis, M


def interval_operators(problem, scheme: SchemeSpec, prop: Propagator,
                       t_i: float, dt: float):
    """Coarse-step operators: leading matrix M0 and control summands.

    Returns (M0, summands, phis, weights) where each summand is a pair
    (node index j, matrix G_j) such that the step maps a set P to
    M0 * P + sum_j G_j * U.
    """
    N = scheme.N
    h = dt / N
    phis, M = _one_step_matrices(prop, t_i, h, N)
    nodes = [t_i + j * h for j in range(N + 1)]
    summands = []
    if scheme.family == "combination":
        weights = composite_weights(scheme.rule, N)
        for j in range(N + 1):
            if weights[j] == 0.0:
                continue
            G = h * weights[j] * (M[j] @ problem.Bbar(nodes[j]))
            summands.append((j, G))
    else:
        weights = np.ones(N + 1)
        weights[N] = 0.0
        eye = np.eye(problem.n)
        for j in range(N):
            if scheme.ode == "euler":
                G = h * (M[j + 1] @ problem.Bbar(nodes[j]))
            else:
                bracket = ((eye + h * problem.Abar(nodes[j + 1])) @ problem.Bbar(nodes[j])
                           + problem.Bbar(nodes[j + 1]))
                G = M[j + 1] @ (0.5 * h * bracket)
            summands.append((j, G))
    return M[0], summands, phis, weights


def _extract_ring(t: float, mapped_parts, grid: DirectionGrid) -> ReachRing:
    """Supporting points of a Minkowski sum of finite point clouds.

    The lexicographic tie-break commutes with Minkowski addition, so the
    supporting point of the sum is the sum of per-part supporting points.
    """
    D = grid.directions
    Y = np.zeros((len(D), D.shape[1]))
    for pts in mapped_parts:
        idx = lexmax_support_indices(pts, D)
        Y = Y + pts[idx]
    return ReachRing(t, Y, convex_hull(Y))


def step_ring(ring: ReachRing, scheme: SchemeSpec, problem: ReversedProblem,
              grid: DirectionGrid, u_points: np.ndarray,
              prop: Propagator | None = None, dt: float | None = None) -> ReachRing:
    """One coarse step of Algorithm steps 2 and 3 (combination or RK family)."""
    if prop is None:
        prop = Propagator(scheme.ode, problem)
    if dt is None:
        dt = (problem.tf - problem.t0) / scheme.K
    M0, summands, _, _ = interval_operators(problem, scheme, prop, ring.t, dt)
    parts = [ring.Y @ M0.T]
    parts.extend(u_points @ G.T for _, G in summands)
    new = _extract_ring(ring.t + dt, parts, grid)
    mag = float(np.abs(new.Y).max())
    if not np.isfinite(mag) or mag > OVERFLOW_LIMIT:
        step = round((ring.t - problem.t0) / dt)
        raise BlowupError(step, mag)
    return new


def step_euler_rk(ring: ReachRing, problem: ReversedProblem, grid: DirectionGrid,
                  u_points: np.ndarray, h: float) -> ReachRing:
    """Single set-valued Euler step: Phi_h * R + h * Bbar(t) * U."""
    scheme = SchemeSpec("runge-kutta", None, "euler", N=1, K=1)
    return step_ring(ring, scheme, problem, grid, u_points,
                     prop=Propagator("euler", problem), dt=h)


def step_heun_rk(ring: ReachRing, problem: ReversedProblem, grid: DirectionGrid,
                 u_points: np.ndarray, h: float) -> ReachRing:
    """Single set-valued Heun step with piecewise constant selections."""
    scheme = SchemeSpec("runge-kutta", None, "heun", N=1, K=1)
    return step_ring(ring, scheme, problem, grid, u_points,
                     prop=Propagator("heun", problem), dt=h)


def step_nonlinear(ring: ReachRing, f, u_points: np.ndarray, h: float,
                   method: str, grid: DirectionGrid) -> ReachRing:
    """One explicit step of ydot = f(y, u) over every (vertex, control) pair.

    f must accept an (N, n) state block and one control vector and return
    the stacked right-hand sides.  Valid only while the true reachable sets
    stay convex.
    """
    if method not in ("euler", "heun"):
        raise ValueError("nonlinear stepping supports euler and heun")
    clouds = []
    for u in u_points:
        k1 = np.asarray(f(ring.Y, u), dtype=float)
        if method == "euler":
            clouds.append(ring.Y + h * k1)
        else:
            y1 = ring.Y + h * k1
            k2 = np.asarray(f(y1, u), dtype=float)
            clouds.append(ring.Y + 0.5 * h * (k1 + k2))
    cloud = np.vstack(clouds)
    return _extract_ring(ring.t + h, [cloud], grid)


def default_control_grid(problem, n_u: int | None = None) -> DirectionGrid:
    """Control-direction grid: {-1, +1} for intervals, the circle grid else."""
    if problem.m == 1:
        return unit_directions(2, "control", dim=1)
    return unit_directions(n_u if n_u else 100, "control", dim=2)


def run_algorithm(problem, scheme: SchemeSpec, grid: DirectionGrid,
                  u_grid: DirectionGrid | None = None) -> ReachFlow:
    """Propagate fully discrete reachable sets over the whole horizon.

    Accepts a LinearProblem (reversed internally), a ReversedProblem, or a
    NonlinearProblem (Runge-Kutta family only).
    """
    if isinstance(problem, LinearProblem):
        problem = reverse(problem)
    nonlinear = isinstance(problem, NonlinearProblem)
    if nonlinear and scheme.family != "runge-kutta":
        raise ValueError("nonlinear dynamics require a Runge-Kutta scheme")
    if u_grid is None:
        u_grid = default_control_grid(problem, len(grid.directions))
    u_points, _ = discretize_set(problem.U, u_grid)

    s_points, s_poly = discretize_set(problem.S, grid)
    rings = [ReachRing(problem.t0, s_points, s_poly)]
    dt = (problem.tf - problem.t0) / scheme.K
    h = dt / scheme.N
    prop = None if nonlinear else Propagator(scheme.ode, problem)

    for i in range(scheme.K):
        ring = rings[-1]
        if nonlinear:
            for j in range(scheme.N):
                ring = step_nonlinear(ring, problem.f, u_points, h,
                                      scheme.ode, grid)
            mag = float(np.abs(ring.Y).max())
            if not np.isfinite(mag) or mag > OVERFLOW_LIMIT:
                raise BlowupError(i, mag)
            ring = ReachRing(problem.t0 + (i + 1) * dt, ring.Y, ring.R)
        else:
            ring = step_ring(ring, scheme, problem, grid, u_points,
                             prop=prop, dt=dt)
        rings.append(ring)
    return ReachFlow(rings, problem, scheme, grid, u_points)


@dataclass
class ExpansionReport:
    """Per-pair containment margins for the strict-expansion check."""

    eps: float
    margins: list
    flagged: list

    @property
    def ok(self) -> bool:
        return not self.flagged


def check_strict_expansion(flow: ReachFlow, eps: float) -> ExpansionReport:
    """Margin of ring i inside ring i+1; flags pairs with margin < eps/3.

    The margin is the minimal distance from the vertices of ring i to the
    complement of ring i+1 (exact for convex polygons); empty-interior rings
    report margin <= 0.  Non-fatal: some examples violate expansion by design.
    """
    margins = []
    flagged = []
    for i in range(len(flow.rings) - 1):
        nxt = flow.rings[i + 1].R
        margin = min(signed_depth(v, nxt) for v in flow.rings[i].R.vertices)
        margins.append(margin)
        if margin < eps / 3.0:
            flagged.append(i)
    return ExpansionReport(eps, margins, flagged)


def ring_gaps(flow: ReachFlow) -> np.ndarray:
    """Hausdorff distance between consecutive rings."""
    from .geometry import hausdorff
    return np.array([hausdorff(a.R, b.R)
                     for a, b in zip(flow.rings, flow.rings[1:])])
