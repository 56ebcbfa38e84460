"""Discrete adjoint propagation and bang-bang control reconstruction.

The adjoint recursion runs backward over the fine nodes with the same
one-step matrices that built the reachable-set flow; the componentwise sign
of eta * Bbar is the argmax of the discrete Hamiltonian over a box control
set, which yields extremal (bang-bang) discrete controls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linsys import Propagator, kalman_rank
from .reach import ReachFlow, interval_operators


@dataclass
class AdjointPath:
    """Row-vector adjoints at every fine node t_0 .. t_i."""

    eta: np.ndarray
    zeta: np.ndarray
    ring_index: int
    times: np.ndarray


@dataclass
class ControlSequence:
    """Controls at the fine nodes, piecewise constant between them."""

    values: np.ndarray
    times: np.ndarray
    fine_per_coarse: int

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class DiscreteTrajectory:
    states: np.ndarray
    times: np.ndarray
    controls: ControlSequence

    @property
    def endpoint(self) -> np.ndarray:
        return self.states[-1]


class SingularStepError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"one-step matrix at fine node {step} is singular")
        self.step = step


def _require_combination(flow_or_scheme):
    scheme = getattr(flow_or_scheme, "scheme", flow_or_scheme)
    if scheme.family != "combination":
        raise ValueError("adjoint reconstruction is defined for the "
                         "combination schemes")
    return scheme


def _fine_steps(flow: ReachFlow, ring_index: int):
    """One-step matrices, node times and node weights up to ring ring_index."""
    scheme = _require_combination(flow)
    problem = flow.problem
    if not 1 <= ring_index < len(flow.rings):
        raise ValueError("ring index out of range")
    dt = flow.delta_t
    N = scheme.N
    prop = Propagator(scheme.ode, problem)
    phis = []
    node_weights = np.zeros(ring_index * N + 1)
    for k in range(ring_index):
        t_k = problem.t0 + k * dt
        _, summands, step_mats, weights = interval_operators(
            problem, scheme, prop, t_k, dt)
        phis.extend(step_mats)
        node_weights[k * N:k * N + N + 1] += weights
    times = problem.t0 + flow.h * np.arange(ring_index * N + 1)
    return phis, times, node_weights


def terminal_normal(flow: ReachFlow, ring_index: int, k: int) -> np.ndarray:
    """Outer normal at ring vertex k: the direction that selected it.

    The reach direction lies in the vertex's normal cone by the
    supporting-point construction, so it is a valid (and cheap) selection.
    """
    ring = flow.rings[ring_index]
    if ring.R.degeneracy != "full":
        raise ValueError("degenerate ring has no full-dimensional normal cone")
    return flow.grid.directions[k].copy()


def solve_adjoint(flow: ReachFlow, zeta, ring_index: int) -> AdjointPath:
    """Backward product recursion eta_{m} = eta_{m+1} Phi_h over fine nodes."""
    zeta = np.asarray(zeta, dtype=float)
    if np.linalg.norm(zeta) == 0.0:
        raise ValueError("terminal adjoint must be nontrivial")
    phis, times, _ = _fine_steps(flow, ring_index)
    L = len(phis)
    eta = np.empty((L + 1, len(zeta)))
    eta[L] = zeta
    for m in range(L - 1, -1, -1):
        if abs(np.linalg.det(phis[m])) < 1e-14:
            raise SingularStepError(m)
        eta[m] = eta[m + 1] @ phis[m]
    return AdjointPath(eta, zeta, ring_index, times)


def sign_rule(v: np.ndarray) -> np.ndarray:
    """Componentwise signum with sign(0) = 0."""
    return np.sign(v)


def reconstruct_control(path: AdjointPath, problem) -> ControlSequence:
    """Bang-bang controls u_m = sign(eta_m Bbar(t_m)) at every fine node."""
    vals = np.array([sign_rule(path.eta[m] @ problem.Bbar(t))
                     for m, t in enumerate(path.times)])
    n_fine = len(path.times) - 1
    return ControlSequence(vals, path.times.copy(),
                           n_fine // path.ring_index if path.ring_index else n_fine)


def simulate(problem, scheme, controls: ControlSequence,
             flow: ReachFlow | None = None) -> DiscreteTrajectory:
    """Discrete trajectory under the same scheme that built the flow.

    Marches the per-fine-node recursion whose composition over a coarse
    interval reproduces the quadrature form exactly (node weights merge at
    the interval seams because the control there is single-valued).
    """
    _require_combination(scheme)
    L = len(controls.values) - 1
    N = scheme.N
    if L % N != 0:
        raise ValueError("control sequence does not span whole coarse intervals")
    dt = controls.times[N] - controls.times[0] if L >= N else None
    if dt is None or abs((controls.times[-1] - controls.times[0]) - (L // N) * dt) > 1e-9:
        raise ValueError("control node grid does not match the scheme horizon")
    prop = Propagator(scheme.ode, problem)
    h = dt / N
    # Reconstruction is set up for a singleton target (the setting in which
    # the discrete maximum principle is stated).
    if hasattr(problem.S, "vertices"):
        if len(problem.S.vertices) != 1:
            raise ValueError("trajectory simulation requires a singleton target")
        y = problem.S.vertices[0]
    else:
        if problem.S.radius != 0.0:
            raise ValueError("trajectory simulation requires a singleton target")
        y = problem.S.center
    y = np.array(y, dtype=float)
    states = np.empty((L + 1, len(y)))
    states[0] = y
    for k in range(L // N):
        t_k = controls.times[k * N]
        _, _, phis, _ = interval_operators(problem, scheme, prop, t_k, dt)
        for j in range(N):
            m = k * N + j
            u_l = controls.values[m]
            if scheme.rule == "riemann":
                y = phis[j] @ (y + h * (problem.Bbar(controls.times[m]) @ u_l))
            else:
                u_r = controls.values[m + 1]
                y = (phis[j] @ y
                     + 0.5 * h * (phis[j] @ (problem.Bbar(controls.times[m]) @ u_l))
                     + 0.5 * h * (problem.Bbar(controls.times[m + 1]) @ u_r))
            states[m + 1] = y
    return DiscreteTrajectory(states, controls.times.copy(), controls)


def l1_distance(u: ControlSequence, v: ControlSequence) -> float:
    """L1 distance of two piecewise-constant controls on the same grid."""
    if u.values.shape != v.values.shape or not np.allclose(u.times, v.times):
        raise ValueError("control sequences live on different node grids")
    h = u.times[1] - u.times[0]
    return float(h * np.abs(u.values[:-1] - v.values[:-1]).sum())


def maximum_condition(path: AdjointPath, problem, controls: ControlSequence,
                      u_vertices: np.ndarray) -> np.ndarray:
    """Exact node-wise check of eta Bbar u = max_u eta Bbar u."""
    ok = np.empty(len(controls.values), dtype=bool)
    for m, t in enumerate(path.times):
        row = path.eta[m] @ problem.Bbar(t)
        achieved = float(row @ controls.values[m])
        best = float((u_vertices @ row).max())
        ok[m] = achieved == best
    return ok


def count_switches(path: AdjointPath, problem, dead_band: float = 1e-9) -> int:
    """Sign changes of eta Bbar per control component, ignoring a dead band
    around zero (floating-point zero crossings)."""
    rows = np.array([path.eta[m] @ problem.Bbar(t)
                     for m, t in enumerate(path.times)])
    total = 0
    for c in range(rows.shape[1]):
        live = rows[np.abs(rows[:, c]) >= dead_band, c]
        if len(live):
            total += int((np.sign(live[1:]) != np.sign(live[:-1])).sum())
    return total


def normality_rank(problem) -> int:
    """Kalman rank of the (time-invariant) reversed system."""
    A = problem.Abar_const
    B = problem.Bbar_const
    if A is None or B is None:
        raise ValueError("normality check requires constant coefficients")
    return kalman_rank(A, B)
