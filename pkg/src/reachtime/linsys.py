"""Control problem definitions, time reversal and one-step propagators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Ball, ConvexPolytope


def _matrix_fn(M):
    """Normalize a constant matrix or callable t -> matrix to (fn, const)."""
    if callable(M):
        return (lambda t: np.asarray(M(t), dtype=float)), None
    arr = np.asarray(M, dtype=float)
    return (lambda t: arr), arr


def _set_dim(X) -> int:
    return X.n


@dataclass
class LinearProblem:
    """Linear control dynamics xdot = A(t) x + B(t) u, u in U, target S.

    A and B may be constant arrays or callables of t; callables must be
    re-entrant since they are evaluated concurrently at quadrature nodes.
    """

    A: object
    B: object
    U: object
    S: object
    t0: float
    tf: float

    def __post_init__(self):
        if not self.t0 < self.tf:
            raise ValueError("horizon must satisfy t0 < tf")
        self.A_fn, self.A_const = _matrix_fn(self.A)
        self.B_fn, self.B_const = _matrix_fn(self.B)
        self.n = _set_dim(self.S)
        self.m = _set_dim(self.U)


@dataclass
class ReversedProblem:
    """Time-reversed system Abar(t) = -A(t0+tf-t), Bbar(t) = -B(t0+tf-t).

    Reachable sets of this system, started inside the target, are the
    backward reachable sets of the original problem.
    """

    Abar_fn: object
    Bbar_fn: object
    U: object
    S: object
    t0: float
    tf: float
    Abar_const: np.ndarray | None = None
    Bbar_const: np.ndarray | None = None

    def __post_init__(self):
        self.n = _set_dim(self.S)
        self.m = _set_dim(self.U)

    def Abar(self, t: float) -> np.ndarray:
        return self.Abar_fn(t)

    def Bbar(self, t: float) -> np.ndarray:
        return self.Bbar_fn(t)

    @staticmethod
    def from_matrices(Abar, Bbar, U, S, t0: float, tf: float) -> "ReversedProblem":
        """Build directly from propagation dynamics (already reversed)."""
        a_fn, a_const = _matrix_fn(Abar)
        b_fn, b_const = _matrix_fn(Bbar)
        return ReversedProblem(a_fn, b_fn, U, S, t0, tf, a_const, b_const)


def reverse(problem: LinearProblem) -> ReversedProblem:
    """Time reversal of a linear problem over its own horizon."""
    t0, tf = problem.t0, problem.tf
    a_fn = problem.A_fn
    b_fn = problem.B_fn
    abar = (lambda t: -a_fn(t0 + tf - t))
    bbar = (lambda t: -b_fn(t0 + tf - t))
    a_const = None if problem.A_const is None else -problem.A_const
    b_const = None if problem.B_const is None else -problem.B_const
    return ReversedProblem(abar, bbar, problem.U, problem.S, t0, tf,
                           a_const, b_const)


@dataclass
class NonlinearProblem:
    """Nonlinear propagation dynamics ydot = f(y, u) started in the target.

    f is the already time-reversed right-hand side and must be re-entrant.
    Only valid for systems whose reachable sets stay convex.
    """

    f: object
    U: object
    S: object
    t0: float
    tf: float

    def __post_init__(self):
        self.n = _set_dim(self.S)
        self.m = _set_dim(self.U)


def taylor_expm(M: np.ndarray) -> np.ndarray:
    """Scaling-and-squaring Taylor exponential, accurate to ~1e-14."""
    M = np.asarray(M, dtype=float)
    norm = np.abs(M).sum(axis=1).max()
    s = max(0, int(np.ceil(np.log2(norm / 0.25))) if norm > 0.25 else 0)
    A = M / (2.0 ** s)
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, 24):
        term = term @ A / k
        out = out + term
        if np.abs(term).max() < 1e-17:
            break
    for _ in range(s):
        out = out @ out
    return out


def expm_2x2(M) -> np.ndarray:
    """Matrix exponential of a real 2x2 matrix.

    Eigendecomposition when well conditioned, scaling-and-squaring Taylor
    as the defective-case fallback.
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (2, 2):
        raise ValueError("expm_2x2 expects a 2x2 matrix")
    if np.abs(M).max() == 0.0:
        return np.eye(2)
    w, V = np.linalg.eig(M)
    if np.linalg.cond(V) < 1e6:
        out = (V * np.exp(w)) @ np.linalg.inv(V)
        return np.real(out)
    return taylor_expm(M)


class Propagator:
    """One-step fundamental-matrix approximations Phi_h(t+h, t).

    Methods: "euler" (order 1), "heun" (order 2), "exact" (matrix
    exponential; constant Abar only).  Multi-step transition matrices are
    products of one-step matrices, so the semigroup property holds by
    construction.
    """

    def __init__(self, method: str, problem: ReversedProblem):
        if method not in ("euler", "heun", "exact"):
            raise ValueError(f"unknown propagator method {method!r}")
        if method == "exact" and problem.Abar_const is None:
            raise ValueError("exact propagator requires constant Abar")
        self.method = method
        self.problem = problem
        self._cache: dict[float, np.ndarray] = {}

    def step(self, t: float, h: float) -> np.ndarray:
        if h <= 0:
            raise ValueError("step size must be positive")
        n = self.problem.n
        eye = np.eye(n)
        if self.method == "exact":
            mat = self._cache.get(h)
            if mat is None:
                A = self.problem.Abar_const
                mat = expm_2x2(h * A) if n == 2 else taylor_expm(h * A)
                self._cache[h] = mat
            return mat
        A0 = self.problem.Abar(t)
        if self.method == "euler":
            return eye + h * A0
        A1 = self.problem.Abar(t + h)
        return eye + 0.5 * h * (A0 + A1) + 0.5 * h * h * (A1 @ A0)


def phi_step(prop: Propagator, t: float, h: float) -> np.ndarray:
    """One-step transition matrix Phi_h(t+h, t)."""
    return prop.step(t, h)


def kalman_rank(A, B) -> int:
    """Rank of the controllability matrix [B, AB, ..., A^(n-1)B]."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return int(np.linalg.matrix_rank(np.hstack(blocks)))
