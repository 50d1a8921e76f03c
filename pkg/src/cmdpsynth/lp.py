"""Dense two-phase primal simplex with Bland's anti-cycling rule.

Small, deterministic and dependency-free apart from numpy: the stage programs
solved by the synthesis code have at most a few hundred rows and columns. The
pivot loop itself lives in :mod:`cmdpsynth.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from cmdpsynth import kernels

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-8

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
STALLED = "stalled"


def _matrix(A, rows, cols, name):
    if A is None:
        return np.zeros((rows, cols))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        A = A.reshape(rows, cols)
    if A.shape != (rows, cols):
        raise ValueError(f"{name} has shape {A.shape}, expected {(rows, cols)}")
    return A


@dataclass
class LinearProgram:
    """``minimize``/``maximize`` ``c @ x`` subject to ``A_eq x = b_eq``, ``A_ub x <= b_ub``
    and ``lower <= x <= upper``, where each lower bound is ``0`` or ``-inf``."""

    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    sense: str = "minimize"
    names: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        nv = self.c.shape[0]
        if self.sense not in ("minimize", "maximize"):
            raise ValueError(f"unknown objective sense {self.sense!r}")
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).ravel()
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, dtype=float).ravel()
        self.A_eq = _matrix(self.A_eq, self.b_eq.shape[0], nv, "A_eq")
        self.A_ub = _matrix(self.A_ub, self.b_ub.shape[0], nv, "A_ub")
        if not (np.all(np.isfinite(self.b_eq)) and np.all(np.isfinite(self.b_ub))):
            raise ValueError("constraint right-hand sides must be finite")
        self.lower = np.zeros(nv) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.full(nv, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if self.lower.shape != (nv,) or self.upper.shape != (nv,):
            raise ValueError("bounds must have one entry per variable")
        if not np.all((self.lower == 0.0) | (self.lower == -np.inf)):
            raise ValueError("lower bounds must be 0 or -inf")
        if np.any(self.upper == -np.inf) or np.any(np.isnan(self.upper)):
            raise ValueError("upper bounds must be finite or +inf")
        if self.names is not None and len(self.names) != nv:
            raise ValueError("names must have one entry per variable")

    @property
    def num_vars(self) -> int:
        return self.c.shape[0]

    def residual(self, x) -> float:
        """Largest constraint or bound violation at ``x``."""
        x = np.asarray(x, dtype=float)
        parts = [0.0]
        if self.b_eq.size:
            parts.append(np.abs(self.A_eq @ x - self.b_eq).max())
        if self.b_ub.size:
            parts.append((self.A_ub @ x - self.b_ub).max())
        parts.append((self.lower - x).max(initial=0.0))
        parts.append((x - self.upper).max(initial=0.0))
        return float(max(parts))


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0
    phase1_objective: float | None = None

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class StandardForm:
    """``minimize c @ z`` subject to ``A z = b``, ``z >= 0``.

    ``pos[j]`` and ``neg[j]`` give the columns carrying the positive and
    negative parts of original variable ``j`` (``neg[j] == -1`` for
    nonnegative variables); the remaining columns are slacks.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    sign: float
    n_slack: int = 0
    slack_rows: list[int] = field(default_factory=list)

    def recover(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        x = z[self.pos].copy()
        free = self.neg >= 0
        x[free] -= z[self.neg[free]]
        return x

    def lift(self, x) -> np.ndarray:
        """Map an original point into standard form (slacks filled from the rows)."""
        x = np.asarray(x, dtype=float)
        z = np.zeros(self.A.shape[1])
        z[self.pos] = np.maximum(x, 0.0)
        free = self.neg >= 0
        z[self.neg[free]] = np.maximum(-x[free], 0.0)
        if self.n_slack:
            k = self.A.shape[1] - self.n_slack
            z[k:] = self.b[self.slack_rows] - self.A[self.slack_rows, :k] @ z[:k]
        return z


def standardize(lp: LinearProgram) -> StandardForm:
    nv = lp.num_vars
    free = lp.lower == -np.inf
    pos = np.arange(nv)
    neg = np.full(nv, -1)
    neg[free] = nv + np.arange(free.sum())
    n_struct = nv + int(free.sum())

    def split(A):
        return np.hstack([A, -A[:, free]])

    bounded = np.flatnonzero(np.isfinite(lp.upper))
    U = np.zeros((bounded.size, nv))
    U[np.arange(bounded.size), bounded] = 1.0
    ub_rows = np.vstack([lp.A_ub, U])
    ub_rhs = np.concatenate([lp.b_ub, lp.upper[bounded]])
    n_eq, n_ub = lp.b_eq.shape[0], ub_rhs.shape[0]

    A = np.zeros((n_eq + n_ub, n_struct + n_ub))
    A[:n_eq, :n_struct] = split(lp.A_eq)
    A[n_eq:, :n_struct] = split(ub_rows)
    A[n_eq:, n_struct:] = np.eye(n_ub)
    b = np.concatenate([lp.b_eq, ub_rhs])
    sign = -1.0 if lp.sense == "maximize" else 1.0
    c = np.zeros(n_struct + n_ub)
    c[:nv] = sign * lp.c
    c[nv:n_struct] = -sign * lp.c[free]
    return StandardForm(A, b, c, pos, neg, sign, n_ub, list(range(n_eq, n_eq + n_ub)))


class _Trace:
    def __init__(self, stream, phase, basis):
        self.stream, self.phase, self.basis = stream, phase, basis

    def __call__(self, it, q, p, step):
        self.stream.write(
            f"phase={self.phase} iter={it} enter={q} leave_row={p} "
            f"leave_var={int(self.basis[p])} step={step!r}\n"
        )


def solve(
    lp: LinearProgram,
    pivot_tol: float = PIVOT_TOL,
    feas_tol: float = FEAS_TOL,
    max_iter: int | None = None,
    debug=None,
) -> LpSolution:
    """Solve ``lp``. ``debug`` may be a text stream receiving one line per pivot."""
    sf = standardize(lp)
    A, b, c = sf.A.copy(), sf.b.copy(), sf.c
    m, nv = A.shape
    if max_iter is None:
        max_iter = 50 * (m + nv)

    empty = ~np.any(A != 0.0, axis=1)
    if np.any(np.abs(b[empty]) > feas_tol):
        return LpSolution(INFEASIBLE, phase1_objective=float(np.abs(b[empty]).sum()))
    A, b = A[~empty], b[~empty]
    m = A.shape[0]
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # phase 1: artificial identity basis, minimize the sum of artificials
    T = np.zeros((m + 1, nv + m + 1))
    T[:m, :nv] = A
    T[:m, nv:nv + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :nv] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = np.arange(nv, nv + m, dtype=np.int64)
    trace = _Trace(debug, 1, basis) if debug is not None else None
    status, it1 = kernels.simplex_iterate(T, basis, nv, max_iter, pivot_tol, feas_tol * 1e-2, trace)
    if status != kernels.OPTIMAL:
        return LpSolution(STALLED, iterations=it1)
    phase1 = -T[m, -1]
    if phase1 > feas_tol:
        return LpSolution(INFEASIBLE, iterations=it1, phase1_objective=float(phase1))

    # drive remaining artificials out of the basis; rows where that is impossible are redundant
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] < nv:
            continue
        cand = np.flatnonzero(np.abs(T[i, :nv]) > pivot_tol)
        if cand.size:
            kernels.pivot(T, i, int(cand[0]))
            basis[i] = cand[0]
        else:
            keep[i] = False
    rows = np.flatnonzero(keep)
    T = np.ascontiguousarray(np.vstack([T[rows][:, list(range(nv)) + [nv + m]], np.zeros((1, nv + 1))]))
    basis = np.ascontiguousarray(basis[rows])
    A, b = A[rows], b[rows]
    m = rows.size

    # phase 2
    cb = c[basis]
    T[m, :nv] = c - cb @ T[:m, :nv]
    T[m, -1] = -cb @ T[:m, -1]
    trace = _Trace(debug, 2, basis) if debug is not None else None
    status, it2 = kernels.simplex_iterate(T, basis, nv, max_iter, pivot_tol, feas_tol * 1e-2, trace)
    iterations = it1 + it2
    if status == kernels.UNBOUNDED:
        return LpSolution(UNBOUNDED, iterations=iterations, phase1_objective=float(phase1))
    if status != kernels.OPTIMAL:
        return LpSolution(STALLED, iterations=iterations, phase1_objective=float(phase1))

    z = np.zeros(nv)
    z[basis] = T[:m, -1]
    z = _polish(A, b, basis, z, feas_tol)
    x = sf.recover(z)
    return LpSolution(OPTIMAL, x, float(lp.c @ x), iterations, float(phase1))


def _polish(A, b, basis, z, feas_tol):
    """Recompute the basic solution from the original data to shed tableau round-off."""
    if basis.size == 0:
        return z
    B = A[:, basis]
    try:
        zb = np.linalg.solve(B, b)
    except np.linalg.LinAlgError:
        return np.maximum(z, 0.0)
    if not np.all(np.isfinite(zb)) or zb.min() < -feas_tol:
        return np.maximum(z, 0.0)
    out = np.zeros_like(z)
    out[basis] = np.maximum(zb, 0.0)
    old = np.abs(A @ np.maximum(z, 0.0) - b).max(initial=0.0)
    new = np.abs(A @ out - b).max(initial=0.0)
    return out if new <= old else np.maximum(z, 0.0)
