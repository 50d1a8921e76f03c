"""Backward induction under hard density caps.

Each stage picks the randomized decision rule that maximizes the worst-case
reward-to-go over every admissible density, restricted to rules whose
transition matrix keeps every admissible density admissible. Both the inner
minimization over densities and the invariance condition on the transition
matrix are replaced by their LP duals, so a stage is one linear program in the
policy entries and a set of auxiliary multipliers:

    maximize    -d.y + z
    subject to  M = sum_k G_k * (1 (Q e_k)^T)          (transition matrix of Q)
                r = (R * Q) 1                          (expected stage reward)
                -y + z 1 <= r + M^T u_next             (dual of min over densities)
                K = M + S + s 1^T,  s + d >= K d       (M maps the safe set into x <= d)
                Q 1 = 1,  Q >= 0,  y >= 0,  S >= 0,  K >= 0

The optimal value lower-bounds the constrained optimum from any admissible
start, and the value vectors computed along the way are exactly the value of
the returned policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cmdpsynth import lp as lpsolve
from cmdpsynth.lp import LinearProgram
from cmdpsynth.model import ConstraintSpec, MdpModel, Policy, StageValues
from cmdpsynth.unconstrained import backward_induction

_BLOCKS = ("Q", "y", "z", "r", "M", "S", "s", "K")
_FREE = {"z", "r", "M", "s"}


class SynthesisError(RuntimeError):
    pass


class InfeasibleStageError(SynthesisError):
    """No decision rule at ``stage`` keeps the safe density set invariant."""

    def __init__(self, stage: int, certificate: float | None):
        self.stage = stage
        self.certificate = certificate
        super().__init__(
            f"stage {stage} (epoch {stage + 1}) is infeasible: no decision rule keeps every "
            f"admissible density within the caps (phase-1 residual {certificate!r}); "
            "consider relaxing d"
        )


@dataclass(frozen=True, eq=False)
class StageLpLayout:
    """Column ranges of each variable block and row ranges of each constraint block."""

    n: int
    p: int
    d: np.ndarray
    columns: dict[str, slice]
    eq_rows: dict[str, slice]
    ub_rows: dict[str, slice]

    @property
    def width(self) -> int:
        return self.columns["K"].stop

    def block(self, x, name) -> np.ndarray:
        v = np.asarray(x)[self.columns[name]]
        shapes = {"Q": (self.n, self.p), "M": (self.n, self.n), "S": (self.n, self.n), "K": (self.n, self.n)}
        return v.reshape(shapes[name]) if name in shapes else v

    def objective(self, x) -> float:
        return float(-self.d @ self.block(x, "y") + self.block(x, "z")[0])

    def policy_rows(self, x, mask) -> np.ndarray:
        """Decision rule carried by an LP point, cleaned to an exact row-stochastic matrix."""
        Q = np.where(mask, np.maximum(self.block(x, "Q"), 0.0), 0.0)
        return Q / Q.sum(axis=1, keepdims=True)


def _layout(n, p, mask, d) -> StageLpLayout:
    sizes = {"Q": n * p, "y": n, "z": 1, "r": n, "M": n * n, "S": n * n, "s": n, "K": n * n}
    columns, start = {}, 0
    for name in _BLOCKS:
        columns[name] = slice(start, start + sizes[name])
        start += sizes[name]
    eq_sizes = [("M", n * n), ("r", n), ("K", n * n), ("rowsum", n), ("mask", int((~mask).sum()))]
    eq_rows, start = {}, 0
    for name, size in eq_sizes:
        eq_rows[name] = slice(start, start + size)
        start += size
    ub_rows = {"dual": slice(0, n), "safety": slice(n, 2 * n)}
    return StageLpLayout(n, p, np.asarray(d, dtype=float), columns, eq_rows, ub_rows)


def assemble_M(model: MdpModel, t: int, Q) -> np.ndarray:
    """Transition matrix of decision rule ``Q`` at stage ``t``: ``M[i, j] = sum_k G[k][i, j] Q[j, k]``."""
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (model.n, model.p):
        raise ValueError(f"decision rule has shape {Q.shape}, expected {(model.n, model.p)}")
    return np.einsum("kij,jk->ij", model.G(t), Q)


def assemble_r(model: MdpModel, t: int, Q) -> np.ndarray:
    """Expected stage reward per state under decision rule ``Q``."""
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (model.n, model.p):
        raise ValueError(f"decision rule has shape {Q.shape}, expected {(model.n, model.p)}")
    return (model.R(t) * Q).sum(axis=1)


def stage_value(model: MdpModel, t: int, Q, u_next) -> np.ndarray:
    """Reward-to-go of following ``Q`` at stage ``t`` and then earning ``u_next``."""
    return assemble_r(model, t, Q) + assemble_M(model, t, Q).T @ u_next


def build_stage_lp(
    model: MdpModel, constraint: ConstraintSpec, t: int, u_next
) -> tuple[LinearProgram, StageLpLayout]:
    n, p = model.n, model.p
    d = constraint.d
    u_next = np.asarray(u_next, dtype=float)
    if constraint.n != n or u_next.shape != (n,):
        raise ValueError("constraint and value vector must match the model's state count")
    mask = model.action_mask
    L = _layout(n, p, mask, d)
    col = L.columns
    G, R = model.G(t), model.R(t)
    width = L.width
    nn = np.arange(n)

    def qcol(s, a):
        return col["Q"].start + s * p + a

    def mcol(name, i, j):
        return col[name].start + i * n + j

    A_eq = np.zeros((L.eq_rows["mask"].stop, width))
    b_eq = np.zeros(A_eq.shape[0])
    # M[i, j] - sum_k G[k][i, j] Q[j, k] = 0
    for i in range(n):
        for j in range(n):
            row = L.eq_rows["M"].start + i * n + j
            A_eq[row, mcol("M", i, j)] = 1.0
            A_eq[row, qcol(j, 0):qcol(j, 0) + p] = -G[:, i, j]
    # r[s] - sum_a R[s, a] Q[s, a] = 0
    for s in range(n):
        row = L.eq_rows["r"].start + s
        A_eq[row, col["r"].start + s] = 1.0
        A_eq[row, qcol(s, 0):qcol(s, 0) + p] = -R[s]
    # K[i, j] - M[i, j] - S[i, j] - s[i] = 0
    for i in range(n):
        for j in range(n):
            row = L.eq_rows["K"].start + i * n + j
            A_eq[row, mcol("K", i, j)] = 1.0
            A_eq[row, mcol("M", i, j)] = -1.0
            A_eq[row, mcol("S", i, j)] = -1.0
            A_eq[row, col["s"].start + i] = -1.0
    # Q 1 = 1
    for s in range(n):
        row = L.eq_rows["rowsum"].start + s
        A_eq[row, qcol(s, 0):qcol(s, 0) + p] = 1.0
        b_eq[row] = 1.0
    # masked actions carry no probability
    for row, (s, a) in zip(range(L.eq_rows["mask"].start, L.eq_rows["mask"].stop), zip(*np.nonzero(~mask))):
        A_eq[row, qcol(s, a)] = 1.0

    A_ub = np.zeros((2 * n, width))
    b_ub = np.zeros(2 * n)
    # -y[i] + z - r[i] - sum_j M[j, i] u_next[j] <= 0
    dual = L.ub_rows["dual"].start + nn
    A_ub[dual, col["y"].start + nn] = -1.0
    A_ub[dual, col["z"].start] = 1.0
    A_ub[dual, col["r"].start + nn] = -1.0
    for i in range(n):
        A_ub[dual[i], [mcol("M", j, i) for j in range(n)]] = -u_next
    # sum_j K[i, j] d[j] - s[i] <= d[i]
    safety = L.ub_rows["safety"].start + nn
    for i in range(n):
        A_ub[safety[i], mcol("K", i, 0):mcol("K", i, 0) + n] = d
    A_ub[safety, col["s"].start + nn] = -1.0
    b_ub[safety] = d

    c = np.zeros(width)
    c[col["y"]] = -d
    c[col["z"]] = 1.0
    lower = np.zeros(width)
    for name in _FREE:
        lower[col[name]] = -np.inf
    names = [f"{name}[{k}]" for name in _BLOCKS for k in range(col[name].stop - col[name].start)]
    lp = LinearProgram(c, A_eq, b_eq, A_ub, b_ub, lower=lower, sense="maximize", names=names)
    return lp, L


def _solve_stage(lp, t, **solver):
    sol = lpsolve.solve(lp, **solver)
    if sol.status == lpsolve.INFEASIBLE:
        raise InfeasibleStageError(t, sol.phase1_objective)
    if not sol.optimal:
        raise SynthesisError(f"stage {t}: stage program is {sol.status}")
    return sol


def synthesize(model: MdpModel, constraint: ConstraintSpec, **solver) -> tuple[Policy, StageValues]:
    """Constrained backward induction. Keyword arguments are passed to :func:`cmdpsynth.lp.solve`."""
    N, n = model.horizon, model.n
    u = np.empty((N, n))
    u[N - 1] = model.terminal_reward
    stages = np.empty((N - 1, n, model.p))
    objectives = np.empty(N - 1)
    for t in range(N - 2, -1, -1):
        lp, layout = build_stage_lp(model, constraint, t, u[t + 1])
        sol = _solve_stage(lp, t, **solver)
        stages[t] = layout.policy_rows(sol.x, model.action_mask)
        objectives[t] = sol.objective
        u[t] = stage_value(model, t, stages[t], u[t + 1])
    return Policy(stages, "randomized"), StageValues(u, objectives, constraint.d)


def lower_bound(values: StageValues, x1, tol: float = 1e-9) -> float:
    """Guaranteed expected total reward from start distribution ``x1``."""
    x1 = np.asarray(x1, dtype=float)
    n = values.u.shape[1]
    d = values.d if values.d is not None else np.ones(n)
    if x1.shape != (n,):
        raise ValueError(f"start distribution must have {n} entries")
    if np.any(x1 < -tol) or np.any(x1 > d + tol) or abs(x1.sum() - 1.0) > tol:
        raise ValueError("start distribution is outside the admissible density set")
    return float(x1 @ values.u[0])


def project_stage(
    model: MdpModel, constraint: ConstraintSpec, t: int, u_next, maximin_value: float, Q_target, **solver
) -> np.ndarray:
    """Among (near-)optimal decision rules of the stage program, the one closest to ``Q_target`` in entrywise L1."""
    lp, L = build_stage_lp(model, constraint, t, u_next)
    n, p = model.n, model.p
    width = lp.num_vars
    k = n * p
    Qt = np.asarray(Q_target, dtype=float).ravel()
    eps = 1e-7 * (1.0 + abs(maximin_value))

    # extra columns w >= |Q - Q_target|
    A_eq = np.hstack([lp.A_eq, np.zeros((lp.A_eq.shape[0], k))])
    A_ub = np.zeros((lp.A_ub.shape[0] + 2 * k + 1, width + k))
    A_ub[: lp.A_ub.shape[0], :width] = lp.A_ub
    rows = lp.A_ub.shape[0] + np.arange(k)
    qcols = L.columns["Q"].start + np.arange(k)
    A_ub[rows, qcols] = 1.0
    A_ub[rows, width + np.arange(k)] = -1.0
    A_ub[rows + k, qcols] = -1.0
    A_ub[rows + k, width + np.arange(k)] = -1.0
    # keep the maximin objective within eps of its optimum
    A_ub[-1, :width] = -lp.c
    b_ub = np.concatenate([lp.b_ub, Qt, -Qt, [-(maximin_value - eps)]])
    c = np.concatenate([np.zeros(width), np.ones(k)])
    lower = np.concatenate([lp.lower, np.zeros(k)])
    proj = LinearProgram(c, A_eq, lp.b_eq, A_ub, b_ub, lower=lower, sense="minimize")
    sol = lpsolve.solve(proj, **solver)
    if not sol.optimal:
        raise SynthesisError(f"stage {t}: projection program is {sol.status}")
    return L.policy_rows(sol.x[:width], model.action_mask)


def synthesize_projected(
    model: MdpModel, constraint: ConstraintSpec, **solver
) -> tuple[Policy, StageValues]:
    """Constrained backward induction that, at every stage, prefers the optimal
    decision rule closest to the unconstrained optimal policy."""
    target, _ = backward_induction(model)
    N, n = model.horizon, model.n
    u = np.empty((N, n))
    u[N - 1] = model.terminal_reward
    stages = np.empty((N - 1, n, model.p))
    objectives = np.empty(N - 1)
    for t in range(N - 2, -1, -1):
        lp, _ = build_stage_lp(model, constraint, t, u[t + 1])
        sol = _solve_stage(lp, t, **solver)
        objectives[t] = sol.objective
        stages[t] = project_stage(model, constraint, t, u[t + 1], sol.objective, target.stages[t], **solver)
        u[t] = stage_value(model, t, stages[t], u[t + 1])
    return Policy(stages, "randomized"), StageValues(u, objectives, constraint.d)
