"""Exact density propagation, reward evaluation and Monte Carlo rollouts.

Random draws come from numpy's Philox4x64 counter-based generator keyed by the
seed. Monte Carlo rollout ``r`` consumes row ``r`` of a ``(rollouts, 2N - 1)``
block of uniforms (start state, then an action and a successor draw per
epoch), so a rollout's draws depend only on the seed and its index. Categorical
draws use inverse CDF on left-to-right cumulative sums.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from cmdpsynth import kernels
from cmdpsynth.constrained import assemble_M, assemble_r
from cmdpsynth.model import ConstraintSpec, MdpModel, Policy

VIOLATION_TOL = 1e-8
_CHUNK = 1 << 14


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed)))


@dataclass(frozen=True, eq=False)
class DensityTrajectory:
    x: np.ndarray
    violations: list[tuple[int, int, float, float]] = field(default_factory=list)

    def violation_counts(self) -> np.ndarray:
        counts = np.zeros(self.x.shape[0], dtype=int)
        for t, *_ in self.violations:
            counts[t] += 1
        return counts


def _check_inputs(model: MdpModel, policy: Policy, x1) -> np.ndarray:
    x1 = np.asarray(x1, dtype=float)
    if x1.shape != (model.n,):
        raise ValueError(f"start distribution has {x1.shape} entries, model has {model.n} states")
    if policy.stages.shape != (model.epochs, model.n, model.p):
        raise ValueError(
            f"policy shape {policy.stages.shape} does not match model {(model.epochs, model.n, model.p)}"
        )
    if np.any(x1 < 0) or abs(x1.sum() - 1.0) > 1e-9:
        raise ValueError("start distribution must be nonnegative and sum to 1")
    return x1


def propagate(
    model: MdpModel, policy: Policy, x1, constraint: ConstraintSpec | None = None
) -> DensityTrajectory:
    """State distributions ``x[0..N-1]`` under ``policy``; caps in ``constraint`` are audited."""
    x1 = _check_inputs(model, policy, x1)
    x = np.empty((model.horizon, model.n))
    x[0] = x1
    for t in range(model.epochs):
        x[t + 1] = assemble_M(model, t, policy.stages[t]) @ x[t]
    violations = []
    if constraint is not None:
        over = x > constraint.d + VIOLATION_TOL
        violations = [(int(t), int(s), float(x[t, s]), float(constraint.d[s])) for t, s in zip(*np.nonzero(over))]
    return DensityTrajectory(x, violations)


def stage_rewards(model: MdpModel, policy: Policy, x1) -> np.ndarray:
    """Expected reward collected at each of the ``N`` stages (the last is terminal)."""
    x = propagate(model, policy, x1).x
    out = np.empty(model.horizon)
    for t in range(model.epochs):
        out[t] = x[t] @ assemble_r(model, t, policy.stages[t])
    out[-1] = x[-1] @ model.terminal_reward
    return out


def expected_reward(model: MdpModel, policy: Policy, x1) -> float:
    return float(stage_rewards(model, policy, x1).sum())


def _cdf(p, axis=-1):
    """Cumulative sums whose tail from the last positive entry on is ``inf``, so that
    ``u < cdf`` has a first hit for every ``u`` in ``[0, 1)`` despite round-off."""
    p = np.asarray(p, dtype=float)
    cdf = np.cumsum(p, axis=axis)
    positive = p > 0
    last = p.shape[axis] - 1 - np.argmax(np.flip(positive, axis=axis), axis=axis)
    idx = np.arange(p.shape[axis]).reshape([-1 if a == (axis % p.ndim) else 1 for a in range(p.ndim)])
    cdf[idx >= np.expand_dims(last, axis)] = np.inf
    return np.ascontiguousarray(cdf)


def monte_carlo(
    model: MdpModel, policy: Policy, x1, rollouts: int, seed: int
) -> tuple[float, float]:
    """Sample-mean total reward over ``rollouts`` trajectories and its standard error."""
    x1 = _check_inputs(model, policy, x1)
    if rollouts < 1:
        raise ValueError("rollouts must be at least 1")
    cum_x1 = _cdf(x1)
    cum_q = _cdf(policy.stages).reshape(model.epochs, model.n, model.p)
    # G[t][k][i, j] -> per (t, k, j) distribution over the next state i
    cum_g = _cdf(np.swapaxes(model.transition_stages(), -1, -2)).reshape(model.epochs, model.p, model.n, model.n)
    rewards = np.ascontiguousarray(model.reward_stages(), dtype=float).reshape(model.epochs, model.n, model.p)
    terminal = np.ascontiguousarray(model.terminal_reward)

    rng = _rng(seed)
    width = 2 * model.horizon - 1
    totals = np.empty(rollouts)
    for start in range(0, rollouts, _CHUNK):
        stop = min(start + _CHUNK, rollouts)
        u = rng.random((stop - start, width))
        totals[start:stop] = kernels.rollouts(cum_x1, cum_q, cum_g, rewards, terminal, u)
    mean = float(totals.mean())
    stderr = float(totals.std(ddof=1) / np.sqrt(rollouts)) if rollouts > 1 else 0.0
    return mean, stderr


def sample_feasible_density(constraint: ConstraintSpec, seed: int) -> np.ndarray:
    """Random point of ``{x : 0 <= x <= d, sum(x) = 1}``.

    A uniform simplex sample is clipped to the caps and the clipped mass is handed
    to coordinates with spare room, in proportion to that room.
    """
    d = constraint.d
    x = _rng(seed).dirichlet(np.ones(d.shape[0]))
    excess = np.maximum(x - d, 0.0).sum()
    if excess > 0.0:
        x = np.minimum(x, d)
        room = d - x
        # sum(d) >= 1 guarantees room.sum() >= excess, so one pass never overshoots a cap
        x = x + excess * (room / room.sum())
        # close the sum exactly on the coordinate with the most spare room
        k = int(np.argmax(room))
        x[k] = 1.0 - (x.sum() - x[k])
    return np.clip(x, 0.0, d)


# -- CSV -------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(path, trajectory: DensityTrajectory) -> None:
    counts = trajectory.violation_counts()
    n = trajectory.x.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + ["violation_count"])
        for t, row in enumerate(trajectory.x):
            w.writerow([t + 1] + [_fmt(v) for v in row] + [int(counts[t])])


def write_reward_csv(path, curves: dict[str, np.ndarray | None], lower_bound: float | None, horizon: int) -> None:
    """Cumulative expected reward per stage for each policy; missing curves are left blank."""
    cols = ["unconstrained", "constrained", "projected"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"cum_reward_{c}" for c in cols] + ["lower_bound"])
        for t in range(horizon):
            row = [t + 1]
            for c in cols:
                curve = curves.get(c)
                row.append("" if curve is None else _fmt(curve[t]))
            row.append("" if lower_bound is None else _fmt(lower_bound))
            w.writerow(row)
