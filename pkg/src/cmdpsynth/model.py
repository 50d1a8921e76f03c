"""Problem data for finite-horizon MDPs with per-state density caps.

Conventions used throughout the package:

* Transition matrices are **column-stochastic**: ``G[k][i, j]`` is the
  probability of moving *to* state ``i`` *from* state ``j`` under action ``k``,
  so a state distribution evolves as ``x_next = M @ x``. Most MDP code uses the
  row-stochastic transpose; convert before constructing a model.
* States, actions and stages are zero-based. Stage ``t`` (``0 <= t < N - 1``)
  is the ``(t + 1)``-th decision epoch; a horizon-``N`` problem has ``N - 1``
  decision epochs followed by a terminal reward.
* Stationary data may be stored once: a ``(p, n, n)`` transition tensor or an
  ``(n, p)`` reward matrix is reused for every stage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

TRANSITION_TOL = 1e-12
POLICY_TOL = 1e-9


class ModelFormatError(ValueError):
    """A model or policy file could not be parsed into the expected structure."""


class ConstraintError(ValueError):
    """Density caps outside ``[0, 1]`` or with an empty safe set."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MdpModel:
    transitions: np.ndarray
    rewards: np.ndarray
    terminal_reward: np.ndarray
    horizon: int
    action_mask: np.ndarray | None = None
    discount: float = 1.0

    def __post_init__(self):
        G = _frozen(self.transitions)
        R = _frozen(self.rewards)
        r_n = _frozen(self.terminal_reward)
        if r_n.ndim != 1:
            raise ValueError("terminal_reward must be a vector")
        n = r_n.shape[0]
        if int(self.horizon) != self.horizon:
            raise ValueError("horizon must be an integer")
        epochs = int(self.horizon) - 1
        if G.ndim == 3:
            p = G.shape[0]
        elif G.ndim == 4:
            if G.shape[0] != max(epochs, 0):
                raise ValueError(f"expected {epochs} transition stages, got {G.shape[0]}")
            p = G.shape[1]
        else:
            raise ValueError("transitions must have shape (p, n, n) or (N-1, p, n, n)")
        if G.shape[-2:] != (n, n):
            raise ValueError(f"transition matrices must be {n}x{n}, got {G.shape[-2:]}")
        if R.ndim == 3:
            if R.shape[0] != max(epochs, 0):
                raise ValueError(f"expected {epochs} reward stages, got {R.shape[0]}")
        elif R.ndim != 2:
            raise ValueError("rewards must have shape (n, p) or (N-1, n, p)")
        if R.shape[-2:] != (n, p):
            raise ValueError(f"rewards must be {n}x{p}, got {R.shape[-2:]}")
        if self.action_mask is None:
            mask = _frozen(np.ones((n, p)), dtype=bool)
        else:
            mask = _frozen(self.action_mask, dtype=bool)
            if mask.shape != (n, p):
                raise ValueError(f"action_mask must be {n}x{p}, got {mask.shape}")
        object.__setattr__(self, "transitions", G)
        object.__setattr__(self, "rewards", R)
        object.__setattr__(self, "terminal_reward", r_n)
        object.__setattr__(self, "action_mask", mask)
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def n(self) -> int:
        return self.terminal_reward.shape[0]

    @property
    def p(self) -> int:
        return self.action_mask.shape[1]

    @property
    def epochs(self) -> int:
        return self.horizon - 1

    @property
    def stationary(self) -> bool:
        return self.transitions.ndim == 3 and self.rewards.ndim == 2

    def G(self, t: int) -> np.ndarray:
        """Transition tensor ``(p, n, n)`` used at stage ``t``."""
        self._check_stage(t)
        return self.transitions if self.transitions.ndim == 3 else self.transitions[t]

    def R(self, t: int) -> np.ndarray:
        """Reward matrix ``(n, p)`` used at stage ``t``."""
        self._check_stage(t)
        return self.rewards if self.rewards.ndim == 2 else self.rewards[t]

    def transition_stages(self) -> np.ndarray:
        """All stages as an ``(N-1, p, n, n)`` array (a broadcast view when stationary)."""
        if self.transitions.ndim == 4:
            return self.transitions
        return np.broadcast_to(self.transitions, (self.epochs,) + self.transitions.shape)

    def reward_stages(self) -> np.ndarray:
        if self.rewards.ndim == 3:
            return self.rewards
        return np.broadcast_to(self.rewards, (self.epochs,) + self.rewards.shape)

    def _check_stage(self, t):
        if not 0 <= t < self.epochs:
            raise IndexError(f"stage {t} outside 0..{self.epochs - 1}")


@dataclass(frozen=True, eq=False)
class ConstraintSpec:
    """Per-state density caps ``d``; the safe set is ``{x : 0 <= x <= d, sum(x) = 1}``."""

    d: np.ndarray

    def __post_init__(self):
        d = _frozen(self.d)
        if d.ndim != 1:
            raise ConstraintError("d must be a vector")
        if not np.all(np.isfinite(d)) or np.any(d < 0) or np.any(d > 1):
            raise ConstraintError("density caps must lie in [0, 1]")
        if d.sum() < 1.0 - TRANSITION_TOL:
            raise ConstraintError(f"caps sum to {d.sum():.6g} < 1: the safe set is empty")
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @classmethod
    def vacuous(cls, n: int) -> ConstraintSpec:
        return cls(np.ones(n))

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return (
            x.shape == self.d.shape
            and bool(np.all(x >= -tol))
            and bool(np.all(x <= self.d + tol))
            and abs(x.sum() - 1.0) <= tol
        )


@dataclass(frozen=True, eq=False)
class Policy:
    """Markov policy: ``stages[t][s, a]`` is the probability of action ``a`` in state ``s`` at stage ``t``."""

    stages: np.ndarray
    kind: str = "randomized"

    def __post_init__(self):
        Q = _frozen(self.stages)
        if Q.ndim != 3:
            raise ValueError("policy stages must have shape (N-1, n, p)")
        if self.kind not in ("deterministic", "randomized"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        object.__setattr__(self, "stages", Q)

    @classmethod
    def from_actions(cls, actions, p: int) -> Policy:
        """Deterministic policy from an ``(N-1, n)`` array of action indices."""
        actions = np.asarray(actions, dtype=int)
        if actions.ndim != 2:
            raise ValueError("actions must have shape (N-1, n)")
        return cls(np.eye(p)[actions], kind="deterministic")

    @property
    def epochs(self) -> int:
        return self.stages.shape[0]

    def check(self, model: MdpModel, tol: float = POLICY_TOL) -> None:
        """Raise ``ValueError`` unless this policy is a valid decision sequence for ``model``."""
        expected = (model.epochs, model.n, model.p)
        if self.stages.shape != expected:
            raise ValueError(f"policy shape {self.stages.shape} does not match model {expected}")
        if np.any(self.stages < -tol):
            raise ValueError("policy has negative probabilities")
        rows = np.abs(self.stages.sum(axis=2) - 1.0)
        if rows.size and rows.max() > tol:
            t, s = np.unravel_index(rows.argmax(), rows.shape)
            raise ValueError(f"policy row (t={t}, s={s}) sums to {self.stages[t, s].sum()!r}")
        if np.any(np.abs(self.stages[:, ~model.action_mask]) > tol):
            raise ValueError("policy puts mass on a masked action")
        if self.kind == "deterministic" and not np.all(
            (self.stages == 0.0) | (self.stages == 1.0)
        ):
            raise ValueError("deterministic policy has non 0/1 entries")


@dataclass(frozen=True, eq=False)
class StageValues:
    """Reward-to-go vectors ``u[t]`` for ``t = 0..N-1`` (``u[N-1]`` is the terminal reward),
    the optimal value of every stage program, and the caps ``d`` they were computed for."""

    u: np.ndarray
    maximin_objectives: np.ndarray
    d: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "u", _frozen(self.u))
        object.__setattr__(self, "maximin_objectives", _frozen(self.maximin_objectives))
        if self.d is not None:
            object.__setattr__(self, "d", _frozen(self.d))


@dataclass
class ValidationReport:
    issues: list[tuple[tuple, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, location, message):
        self.issues.append((tuple(location), message))

    def __str__(self):
        if self.ok:
            return "model is valid"
        return "\n".join(message for _, message in self.issues)


def validate_model(model: MdpModel) -> ValidationReport:
    """Check every semantic invariant of ``model``; an empty report means valid."""
    report = ValidationReport()
    if model.n < 1:
        report.add((), "model has no states")
    if model.p < 1:
        report.add((), "model has no actions")
    if model.horizon < 1:
        report.add((), f"horizon {model.horizon} < 1")
    if not 0.0 < model.discount <= 1.0:
        report.add((), f"discount {model.discount!r} outside (0, 1]")

    G = model.transitions if model.transitions.ndim == 4 else model.transitions[None]
    stationary = model.transitions.ndim == 3
    for t, k, i, j in zip(*np.nonzero(~np.isfinite(G))):
        t_lbl = "*" if stationary else t
        report.add((t_lbl, k, i, j), f"transition entry (t={t_lbl}, k={k}, i={i}, j={j}) is not finite")
    for t, k, i, j in zip(*np.nonzero(G < 0)):
        t_lbl = "*" if stationary else t
        report.add((t_lbl, k, i, j), f"transition entry (t={t_lbl}, k={k}, i={i}, j={j}) is negative")
    col = G.sum(axis=2)
    for t, k, j in zip(*np.nonzero(~(np.abs(col - 1.0) <= TRANSITION_TOL))):
        t_lbl = "*" if stationary else t
        report.add(
            (t_lbl, k, j),
            f"transition column (t={t_lbl}, k={k}, column={j}) sums to {col[t, k, j]!r}",
        )

    if not np.all(np.isfinite(model.rewards)):
        report.add(("rewards",), "stage rewards contain non-finite values")
    if not np.all(np.isfinite(model.terminal_reward)):
        report.add(("terminal_reward",), "terminal reward contains non-finite values")
    for s in np.flatnonzero(~model.action_mask.any(axis=1)):
        report.add((s,), f"state {s} has no available action")
    return report


def apply_discount(model: MdpModel) -> MdpModel:
    """Fold the discount factor into the rewards and return an undiscounted model."""
    gamma = model.discount
    if gamma == 1.0:
        return model
    scale = gamma ** np.arange(model.epochs)
    rewards = scale[:, None, None] * model.reward_stages()
    return MdpModel(
        transitions=model.transitions,
        rewards=rewards,
        terminal_reward=gamma ** (model.horizon - 1) * model.terminal_reward,
        horizon=model.horizon,
        action_mask=model.action_mask,
        discount=1.0,
    )


# -- JSON ------------------------------------------------------------------

def model_to_dict(model: MdpModel, constraint: ConstraintSpec | None = None) -> dict[str, Any]:
    stationary = model.stationary
    out: dict[str, Any] = {
        "n": model.n,
        "p": model.p,
        "horizon": model.horizon,
        "stationary": stationary,
        "transitions": (model.transitions if stationary else model.transition_stages()).tolist(),
        "rewards": (model.rewards if stationary else model.reward_stages()).tolist(),
        "terminal_reward": model.terminal_reward.tolist(),
        "action_mask": model.action_mask.astype(int).tolist(),
        "discount": model.discount,
    }
    if constraint is not None:
        out["d"] = constraint.d.tolist()
    return out


def model_from_dict(data: dict[str, Any]) -> tuple[MdpModel, ConstraintSpec | None]:
    """Build a model (and its density caps, when present) from the JSON object layout."""
    if not isinstance(data, dict):
        raise ModelFormatError("model file must contain a JSON object")
    try:
        n, p, horizon = int(data["n"]), int(data["p"]), int(data["horizon"])
        stationary = bool(data.get("stationary", False))
        G = np.array(data["transitions"], dtype=float)
        R = np.array(data["rewards"], dtype=float)
        r_n = np.array(data["terminal_reward"], dtype=float)
    except KeyError as exc:
        raise ModelFormatError(f"missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed numeric data: {exc}") from None
    epochs = max(horizon - 1, 0)
    g_shape = (p, n, n) if stationary else (epochs, p, n, n)
    r_shape = (n, p) if stationary else (epochs, n, p)
    if G.size == 0:
        G = G.reshape(g_shape) if 0 in g_shape else G
    if R.size == 0:
        R = R.reshape(r_shape) if 0 in r_shape else R
    if G.shape != g_shape:
        raise ModelFormatError(f"transitions have shape {G.shape}, expected {g_shape}")
    if R.shape != r_shape:
        raise ModelFormatError(f"rewards have shape {R.shape}, expected {r_shape}")
    if r_n.shape != (n,):
        raise ModelFormatError(f"terminal_reward has shape {r_n.shape}, expected {(n,)}")
    mask = data.get("action_mask")
    if mask is not None:
        mask = np.array(mask)
        if mask.shape != (n, p):
            raise ModelFormatError(f"action_mask has shape {mask.shape}, expected {(n, p)}")
        mask = mask.astype(bool)
    try:
        model = MdpModel(G, R, r_n, horizon, mask, float(data.get("discount", 1.0)))
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None
    constraint = None
    if data.get("d") is not None:
        d = np.array(data["d"], dtype=float)
        if d.shape != (n,):
            raise ModelFormatError(f"d has shape {d.shape}, expected {(n,)}")
        constraint = ConstraintSpec(d)
    return model, constraint


def save_model(path, model: MdpModel, constraint: ConstraintSpec | None = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, constraint)) + "\n", encoding="utf-8")


def load_model(path) -> tuple[MdpModel, ConstraintSpec | None]:
    """Read a model file.

    Raises ``json.JSONDecodeError`` or ``ModelFormatError`` for unreadable
    content and ``ConstraintError`` for invalid density caps.
    """
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def policy_to_dict(policy: Policy, metadata: dict[str, Any] | None = None) -> dict[str, Any]:
    return {
        "kind": policy.kind,
        "n": policy.stages.shape[1],
        "p": policy.stages.shape[2],
        "stages": policy.stages.tolist(),
        "metadata": metadata or {},
    }


def policy_from_dict(data: dict[str, Any]) -> tuple[Policy, dict[str, Any]]:
    if not isinstance(data, dict):
        raise ModelFormatError("policy file must contain a JSON object")
    try:
        stages = np.array(data["stages"], dtype=float)
        kind = data.get("kind", "randomized")
    except KeyError as exc:
        raise ModelFormatError(f"missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed policy data: {exc}") from None
    if stages.size == 0 and stages.ndim != 3:
        stages = stages.reshape(0, int(data.get("n", 0)), int(data.get("p", 0)))
    try:
        return Policy(stages, kind), dict(data.get("metadata") or {})
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None


def save_policy(path, policy: Policy, metadata: dict[str, Any] | None = None) -> None:
    Path(path).write_text(json.dumps(policy_to_dict(policy, metadata)) + "\n", encoding="utf-8")


def load_policy(path) -> tuple[Policy, dict[str, Any]]:
    return policy_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
