"""Grid navigation instances, including the 3x3 swarm example.

Cells are numbered row-major from the top-left (cell 0 is the top-left corner).
Actions are ``up, down, left, right, stay`` in that order. Moves that would leave
the grid are masked. Under an available action the agent moves as intended with
probability ``1 - epsilon``; the remaining ``epsilon`` is split equally among the
other available moves of the cell (``stay`` included).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cmdpsynth.model import ConstraintSpec, MdpModel

ACTIONS = ("up", "down", "left", "right", "stay")
_OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))

PAPER_STAGE_REWARDS = (1, 1, 1, 10, 5, 0, 3, 3, 3)
PAPER_TERMINAL_REWARDS = (0, 0, 0, 10, 0, 0, 0, 0, 0)
PAPER_CAPS = (0.4, 0.4, 0.4, 0.5, 0.05, 1, 0.2, 0.2, 0.2)


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int
    epsilon: float = 0.1
    stage_rewards: tuple[float, ...] | None = None
    terminal_rewards: tuple[float, ...] | None = None
    d: tuple[float, ...] | None = None
    horizon: int = 20

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and one column")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must lie in [0, 1)")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        n = self.rows * self.cols
        for name in ("stage_rewards", "terminal_rewards", "d"):
            value = getattr(self, name)
            if value is not None and len(value) != n:
                raise ValueError(f"{name} must have {n} entries")


def build_grid(spec: GridSpec) -> tuple[MdpModel, ConstraintSpec | None]:
    n, p = spec.rows * spec.cols, len(ACTIONS)
    mask = np.zeros((n, p), dtype=bool)
    target = np.zeros((n, p), dtype=int)
    for s in range(n):
        r, c = divmod(s, spec.cols)
        for a, (dr, dc) in enumerate(_OFFSETS):
            rr, cc = r + dr, c + dc
            if 0 <= rr < spec.rows and 0 <= cc < spec.cols:
                mask[s, a] = True
                target[s, a] = rr * spec.cols + cc

    G = np.zeros((p, n, n))
    for s in range(n):
        available = np.flatnonzero(mask[s])
        for a in available:
            others = available[available != a]
            if others.size == 0:
                G[a, target[s, a], s] = 1.0
                continue
            G[a, target[s, a], s] += 1.0 - spec.epsilon
            for b in others:
                G[a, target[s, b], s] += spec.epsilon / others.size
        # masked actions never fire; give them a harmless self-loop so every column is stochastic
        for a in np.flatnonzero(~mask[s]):
            G[a, s, s] = 1.0

    stage = np.zeros(n) if spec.stage_rewards is None else np.asarray(spec.stage_rewards, dtype=float)
    terminal = np.zeros(n) if spec.terminal_rewards is None else np.asarray(spec.terminal_rewards, dtype=float)
    rewards = np.repeat(stage[:, None], p, axis=1)
    model = MdpModel(G, rewards, terminal, spec.horizon, mask)
    constraint = None if spec.d is None else ConstraintSpec(np.asarray(spec.d, dtype=float))
    return model, constraint


def paper_instance(epsilon: float = 0.1, horizon: int = 20) -> tuple[MdpModel, ConstraintSpec]:
    """The 3x3 swarm coordination example: high reward in cell 3, tight caps on cells 3 and 4."""
    spec = GridSpec(3, 3, epsilon, PAPER_STAGE_REWARDS, PAPER_TERMINAL_REWARDS, PAPER_CAPS, horizon)
    return build_grid(spec)
