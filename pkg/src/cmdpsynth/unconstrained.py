"""Optimal policies for the MDP without density caps."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from cmdpsynth.model import MdpModel, Policy

BRUTE_FORCE_LIMIT = 10**6


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """Optimal reward-to-go ``v[t]`` (``t = 0..N-1``, ``v[N-1]`` terminal) and the
    maximizing action ``argmax_actions[t, s]`` for every decision stage."""

    v: np.ndarray
    argmax_actions: np.ndarray

    def value(self, x1) -> float:
        return float(np.asarray(x1, dtype=float) @ self.v[0])


def action_values(model: MdpModel, t: int, u_next: np.ndarray) -> np.ndarray:
    """``(n, p)`` matrix of ``r_t(s, a) + sum_j p_t(j | s, a) u_next[j]``; masked entries are ``-inf``."""
    G = model.G(t)
    q = model.R(t) + np.einsum("kij,i->jk", G, u_next)
    return np.where(model.action_mask, q, -np.inf)


def backward_induction(model: MdpModel) -> tuple[Policy, ValueFunction]:
    n, N = model.n, model.horizon
    v = np.empty((N, n))
    v[N - 1] = model.terminal_reward
    actions = np.zeros((N - 1, n), dtype=int)
    for t in range(N - 2, -1, -1):
        q = action_values(model, t, v[t + 1])
        actions[t] = np.argmax(q, axis=1)  # first maximum: lowest action index wins ties
        v[t] = q[np.arange(n), actions[t]]
    return Policy.from_actions(actions, model.p), ValueFunction(v, actions)


def _decision_rules(model: MdpModel) -> np.ndarray:
    """Every deterministic decision rule as an ``(count, n)`` array of action indices."""
    choices = [np.flatnonzero(row) for row in model.action_mask]
    return np.array(list(itertools.product(*choices)), dtype=int).reshape(-1, model.n)


def brute_force_optimal(model: MdpModel, x1) -> tuple[Policy, float]:
    """Enumerate every deterministic Markov policy and return the best one from ``x1``.

    The total reward ``sum_t x_t . r_t`` is propagated forward for all policies at
    once; the search space grows by a factor of (number of decision rules) per stage.
    Ties resolve to the first policy in lexicographic order of decision rules.
    """
    x1 = np.asarray(x1, dtype=float)
    rules = _decision_rules(model)
    n_rules, N = rules.shape[0], model.horizon
    if n_rules ** (N - 1) > BRUTE_FORCE_LIMIT:
        raise InstanceTooLarge(f"{n_rules}^{N - 1} policies exceed the enumeration limit")
    states = np.arange(model.n)

    x = x1[None, :]
    total = np.zeros(1)
    for t in range(N - 1):
        G, R = model.G(t), model.R(t)
        r = R[states, rules]                               # (rules, n)
        M = np.transpose(G[rules, :, states[None, :]], (0, 2, 1))   # (rules, n_to, n_from)
        total = (total[:, None] + x @ r.T).ravel()
        x = np.einsum("dij,pj->pdi", M, x).reshape(-1, model.n)
    total = total + x @ model.terminal_reward
    best = int(np.argmax(total))
    digits = np.unravel_index(best, (n_rules,) * (N - 1)) if N > 1 else ()
    actions = rules[list(digits)].reshape(N - 1, model.n)
    return Policy.from_actions(actions, model.p), float(total[best])
