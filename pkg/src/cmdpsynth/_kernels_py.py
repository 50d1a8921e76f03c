"""Pure numpy fallback for the compiled kernels in ``_kernels.pyx``.

Both implementations perform the same elementwise floating point operations in
the same order, so they return bit-identical results. Keep them in lockstep.
"""

import numpy as np

OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2


def simplex_iterate(T, basis, n_enter, max_iter, pivot_tol, cost_tol, trace=None):
    """Run primal simplex pivots with Bland's rule on a dense tableau, in place.

    ``T`` has one row per constraint plus a trailing reduced-cost row; the last
    column holds the right-hand side. Only the first ``n_enter`` columns may
    enter the basis. Returns ``(status, iterations)``.
    """
    m = T.shape[0] - 1
    cost = T[m]
    it = 0
    while True:
        # Bland: lowest-index column with negative reduced cost
        cand = np.flatnonzero(cost[:n_enter] < -cost_tol)
        if cand.size == 0:
            return OPTIMAL, it
        if it >= max_iter:
            return ITERATION_LIMIT, it
        q = int(cand[0])
        col = T[:m, q]
        rows = np.flatnonzero(col > pivot_tol)
        if rows.size == 0:
            return UNBOUNDED, it
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
        p = int(tied[np.argmin(basis[tied])])
        if trace is not None:
            trace(it, q, p, float(T[p, -1] / T[p, q]))
        pivot(T, p, q)
        basis[p] = q
        it += 1


def pivot(T, p, q):
    T[p] = T[p] / T[p, q]
    f = T[:, q].copy()
    f[p] = 0.0
    T -= np.outer(f, T[p])


def rollouts(cum_x1, cum_q, cum_g, rewards, terminal, u):
    """Sample one trajectory per row of ``u`` and return each trajectory's total reward.

    ``cum_q[t, s]`` and ``cum_g[t, k, j]`` are cumulative distributions (next
    action given the state, next state given the current state and action) whose
    tail past the last positive entry has been set to ``inf``. Row ``r`` of ``u``
    supplies the uniforms for rollout ``r``: first the start state, then an
    action and a successor draw for every epoch.
    """
    n_rollouts = u.shape[0]
    horizon = cum_q.shape[0]
    s = np.argmax(u[:, 0:1] < cum_x1[None, :], axis=1)
    total = np.zeros(n_rollouts)
    for t in range(horizon):
        a = np.argmax(u[:, 1 + 2 * t, None] < cum_q[t][s], axis=1)
        total += rewards[t][s, a]
        s = np.argmax(u[:, 2 + 2 * t, None] < cum_g[t][a, s], axis=1)
    total += terminal[s]
    return total
