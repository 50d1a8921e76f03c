"""Hot-loop kernels: the compiled extension when importable, numpy otherwise.

Set ``CMDPSYNTH_PURE=1`` to force the numpy implementation. ``BACKEND`` names
the implementation in use.
"""

import os

from cmdpsynth import _kernels_py

OPTIMAL = _kernels_py.OPTIMAL
UNBOUNDED = _kernels_py.UNBOUNDED
ITERATION_LIMIT = _kernels_py.ITERATION_LIMIT

_impl = _kernels_py
if not os.environ.get("CMDPSYNTH_PURE"):
    try:
        from cmdpsynth import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"


def simplex_iterate(T, basis, n_enter, max_iter, pivot_tol, cost_tol, trace=None):
    return _impl.simplex_iterate(T, basis, n_enter, max_iter, pivot_tol, cost_tol, trace)


def pivot(T, p, q):
    _impl.pivot(T, p, q)


def rollouts(cum_x1, cum_q, cum_g, rewards, terminal, u):
    return _impl.rollouts(cum_x1, cum_q, cum_g, rewards, terminal, u)
