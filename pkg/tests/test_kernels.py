"""The compiled kernels and the numpy fallback must agree bit for bit."""

import numpy as np
import pytest

from cmdpsynth import _kernels_py, density, kernels
from cmdpsynth.constrained import synthesize_projected
from cmdpsynth.gridworld import paper_instance
from cmdpsynth.lp import LinearProgram, solve
from instances import random_model

compiled = pytest.importorskip("cmdpsynth._kernels")


@pytest.fixture
def use(monkeypatch):
    def switch(impl):
        monkeypatch.setattr(kernels, "_impl", impl)
    return switch


def test_pivot_agrees():
    rng = np.random.default_rng(0)
    T = rng.normal(size=(6, 9))
    a, b = T.copy(), T.copy()
    _kernels_py.pivot(a, 2, 4)
    compiled.pivot(b, 2, 4)
    assert np.array_equal(a, b)


def test_random_lps_agree(use):
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(2, 8))
        prog = LinearProgram(
            c=rng.normal(size=n), A_eq=rng.normal(size=(2, n)), b_eq=rng.normal(size=2),
            A_ub=rng.normal(size=(3, n)), b_ub=rng.uniform(0, 2, 3), upper=np.full(n, 5.0),
        )
        use(_kernels_py)
        a = solve(prog)
        use(compiled)
        b = solve(prog)
        assert (a.status, a.iterations) == (b.status, b.iterations)
        if a.optimal:
            assert np.array_equal(a.x, b.x) and a.objective == b.objective


def test_rollouts_agree():
    rng = np.random.default_rng(2)
    model = random_model(rng, 4, 3, 5)
    stages = rng.dirichlet(np.ones(3), size=(4, 4))
    x1 = rng.dirichlet(np.ones(4))
    args = (
        density._cdf(x1),
        density._cdf(stages),
        density._cdf(np.swapaxes(model.transition_stages(), -1, -2)),
        np.ascontiguousarray(model.reward_stages()),
        np.ascontiguousarray(model.terminal_reward),
        rng.random((500, 9)),
    )
    assert np.array_equal(_kernels_py.rollouts(*args), compiled.rollouts(*args))


@pytest.mark.slow
def test_swarm_pipeline_agrees(use):
    model, caps = paper_instance(0.1, 20)
    x1 = np.eye(9)[5]
    out = []
    for impl in (_kernels_py, compiled):
        use(impl)
        policy, values = synthesize_projected(model, caps)
        out.append((policy.stages, values.u, density.monte_carlo(model, policy, x1, 20_000, 3)))
    assert np.array_equal(out[0][0], out[1][0])
    assert np.array_equal(out[0][1], out[1][1])
    assert out[0][2] == out[1][2]
