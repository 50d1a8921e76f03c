import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmdpsynth import lp
from cmdpsynth.lp import LinearProgram, solve, standardize


def brute_force_lp(c, A_ub, b_ub):
    """min c.x over {A_ub x <= b_ub, x >= 0} by enumerating basic solutions (bounded instances)."""
    m, n = A_ub.shape
    A = np.vstack([A_ub, -np.eye(n)])
    b = np.concatenate([b_ub, np.zeros(n)])
    best = np.inf
    for rows in itertools.combinations(range(m + n), n):
        sub = A[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, b[list(rows)])
        if np.all(A @ x <= b + 1e-9):
            best = min(best, c @ x)
    return best


class TestStandardize:
    def test_single_slack(self):
        sf = standardize(LinearProgram(c=[1.0], A_ub=[[1.0]], b_ub=[3.0], sense="maximize"))
        assert sf.A.tolist() == [[1.0, 1.0]]
        assert sf.b.tolist() == [3.0]
        assert sf.c.tolist() == [-1.0, 0.0]

    def test_free_variable_split_round_trip(self):
        prog = LinearProgram(c=[1.0, 2.0], A_eq=[[1.0, 1.0]], b_eq=[0.5], lower=[-np.inf, 0.0])
        sf = standardize(prog)
        assert sf.A.shape == (1, 3)
        for x in ([-2.5, 3.0], [4.0, 0.0], [0.0, 0.5]):
            assert np.array_equal(sf.recover(sf.lift(x)), x)
        assert sf.A[0, sf.neg[0]] == -sf.A[0, sf.pos[0]]

    def test_mixed_rows(self):
        prog = LinearProgram(
            c=[1.0, -1.0, 0.5],
            A_eq=[[1.0, 1.0, 1.0]], b_eq=[1.0],
            A_ub=[[1.0, 0.0, -1.0], [0.0, 2.0, 1.0]], b_ub=[0.25, 1.5],
            lower=[0.0, -np.inf, 0.0],
        )
        sf = standardize(prog)
        # 3 rows; columns: 3 originals + 1 negative part + 2 slacks
        assert sf.A.shape == (3, 6)
        sol = solve(prog)
        assert sol.optimal
        z = sf.lift(sol.x)
        assert np.abs(sf.A @ z - sf.b).max() < 1e-9
        assert prog.residual(sol.x) < 1e-9

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            LinearProgram(c=[1.0, 2.0], A_eq=[[1.0]], b_eq=[1.0])
        with pytest.raises(ValueError):
            LinearProgram(c=[1.0], lower=[1.0])


class TestCanonical:
    def test_segment(self):
        sol = solve(LinearProgram(c=[1.0, 1.0], A_eq=[[1.0, 1.0]], b_eq=[1.0]))
        assert sol.status == lp.OPTIMAL
        assert sol.objective == pytest.approx(1.0, abs=1e-12)
        assert sol.x.sum() == pytest.approx(1.0, abs=1e-9)

    def test_infeasible(self):
        sol = solve(LinearProgram(c=[1.0], A_ub=[[1.0]], b_ub=[-1.0]))
        assert sol.status == lp.INFEASIBLE
        assert sol.phase1_objective > lp.FEAS_TOL

    def test_unbounded(self):
        assert solve(LinearProgram(c=[1.0], sense="maximize")).status == lp.UNBOUNDED

    def test_upper_bounds(self):
        sol = solve(LinearProgram(c=[1.0, 1.0], upper=[2.0, 3.0], sense="maximize"))
        assert sol.objective == pytest.approx(5.0)

    def test_redundant_equalities(self):
        sol = solve(LinearProgram(c=[1.0, 2.0], A_eq=[[1.0, 1.0], [2.0, 2.0]], b_eq=[1.0, 2.0]))
        assert sol.optimal and sol.objective == pytest.approx(1.0)

    def test_empty_row(self):
        assert solve(LinearProgram(c=[1.0], A_eq=[[0.0]], b_eq=[0.0])).optimal
        assert solve(LinearProgram(c=[1.0], A_eq=[[0.0]], b_eq=[1.0])).status == lp.INFEASIBLE

    def test_stall_cap(self):
        prog = LinearProgram(c=[-1.0, -1.0], A_ub=[[1.0, 2.0], [2.0, 1.0]], b_ub=[4.0, 4.0])
        assert solve(prog, max_iter=0).status == lp.STALLED
        assert solve(prog).objective == pytest.approx(-8.0 / 3.0)

    def test_beale_cycling_example(self):
        # degenerate instance on which the largest-coefficient rule cycles
        c = np.array([-0.75, 150.0, -0.02, 6.0])
        A = np.array([[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]])
        sol = solve(LinearProgram(c, A_ub=A, b_ub=[0.0, 0.0, 1.0]))
        assert sol.optimal
        assert sol.objective == pytest.approx(-0.05, abs=1e-12)

    def test_debug_trace(self):
        buf = io.StringIO()
        sol = solve(LinearProgram(c=[-1.0, -1.0], A_ub=[[1.0, 2.0], [2.0, 1.0]], b_ub=[4.0, 4.0]), debug=buf)
        lines = buf.getvalue().splitlines()
        assert sol.optimal and len(lines) == sol.iterations
        assert lines[0].startswith("phase=")


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(1, 5)), int(rng.integers(1, 4))
    A = rng.normal(size=(m, n))
    b = rng.uniform(0.5, 2.0, size=m)
    # a bounding row keeps every instance bounded
    A = np.vstack([A, np.ones(n)])
    b = np.append(b, 3.0)
    c = rng.normal(size=n)
    sol = solve(LinearProgram(c, A_ub=A, b_ub=b))
    assert sol.optimal
    assert sol.objective == pytest.approx(brute_force_lp(c, A, b), abs=1e-8)
    assert LinearProgram(c, A_ub=A, b_ub=b).residual(sol.x) <= 1e-7


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_solution_contract_and_determinism(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    prog = LinearProgram(
        c=rng.normal(size=n),
        A_eq=rng.normal(size=(1, n)), b_eq=[1.0],
        A_ub=rng.normal(size=(3, n)), b_ub=rng.uniform(0, 2, 3),
        lower=np.where(rng.random(n) < 0.3, -np.inf, 0.0),
        upper=np.full(n, 4.0),
        sense=str(rng.choice(["minimize", "maximize"])),
    )
    first, second = solve(prog), solve(prog)
    assert first.status == second.status
    if first.optimal:
        assert first.objective == second.objective
        assert np.array_equal(first.x, second.x)
        assert prog.residual(first.x) <= 1e-7
        obj = prog.c @ first.x
        assert abs(first.objective - obj) <= 1e-7 * (1 + abs(obj))
    elif first.status == lp.UNBOUNDED:
        # only possible through a free variable; everything else is boxed
        assert np.isneginf(prog.lower).any()
        assert first.phase1_objective <= lp.FEAS_TOL
    else:
        assert first.status == lp.INFEASIBLE
        assert first.phase1_objective > lp.FEAS_TOL
