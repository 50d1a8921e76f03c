import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmdpsynth.constrained import assemble_M, synthesize
from cmdpsynth.density import (
    expected_reward,
    monte_carlo,
    propagate,
    sample_feasible_density,
    stage_rewards,
    write_reward_csv,
    write_trajectory_csv,
)
from cmdpsynth.gridworld import paper_instance
from cmdpsynth.model import ConstraintSpec, MdpModel, Policy
from cmdpsynth.unconstrained import backward_induction
from instances import random_model

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def test_identity_is_fixed_point():
    model = MdpModel(np.eye(3)[None], np.zeros((3, 1)), np.zeros(3), 5)
    x1 = np.array([0.2, 0.3, 0.5])
    traj = propagate(model, Policy(np.ones((4, 3, 1))), x1)
    assert np.array_equal(traj.x, np.tile(x1, (5, 1)))


def test_swap_alternates():
    model = MdpModel(SWAP[None], np.zeros((2, 1)), np.zeros(2), 4)
    traj = propagate(model, Policy(np.ones((3, 2, 1))), [0.25, 0.75])
    assert traj.x.tolist() == [[0.25, 0.75], [0.75, 0.25], [0.25, 0.75], [0.75, 0.25]]


def test_violations_are_audited():
    model = MdpModel(SWAP[None], np.zeros((2, 1)), np.zeros(2), 3)
    traj = propagate(model, Policy(np.ones((2, 2, 1))), [0.4, 0.6], ConstraintSpec([0.5, 0.6]))
    assert traj.violations == [(1, 0, 0.6, 0.5)]
    assert traj.violation_counts().tolist() == [0, 1, 0]


def test_unconstrained_swarm_policy_violates():
    model, caps = paper_instance(0.1, 20)
    policy, _ = backward_induction(model)
    traj = propagate(model, policy, np.eye(9)[5], caps)
    states = {s for _, s, _, _ in traj.violations}
    assert 3 in states and 4 in states
    assert traj.x[:, 3].max() > 0.5


def test_trajectory_invariants():
    rng = np.random.default_rng(0)
    model = random_model(rng, 4, 3, 6)
    policy = Policy(rng.dirichlet(np.ones(3), size=(5, 4)))
    traj = propagate(model, policy, rng.dirichlet(np.ones(4)))
    assert np.allclose(traj.x.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(traj.x >= 0)
    for t in range(5):
        assert np.allclose(traj.x[t + 1], assemble_M(model, t, policy.stages[t]) @ traj.x[t], atol=1e-10)


def test_input_errors():
    model = MdpModel(np.eye(2)[None], np.zeros((2, 1)), np.zeros(2), 2)
    policy = Policy(np.ones((1, 2, 1)))
    with pytest.raises(ValueError):
        propagate(model, policy, [1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        propagate(model, policy, [0.5, 0.4])
    with pytest.raises(ValueError):
        propagate(model, Policy(np.ones((2, 2, 1))), [0.5, 0.5])


class TestExpectedReward:
    def test_no_epochs(self):
        model = MdpModel(np.zeros((0, 1, 2, 2)), np.zeros((0, 2, 1)), [3.0, 5.0], 1)
        assert expected_reward(model, Policy(np.zeros((0, 2, 1))), [0.5, 0.5]) == 4.0

    def test_stay_swap_example(self):
        model = MdpModel(np.array([np.eye(2), SWAP]), [[1.0, 0.0], [0.0, 2.0]], [0.0, 1.0], 2)
        policy, _ = backward_induction(model)
        assert expected_reward(model, policy, [0.0, 1.0]) == 2.0

    def test_stage_breakdown(self):
        model = MdpModel(np.eye(1)[None], [[2.0]], [5.0], 4)
        assert stage_rewards(model, Policy(np.ones((3, 1, 1))), [1.0]).tolist() == [2.0, 2.0, 2.0, 5.0]

    def test_constrained_policy_matches_its_values(self):
        model = random_model(np.random.default_rng(1), 3, 2, 4, stay_action=True)
        caps = ConstraintSpec([0.6, 0.6, 0.6])
        policy, values = synthesize(model, caps)
        x1 = sample_feasible_density(caps, 3)
        assert expected_reward(model, policy, x1) == pytest.approx(x1 @ values.u[0], abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(0.0, 1.0))
def test_reward_is_affine_in_start(seed, lam):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 3, 2, 4)
    policy = Policy(rng.dirichlet(np.ones(2), size=(3, 3)))
    a, b = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    mixed = lam * a + (1 - lam) * b
    mixed = mixed / mixed.sum()
    lhs = expected_reward(model, policy, mixed)
    rhs = lam * expected_reward(model, policy, a) + (1 - lam) * expected_reward(model, policy, b)
    assert lhs == pytest.approx(rhs, abs=1e-9)


class TestMonteCarlo:
    def test_degenerate_model(self):
        model = MdpModel(np.ones((1, 1, 1)), [[1.5]], [2.0], 3)
        mean, stderr = monte_carlo(model, Policy(np.ones((2, 1, 1))), [1.0], 50, seed=1)
        assert mean == 5.0 and stderr == 0.0

    def test_within_four_sigma(self):
        rng = np.random.default_rng(2)
        model = random_model(rng, 3, 2, 5)
        policy = Policy(rng.dirichlet(np.ones(2), size=(4, 3)))
        x1 = rng.dirichlet(np.ones(3))
        mean, stderr = monte_carlo(model, policy, x1, 100_000, seed=5)
        assert stderr > 0
        assert abs(mean - expected_reward(model, policy, x1)) <= 4 * stderr

    def test_same_seed_same_result(self):
        model = random_model(np.random.default_rng(3), 3, 2, 4)
        policy = Policy(np.full((3, 3, 2), 0.5))
        x1 = np.full(3, 1 / 3)
        assert monte_carlo(model, policy, x1, 1000, 9) == monte_carlo(model, policy, x1, 1000, 9)
        assert monte_carlo(model, policy, x1, 1000, 9) != monte_carlo(model, policy, x1, 1000, 10)

    def test_zero_weight_actions_never_sampled(self):
        # action 1 carries a huge reward but zero policy weight
        model = MdpModel(np.array([np.eye(2)] * 2), [[0.0, 1e6], [1.0, 1e6]], [0.0, 0.0], 3)
        policy = Policy(np.array([[[1.0, 0.0]] * 2] * 2))
        mean, _ = monte_carlo(model, policy, [0.5, 0.5], 2000, 0)
        assert mean <= 2.0

    def test_rejects_zero_rollouts(self):
        model = MdpModel(np.ones((1, 1, 1)), [[0.0]], [0.0], 2)
        with pytest.raises(ValueError):
            monte_carlo(model, Policy(np.ones((1, 1, 1))), [1.0], 0, 0)


class TestFeasibleSampler:
    def test_vacuous_caps_leave_sample_alone(self):
        rng = np.random.Generator(np.random.Philox(key=4))
        assert np.array_equal(sample_feasible_density(ConstraintSpec.vacuous(4), 4), rng.dirichlet(np.ones(4)))

    def test_forced_point(self):
        for seed in range(10):
            assert sample_feasible_density(ConstraintSpec([1.0, 0.0, 0.0]), seed).tolist() == [1.0, 0.0, 0.0]

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8))
    def test_output_is_admissible(self, seed, n):
        rng = np.random.default_rng(seed)
        d = rng.uniform(0.0, 1.0, n)
        d[rng.integers(n)] = 1.0
        x = sample_feasible_density(ConstraintSpec(d), seed)
        assert np.all(x >= 0) and np.all(x <= d + 1e-12)
        assert abs(x.sum() - 1.0) <= 1e-12


class TestCsv:
    def test_trajectory_csv(self, tmp_path):
        model = MdpModel(SWAP[None], np.zeros((2, 1)), np.zeros(2), 3)
        traj = propagate(model, Policy(np.ones((2, 2, 1))), [0.1, 0.9], ConstraintSpec([0.5, 1.0]))
        path = tmp_path / "traj.csv"
        write_trajectory_csv(path, traj)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["t", "x1", "x2", "violation_count"]
        assert rows[1] == ["1", "0.10000000000000001", "0.90000000000000002", "0"]
        assert rows[2][-1] == "1"
        assert float(rows[2][1]) == 0.9

    def test_reward_csv_blanks(self, tmp_path):
        path = tmp_path / "rewards.csv"
        write_reward_csv(path, {"unconstrained": np.array([1.0, 3.0]), "constrained": None}, None, 2)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["t", "cum_reward_unconstrained", "cum_reward_constrained", "cum_reward_projected", "lower_bound"]
        assert rows[2] == ["2", "3", "", "", ""]
