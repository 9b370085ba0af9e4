import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teachadvice.domains import build_combination_lock
from teachadvice.mdp import (
    ConvergenceError,
    DeterministicPolicy,
    TabularMDP,
    bellman_residual,
    evaluate_policy_average_reward,
    expected_return,
    relative_value_iteration,
    rollout,
    span,
    step,
    validate,
)


def single_state(r=0.7):
    return TabularMDP(np.ones((1, 1, 1)), [[r]], (1,))


def two_cycle():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = P[1, 0, 0] = 1.0
    return TabularMDP(P, [[0.0], [2.0]], (1, 1))


def random_mdp(seed, S=4, A=3):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(S), size=(S, A))
    return TabularMDP(P, rng.uniform(-1, 1, (S, A)), (A,) * S)


class TestConstruction:
    def test_padding_zeroed_and_readonly(self):
        lock = build_combination_lock(3)
        assert lock.transitions[3, 1].sum() == 0.0
        assert not lock.action_mask[3, 1]
        with pytest.raises(ValueError):
            lock.transitions[0, 0, 0] = 0.5

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="rewards shape"):
            TabularMDP(np.ones((1, 1, 1)), np.zeros((2, 1)), (1,))

    def test_json_round_trip(self, tmp_path):
        lock = build_combination_lock(4)
        path = tmp_path / "lock.json"
        lock.dump(path)
        back = TabularMDP.load(path)
        assert np.array_equal(back.transitions, lock.transitions)
        assert np.array_equal(back.rewards, lock.rewards)
        assert back.actions_per_state == lock.actions_per_state
        assert back.start_state == lock.start_state

    def test_r_max(self):
        assert build_combination_lock(2).r_max == 1.0


class TestValidate:
    def test_two_state_ok(self):
        rep = validate(two_cycle())
        assert rep.ok and rep.weakly_communicating

    def test_row_sum_violation_listed(self):
        P = np.array([[[0.9]]])
        rep = validate(TabularMDP(P, [[0.0]], (1,)))
        assert rep.row_sum_violations == [(0, 0, pytest.approx(0.9))]
        assert not rep.ok

    def test_two_closed_classes_not_weakly_communicating(self):
        # 0 -> {1 or 2}, 1 and 2 absorbing: two recurrent classes no policy joins
        P = np.zeros((3, 2, 3))
        P[0, 0, 1] = P[0, 1, 2] = 1.0
        P[1, :, 1] = P[2, :, 2] = 1.0
        rep = validate(TabularMDP(P, np.zeros((3, 2)), (2, 1, 1)))
        assert rep.stochastic
        assert not rep.weakly_communicating
        assert rep.end_components == [[1], [2]]

    def test_transient_states_allowed(self):
        P = np.zeros((2, 1, 2))
        P[0, 0, 1] = P[1, 0, 1] = 1.0
        rep = validate(TabularMDP(P, np.zeros((2, 1)), (1, 1)))
        assert rep.weakly_communicating and rep.end_components == [[1]]


class TestSpan:
    def test_examples(self):
        assert span([0, 0, 0]) == 0
        assert span([1, 5, 3]) == 4

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20), st.floats(-1e6, 1e6))
    def test_shift_invariant(self, h, c):
        assert span(np.array(h) + c) == pytest.approx(span(h), abs=1e-6)


class TestRelativeValueIteration:
    def test_single_state(self):
        gb, pol = relative_value_iteration(single_state(0.7))
        assert gb.gain == pytest.approx(0.7, abs=1e-9)
        assert np.allclose(gb.bias, [0.0])

    def test_periodic_cycle(self):
        gb, _ = relative_value_iteration(two_cycle())
        assert gb.gain == pytest.approx(1.0, abs=1e-9)

    def test_lock_renewal_oracle(self):
        # mean 10-step sojourn at +1 in state n, then n steps at -1
        gb, pol = relative_value_iteration(build_combination_lock(5))
        assert gb.gain == pytest.approx((10 - 5) / (10 + 5), abs=1e-9)
        assert pol.action_of == (0,) * 6

    def test_lock_long_horizon_monte_carlo(self):
        lock = build_combination_lock(5)
        _, pol = relative_value_iteration(lock)
        r = rollout(lock, pol, 200_000, seed=3)
        assert np.mean(r.rewards) == pytest.approx(1 / 3, abs=0.01)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_bellman_residual_small(self, seed):
        mdp = random_mdp(seed)
        gb, _ = relative_value_iteration(mdp, tol=1e-10)
        assert bellman_residual(mdp, gb) <= 1e-9
        assert gb.bias.min() == 0.0 and gb.span >= 0

    def test_iteration_cap(self):
        with pytest.raises(ConvergenceError) as info:
            relative_value_iteration(random_mdp(0), max_iters=2)
        assert info.value.residual > 0


class TestPolicyEvaluation:
    def test_optimal_lock_policy(self):
        lock = build_combination_lock(5)
        assert evaluate_policy_average_reward(lock, DeterministicPolicy.constant(lock, 0)) == pytest.approx(1 / 3)

    def test_always_reset(self):
        lock = build_combination_lock(5)
        reset = DeterministicPolicy([1] * 5 + [0])
        assert evaluate_policy_average_reward(lock, reset) == pytest.approx(-1.0)

    def test_single_state_any_policy(self):
        assert evaluate_policy_average_reward(single_state(0.25), DeterministicPolicy([0])) == pytest.approx(0.25)

    def test_invalid_action(self):
        with pytest.raises(IndexError):
            evaluate_policy_average_reward(build_combination_lock(2), DeterministicPolicy([0, 0, 1]))

    def test_expected_return_matches_rollout_mean(self):
        lock = build_combination_lock(3)
        pol = DeterministicPolicy.constant(lock, 0)
        exact = expected_return(lock, pol, 50)
        mc = np.mean([sum(rollout(lock, pol, 50, seed=i).rewards) for i in range(2000)])
        assert mc == pytest.approx(exact, abs=0.5)


class TestSimulation:
    def test_deterministic_row(self):
        lock = build_combination_lock(3)
        rng = np.random.default_rng(0)
        assert all(step(lock, 1, 0, rng)[0] == 2 for _ in range(50))

    def test_stay_frequency(self):
        lock = build_combination_lock(5)
        rng = np.random.default_rng(7)
        stays = sum(step(lock, 5, 0, rng)[0] == 5 for _ in range(10_000))
        assert stays / 10_000 == pytest.approx(0.9, abs=0.02)

    def test_same_seed_same_trajectory(self):
        mdp = random_mdp(1)
        pol = DeterministicPolicy([0, 1, 2, 0])
        a, b = rollout(mdp, pol, 300, seed=11), rollout(mdp, pol, 300, seed=11)
        assert a.states == b.states and a.rewards == b.rewards

    def test_bad_pair(self):
        with pytest.raises(IndexError):
            step(build_combination_lock(2), 2, 1, np.random.default_rng(0))
