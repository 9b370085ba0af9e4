import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from teachadvice.domains import build_combination_lock
from teachadvice.estimation import (
    ConfidenceSet,
    TransitionCounts,
    confidence_radius,
    contains,
    empirical_model,
    empirical_transition,
    radius_formula,
    record,
)
from teachadvice.mdp import TabularMDP


def fresh(S=3, A=2):
    return TransitionCounts(S, (A,) * S)


class TestCounts:
    def test_record_once(self):
        c = record(fresh(), 0, 1, 2)
        assert c.triple_counts[0, 1, 2] == 1 and c.pair_counts[0, 1] == 1

    def test_record_twice(self):
        c = fresh().record(0, 1, 2).record(0, 1, 2)
        assert c.triple_counts[0, 1, 2] == 2 and c.pair_counts[0, 1] == 2

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            fresh().record(0, 2, 1)
        with pytest.raises(IndexError):
            fresh().record(3, 0, 0)

    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 1), st.integers(0, 2)), max_size=60))
    def test_pair_is_marginal(self, triples):
        c = fresh()
        for s, a, s2 in triples:
            c.record(s, a, s2)
        assert np.array_equal(c.pair_counts, c.triple_counts.sum(axis=2))

    def test_visit_deltas_nonnegative_and_sum(self):
        c = fresh()
        rng = np.random.default_rng(0)
        for _ in range(3):
            for _ in range(20):
                c.record(int(rng.integers(3)), int(rng.integers(2)), int(rng.integers(3)))
            v = c.end_iteration()
            assert (v >= 0).all() and v.sum() == 20
        assert np.array_equal(sum(c.visit_deltas()), c.pair_counts)

    def test_snapshot(self):
        c = fresh().record(0, 0, 1).record(1, 1, 2).record(0, 0, 2)
        snap = c.at(2)
        assert snap.total == 2 and snap.pair_counts[0, 0] == 1
        assert empirical_transition(c, 0, 0, 1, t=2) == 1.0
        assert empirical_transition(c, 0, 0, 1) == 0.5

    def test_json_round_trip(self, tmp_path):
        c = fresh().record(0, 0, 1).record(2, 1, 0)
        c.end_iteration()
        c.dump(tmp_path / "c.json")
        back = TransitionCounts.load(tmp_path / "c.json")
        assert np.array_equal(back.triple_counts, c.triple_counts)
        assert back.boundaries == c.boundaries

    def test_law_of_large_numbers(self):
        row = np.array([0.2, 0.5, 0.3])
        rng = np.random.default_rng(42)
        c = fresh()
        for s2 in rng.choice(3, size=1000, p=row):
            c.record(1, 0, int(s2))
        assert np.abs(empirical_model(c)[1, 0] - row).sum() < 0.05


class TestEmpiricalTransition:
    def test_ratio(self):
        c = fresh()
        for k in range(10):
            c.record(0, 0, 1 if k < 3 else 2)
        assert empirical_transition(c, 0, 0, 1) == pytest.approx(0.3)

    def test_unvisited_is_zero(self):
        assert all(empirical_transition(fresh(), 0, 0, s2) == 0.0 for s2 in range(3))

    def test_all_mass(self):
        c = fresh()
        for _ in range(7):
            c.record(2, 1, 0)
        assert empirical_transition(c, 2, 1, 0) == 1.0


class TestRadius:
    def test_frozen_value(self):
        # sqrt(24 ln 8), evaluated at 30 digits
        assert radius_formula(2, 2, 1, 1, 0.5) == pytest.approx(7.06446013509284814606941595876, rel=1e-12)

    @given(st.integers(1, 10_000))
    def test_inverse_sqrt_scaling(self, n):
        r1, r2 = radius_formula(5, 3, n, 100, 0.1), radius_formula(5, 3, 2 * n, 100, 0.1)
        assert r2 == pytest.approx(r1 / math.sqrt(2))

    def test_zero_clamped(self):
        assert radius_formula(4, 2, 0, 10, 0.1) == radius_formula(4, 2, 1, 10, 0.1)

    def test_from_counts(self):
        c = fresh().record(0, 1, 2)
        assert confidence_radius(c, 0, 1, 5, 0.2) == radius_formula(3, 2, 1, 5, 0.2)

    @pytest.mark.parametrize("t, delta", [(0, 0.5), (1, 0.0), (1, 1.0)])
    def test_bad_arguments(self, t, delta):
        with pytest.raises(ValueError):
            radius_formula(2, 2, 1, t, delta)


class TestConfidenceSet:
    def test_contains_empirical_model(self):
        lock = build_combination_lock(3)
        cs = ConfidenceSet.around(lock, 0.0)
        assert contains(cs, lock)

    def test_perturbed_row_rejected(self):
        lock = build_combination_lock(3)
        cs = ConfidenceSet.around(lock, 0.1)
        P = lock.transitions.copy()
        P[1, 0] = 0.0
        P[1, 0, 2], P[1, 0, 0] = 0.9, 0.1  # L1 distance 0.2
        assert not cs.contains(TabularMDP(P, lock.rewards, lock.actions_per_state))

    def test_unvisited_centre_uniform(self):
        cs = ConfidenceSet.from_counts(fresh(), 1, 0.5)
        assert np.allclose(cs.p_hat, 1 / 3)

    def test_shape_mismatch(self):
        cs = ConfidenceSet.around(build_combination_lock(3), 0.1)
        with pytest.raises(ValueError, match="incompatible"):
            cs.l1_distances(build_combination_lock(4))

    def test_coverage_of_true_model(self):
        # 2-state, 2-action model; 10^4 samples spread over the four pairs
        P = np.array([[[0.7, 0.3], [0.2, 0.8]], [[0.5, 0.5], [0.9, 0.1]]])
        true = TabularMDP(P, np.zeros((2, 2)), (2, 2))
        rng = np.random.default_rng(2024)
        hits = 0
        for _ in range(200):
            c = TransitionCounts(2, (2, 2))
            for k in range(10_000):
                s, a = divmod(k % 4, 2)
                c.record(s, a, int(rng.random() >= P[s, a, 0]))
            hits += ConfidenceSet.from_counts(c, 10_000, 0.1).contains(true)
        assert hits >= 180
