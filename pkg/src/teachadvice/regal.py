"""REGAL.C: optimistic, span-constrained planning over an L1 confidence set."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .estimation import ConfidenceSet, TransitionCounts
from .mdp import ConvergenceError, DeterministicPolicy, GainBias, TabularMDP, argmax_lowest, span


@dataclass(frozen=True)
class RegalParams:
    span_ceiling: float = 1000.0
    delta: float = 0.8
    tol: float = 1e-6
    max_iters: int = 100_000
    aperiodicity: float = 0.5

    def __post_init__(self):
        if not self.span_ceiling > 0:
            raise ValueError("span ceiling H must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not self.tol > 0:
            raise ValueError("planner tolerance must be positive")


class Step(NamedTuple):
    s: int
    a: int
    s_next: int
    reward: float


EpisodeDataset = list[Step]


@dataclass
class PlanResult:
    mdp: TabularMDP
    gain_bias: GainBias
    policy: DeterministicPolicy
    sweeps: int
    trace: list[float] = field(default_factory=list)

    def write_trace(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sweep", "gain_estimate"])
            for i, g in enumerate(self.trace, 1):
                writer.writerow([i, repr(g)])


def state_order(u: np.ndarray) -> np.ndarray:
    """States by decreasing value; equal values keep increasing index."""
    return np.lexsort((np.arange(u.size), -u))


def optimistic_rows(p_hat: np.ndarray, radius: np.ndarray, u: np.ndarray) -> np.ndarray:
    """argmax of p @ u over ||p - p_hat||_1 <= radius for every row at once.

    Moves up to radius/2 of mass onto the best state and takes the same amount
    from the worst states first.
    """
    rows = p_hat.reshape(-1, u.size).astype(float, copy=True)
    r = np.asarray(radius, dtype=float).reshape(-1)
    order = state_order(u)
    best = order[0]
    whole = r / 2.0 >= 1.0 - rows[:, best]
    rows[whole] = 0.0
    rows[whole, best] = 1.0
    part = np.flatnonzero(~whole)
    if part.size:
        sub = rows[part]
        extra = np.maximum(r[part] / 2.0, 0.0)
        donors = order[:0:-1]  # worst first, best excluded
        q = sub[:, donors]
        before = np.cumsum(q, axis=1) - q
        take = np.clip(extra[:, None] - before, 0.0, q)
        sub[:, donors] = q - take
        sub[:, best] += take.sum(axis=1)
        rows[part] = sub
    return rows.reshape(p_hat.shape)


def constrained_optimistic_plan(
    cs: ConfidenceSet,
    rewards: np.ndarray,
    params: RegalParams = RegalParams(),
    record_trace: bool = False,
) -> PlanResult:
    """Span-truncated extended value iteration.

    Each sweep applies the optimistic Bellman operator (best in-set row per
    state-action pair), mixes with the previous iterate for aperiodicity, then
    clips values above ``min + H``. Stops when the span of the change is below
    the planner tolerance. The greedy policy of the final sweep is returned
    together with the optimistic model selected at the converged values.
    """
    S = cs.num_states
    mask = cs.action_mask
    R = np.where(mask, np.asarray(rewards, dtype=float), 0.0)
    keep = 1.0 - params.aperiodicity
    H = params.span_ceiling
    u = np.zeros(S)
    trace: list[float] = []
    resid = np.inf
    for sweep in range(1, params.max_iters + 1):
        P = optimistic_rows(cs.p_hat, cs.radius, u)
        q = np.where(mask, R + P @ u, -np.inf)
        tu = q.max(axis=1)
        new = u + keep * (tu - u)
        new = np.minimum(new, new.min() + H)
        change = (new - u) / keep
        resid = span(change)
        gain = 0.5 * (change.max() + change.min())
        if record_trace:
            trace.append(float(gain))
        u = new - new.min()
        if resid < params.tol:
            P = optimistic_rows(cs.p_hat, cs.radius, u)
            q = np.where(mask, R + P @ u, -np.inf)
            policy = DeterministicPolicy(argmax_lowest(q, atol=1e-12 * max(1.0, np.abs(u).max())))
            counts = tuple(int(k) for k in mask.sum(axis=1))
            selected = TabularMDP(P, R, counts, name="optimistic")
            return PlanResult(selected, GainBias(float(gain), u, span(u)), policy, sweep, trace)
    raise ConvergenceError("extended value iteration did not converge", float(resid))


def fold_dataset(counts: TransitionCounts, dataset: Iterable[Step]) -> None:
    for s, a, s_next, _ in dataset:
        counts.record(s, a, s_next)


def regal_c_plan(
    dataset: Iterable[Step],
    counts: TransitionCounts,
    T: int,
    params: RegalParams,
    rewards: np.ndarray,
) -> PlanResult:
    if T < 1:
        raise ValueError("current time T must be >= 1")
    fold_dataset(counts, dataset)
    cs = ConfidenceSet.from_counts(counts, T, params.delta)
    return constrained_optimistic_plan(cs, rewards, params)


def regal_c(
    dataset: Iterable[Step],
    counts: TransitionCounts,
    T: int,
    params: RegalParams,
    rewards: np.ndarray,
) -> DeterministicPolicy:
    """One REGAL.C call: fold the iteration's data into the (accumulating)
    counts, rebuild the confidence set at time T and plan optimistically.
    Rewards are known to the learner and passed in as the (S, A) table."""
    return regal_c_plan(dataset, counts, T, params, rewards).policy
