"""Regret bookkeeping, regret ratios, empirical Bernstein intervals and the
negative-transfer test, plus validation statistics for the bounds."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

from .mdp import TabularMDP


class Degenerate(enum.Enum):
    BASELINE_OPTIMAL = "baseline-optimal"  # zero-regret denominator
    UNSTABLE = "degenerate-denominator"


@dataclass
class RewardTrace:
    rewards: np.ndarray
    teacher_fired: np.ndarray
    iteration_starts: list[int]
    states: np.ndarray | None = None  # length T + 1
    actions: np.ndarray | None = None

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.teacher_fired = np.asarray(self.teacher_fired, dtype=bool)
        if self.teacher_fired.shape != self.rewards.shape:
            raise ValueError("need one fired-by flag per step")
        if self.iteration_starts and (self.iteration_starts[0] != 0 or sorted(self.iteration_starts) != list(self.iteration_starts)):
            raise ValueError("iteration starts must begin at 0 and increase")

    @classmethod
    def from_run(cls, run) -> "RewardTrace":
        return cls(run.rewards, run.teacher_fired, list(run.iteration_starts), run.states, run.actions)

    def __len__(self) -> int:
        return self.rewards.size

    def iterations(self) -> list[slice]:
        bounds = list(self.iteration_starts) + [len(self)]
        return [slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]


@dataclass
class RegretCurve:
    regret: np.ndarray  # regret[k] = gain * (k + 1) - sum(rewards[: k + 1])
    gain: float

    @property
    def final(self) -> float:
        return float(self.regret[-1]) if self.regret.size else 0.0


def cumulative_regret(trace: RewardTrace | Sequence[float], gain: float) -> RegretCurve:
    if not math.isfinite(gain):
        raise ValueError("gain must be finite")
    rewards = trace.rewards if isinstance(trace, RewardTrace) else np.asarray(trace, dtype=float)
    steps = np.arange(1, rewards.size + 1)
    return RegretCurve(gain * steps - np.cumsum(rewards), gain)


def regret_ratio(
    trace1: RewardTrace | Sequence[float],
    trace2: RewardTrace | Sequence[float],
    gain: float,
    T: int | None = None,
) -> float | Degenerate:
    """(gain*T - R1) / (gain*T - R2) over the first T steps of each trace."""
    r1 = trace1.rewards if isinstance(trace1, RewardTrace) else np.asarray(trace1, dtype=float)
    r2 = trace2.rewards if isinstance(trace2, RewardTrace) else np.asarray(trace2, dtype=float)
    T = min(r1.size, r2.size) if T is None else T
    if T > r1.size or T > r2.size:
        raise ValueError(f"horizon {T} longer than a trace")
    return ratio_of_regrets(gain * T - r1[:T].sum(), gain * T - r2[:T].sum())


def ratio_of_regrets(regret1: float, regret2: float, atol: float = 1e-12) -> float | Degenerate:
    if abs(regret2) <= atol:
        return Degenerate.BASELINE_OPTIMAL
    return float(regret1 / regret2)


@dataclass(frozen=True)
class BernsteinInterval:
    center: float
    half_width: float
    n: int
    delta: float
    r_max: float
    sigma: float

    @property
    def low(self) -> float:
        return self.center - self.half_width

    @property
    def high(self) -> float:
        return self.center + self.half_width

    def __contains__(self, value: float) -> bool:
        return self.low <= value <= self.high


def bernstein_half_width(sigma: float, n: int, delta: float, r_max: float) -> float:
    log_term = math.log(3.0 / delta)
    return sigma * math.sqrt(2.0 * log_term / n) + 6.0 * r_max * log_term / n


def empirical_bernstein(samples: Sequence[float], delta: float, r_max: float) -> BernsteinInterval:
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("empirical Bernstein needs at least two samples")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if r_max < np.abs(x).max():
        raise ValueError("r_max must bound every |sample|")
    sigma = float(x.std())  # 1/n normalisation
    return BernsteinInterval(float(x.mean()), bernstein_half_width(sigma, x.size, delta, r_max), x.size, delta, r_max, sigma)


@dataclass(frozen=True)
class ReturnEstimate:
    """Accumulated-reward samples (one per rollout) over a common horizon."""

    samples: np.ndarray
    horizon: int

    @classmethod
    def of(cls, value: float | Sequence[float], horizon: int) -> "ReturnEstimate":
        return cls(np.atleast_1d(np.asarray(value, dtype=float)), int(horizon))

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    def interval(self, delta: float, r_max_per_step: float) -> BernsteinInterval:
        return empirical_bernstein(self.samples, delta, r_max_per_step * self.horizon)


def transfer_gap(source_returns: ReturnEstimate, target_returns: ReturnEstimate) -> float:
    """Return of the source policy on its own task minus its return on the target."""
    if source_returns.horizon != target_returns.horizon:
        raise ValueError(
            f"horizon mismatch: source {source_returns.horizon} vs target {target_returns.horizon}"
        )
    return source_returns.mean - target_returns.mean


@dataclass(frozen=True)
class TransferReport:
    rho_hat: float | Degenerate
    gap: float
    eq4_condition: bool
    negative_transfer: bool
    rho_low: float | Degenerate
    rho_high: float | Degenerate


def negative_transfer_check(
    gap: float,
    source_expected_return: float,
    target_expected_return: float,
    intervals: tuple[BernsteinInterval, BernsteinInterval],
    gain: float,
    horizon: int,
) -> TransferReport:
    """Gap condition plus the interval sandwich on the estimated regret ratio.

    ``intervals`` are the Bernstein intervals of the source policy's return on
    the source task and of the target policy's return on the target task; their
    endpoints play the role of the four constants in the sandwich. Negative
    transfer is declared when the lower end of the sandwich exceeds 1.
    """
    src, tgt = intervals
    base = gain * horizon
    eq4 = gap > source_expected_return - target_expected_return
    rho_hat = ratio_of_regrets(base + gap - src.center, base - tgt.center)
    lo_den, hi_den = base - tgt.low, base - tgt.high
    if lo_den <= 0:
        # even the most favourable baseline regret is not positive: no usable bound
        return TransferReport(rho_hat, gap, eq4, False, Degenerate.UNSTABLE, Degenerate.UNSTABLE)
    rho_low = (base + gap - src.high) / lo_den
    # a baseline regret interval reaching zero leaves the ratio unbounded above
    rho_high = (base + gap - src.low) / hi_den if hi_den > 0 else math.inf
    return TransferReport(rho_hat, gap, eq4, rho_low > 1.0, rho_low, rho_high)


def one_way_diameter(mdp: TabularMDP, bias: Sequence[float]) -> float:
    """max over start states of the least expected time to reach argmax(bias).

    Stochastic shortest path solved by policy iteration from a proper policy
    (one that moves toward the target along a BFS tree). Returns inf when the
    target is unreachable from some state.
    """
    target = int(np.argmax(np.asarray(bias, dtype=float)))
    S = mdp.num_states
    P, mask = mdp.transitions, mdp.action_mask
    if S == 1:
        return 0.0
    support = (P > 0) & mask[:, :, None]
    reverse = csr_matrix(support.any(axis=1).T)
    order, pred = breadth_first_order(reverse, target, directed=True, return_predecessors=True)
    if order.size < S:
        return math.inf
    # proper start: an action with positive probability of stepping to the BFS parent
    acts = np.array([0 if s == target else int(np.argmax(support[s, :, pred[s]])) for s in range(S)])
    others = np.flatnonzero(np.arange(S) != target)
    idx = np.ix_(others, others)
    for _ in range(10 * S * mdp.max_actions + 10):
        Pp = P[others, acts[others]]
        tau = np.zeros(S)
        tau[others] = np.linalg.solve(np.eye(others.size) - Pp[:, others], np.ones(others.size))
        q = np.where(mask, 1.0 + P @ tau, np.inf)
        q_cur = q[others, acts[others]]
        better = q[others].min(axis=1) < q_cur - 1e-10
        if not better.any():
            return float(tau.max())
        acts[others[better]] = np.argmin(q[others[better]], axis=1)
    raise RuntimeError("SSP policy iteration did not terminate")


def first_passage_times(mdp: TabularMDP, policy, target: int, runs: int, rng: np.random.Generator, start: int, cap: int = 10**6) -> np.ndarray:
    """Monte Carlo hitting times of ``target`` from ``start`` under ``policy``."""
    from .mdp import Simulator

    sim = Simulator(mdp)
    out = np.empty(runs)
    for i in range(runs):
        s, t = start, 0
        while s != target and t < cap:
            s, _ = sim.step(s, policy(s), rng)
            t += 1
        out[i] = t
    return out


def theorem2_envelope(
    num_states: int,
    num_actions: int,
    T: int,
    H: float,
    delta: float,
    one_minus_beta: float,
    rho: float,
    constant: float = 1.0,
) -> float:
    """Shape of the regret bound, (1 - beta + rho*beta) H |S| sqrt(|A| T log(|A| T / delta)),
    with the unspecified leading constant set to ``constant``."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    beta = 1.0 - one_minus_beta
    coeff = one_minus_beta + rho * beta
    return constant * coeff * H * num_states * math.sqrt(num_actions * T * math.log(num_actions * T / delta))


def coverage_bound_steps(num_states: int, delta: float) -> int:
    return math.ceil(num_states * math.log(num_states / delta))


def cover_times(mdp: TabularMDP, runs: int, rng: np.random.Generator, step_cap: int = 10**7) -> np.ndarray:
    """Steps until uniform-random exploration has visited every state, for
    ``runs`` independent walks simulated side by side."""
    S = mdp.num_states
    cdf = np.cumsum(mdp.transitions, axis=2)
    n_act = np.array(mdp.actions_per_state)
    state = np.full(runs, mdp.start_state)
    seen = np.zeros((runs, S), dtype=bool)
    seen[np.arange(runs), state] = True
    remaining = S - 1
    done_at = np.where(seen.sum(axis=1) == S, 0, -1)
    active = np.flatnonzero(done_at < 0)
    t = 0
    while active.size:
        if t >= step_cap:
            raise RuntimeError(f"exploration exceeded {step_cap} steps")
        t += 1
        s = state[active]
        a = np.floor(rng.random(active.size) * n_act[s]).astype(int)
        u = rng.random(active.size)
        nxt = (cdf[s, a] <= u[:, None]).sum(axis=1)
        nxt = np.minimum(nxt, S - 1)
        state[active] = nxt
        seen[active, nxt] = True
        finished = seen[active].all(axis=1)
        done_at[active[finished]] = t
        active = active[~finished]
    del remaining
    return done_at


def fit_cover_constant(times: np.ndarray, num_states: int, delta: float) -> float:
    """Smallest c with empirical P(time > c * ceil(|S| ln(|S|/delta))) <= delta."""
    q = np.quantile(np.asarray(times), 1.0 - delta, method="higher")
    return float(q / coverage_bound_steps(num_states, delta))


@dataclass(frozen=True)
class IterationRegret:
    total: float  # sum_{s,a} v_i(s,a) (gain - R(s,a))
    student: float
    teacher: float
    student_steps: int
    teacher_steps: int


def regret_decomposition(trace: RewardTrace, gain: float, rewards: np.ndarray) -> list[IterationRegret]:
    """Per iteration: regret from visit counts, and the same regret split into
    student-fired and teacher-fired steps."""
    if trace.states is None or trace.actions is None:
        raise ValueError("decomposition needs the visited states and actions")
    out = []
    for sl in trace.iterations():
        v = np.zeros_like(rewards, dtype=np.int64)
        np.add.at(v, (trace.states[:-1][sl], trace.actions[sl]), 1)
        total = float((v * (gain - rewards)).sum())
        per_step = gain - trace.rewards[sl]
        fired = trace.teacher_fired[sl]
        out.append(IterationRegret(total, float(per_step[~fired].sum()), float(per_step[fired].sum()), int((~fired).sum()), int(fired.sum())))
    return out


@dataclass(frozen=True)
class RatioBound:
    total: float
    bound: float
    weights_nonnegative: bool

    @property
    def holds(self) -> bool:
        return self.total <= self.bound + 1e-9 * max(1.0, abs(self.bound))


def ratio_bound(parts: Sequence[IterationRegret]) -> RatioBound:
    """Total regret against max_i rho_i * (sum full-student - sum executed-student)
    + sum executed-student, with per-step mixing.

    The full-student regret of iteration i extrapolates the student-fired
    per-step regret to the whole iteration, and rho_i is the teacher-to-student
    per-step regret ratio. Iterations where one side never fired contribute
    their measured regret directly. The bound is guaranteed only when every
    extrapolated remainder is non-negative.
    """
    total = sum(p.total for p in parts)
    rhos, rem, executed, fixed = [], [], 0.0, 0.0
    for p in parts:
        if p.student_steps == 0 or p.teacher_steps == 0:
            fixed += p.total
            continue
        per_student = p.student / p.student_steps
        full = per_student * (p.student_steps + p.teacher_steps)
        executed += p.student
        rem.append(full - p.student)
        rhos.append((p.teacher / p.teacher_steps) / per_student if per_student != 0 else math.inf)
    finite = [r for r in rhos if math.isfinite(r)]
    rho_max = max(finite) if finite else 0.0
    bound = rho_max * sum(rem) + executed + fixed if len(finite) == len(rhos) else math.inf
    return RatioBound(total, bound, all(x >= 0 for x in rem))
