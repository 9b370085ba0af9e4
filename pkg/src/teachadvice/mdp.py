"""Tabular average-reward MDPs: representation, simulation and exact planning."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

ROW_SUM_TOL = 1e-12


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver hits its iteration cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Finite MDP with a possibly different number of actions in each state.

    ``transitions`` has shape ``(S, A_max, S)`` and ``rewards`` shape
    ``(S, A_max)``; entries for actions a >= actions_per_state[s] are zero
    padding and never used.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    actions_per_state: tuple[int, ...]
    start_state: int = 0
    name: str = ""
    action_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = np.array(self.transitions, dtype=float)
        R = np.array(self.rewards, dtype=float)
        counts = tuple(int(k) for k in self.actions_per_state)
        S = P.shape[0]
        if P.ndim != 3 or P.shape[2] != S:
            raise ValueError(f"transitions must have shape (S, A, S), got {P.shape}")
        if R.shape != P.shape[:2]:
            raise ValueError(f"rewards shape {R.shape} does not match transitions {P.shape}")
        if len(counts) != S or min(counts) < 1 or max(counts) > P.shape[1]:
            raise ValueError("actions_per_state must give 1..A_max actions for every state")
        if not 0 <= self.start_state < S:
            raise ValueError(f"start_state {self.start_state} out of range")
        mask = np.arange(P.shape[1])[None, :] < np.array(counts)[:, None]
        P[~mask] = 0.0
        R[~mask] = 0.0
        for arr in (P, R, mask):
            arr.setflags(write=False)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", R)
        object.__setattr__(self, "actions_per_state", counts)
        object.__setattr__(self, "action_mask", mask)

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def max_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_pairs(self) -> int:
        return int(sum(self.actions_per_state))

    @property
    def r_max(self) -> float:
        return float(np.abs(self.rewards[self.action_mask]).max())

    def check_pair(self, s: int, a: int) -> None:
        if not 0 <= s < self.num_states:
            raise IndexError(f"state {s} out of range [0, {self.num_states})")
        if not 0 <= a < self.actions_per_state[s]:
            raise IndexError(f"action {a} invalid in state {s} ({self.actions_per_state[s]} actions)")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "num_states": self.num_states,
            "actions_per_state": list(self.actions_per_state),
            "start_state": self.start_state,
            "transitions": [
                [self.transitions[s, a].tolist() for a in range(k)]
                for s, k in enumerate(self.actions_per_state)
            ],
            "rewards": [
                self.rewards[s, :k].tolist() for s, k in enumerate(self.actions_per_state)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularMDP":
        S = int(doc["num_states"])
        counts = [int(k) for k in doc["actions_per_state"]]
        A = max(counts)
        P = np.zeros((S, A, S))
        R = np.zeros((S, A))
        for s, k in enumerate(counts):
            P[s, :k] = np.asarray(doc["transitions"][s], dtype=float).reshape(k, S)
            R[s, :k] = doc["rewards"][s]
        return cls(P, R, tuple(counts), int(doc.get("start_state", 0)), doc.get("name", ""))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "TabularMDP":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class DeterministicPolicy:
    action_of: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "action_of", tuple(int(a) for a in self.action_of))

    def __call__(self, s: int) -> int:
        return self.action_of[s]

    def __len__(self) -> int:
        return len(self.action_of)

    def check(self, mdp: TabularMDP) -> None:
        if len(self.action_of) != mdp.num_states:
            raise ValueError("policy length does not match the number of states")
        for s, a in enumerate(self.action_of):
            mdp.check_pair(s, a)

    @classmethod
    def constant(cls, mdp: TabularMDP, action: int) -> "DeterministicPolicy":
        return cls(tuple(min(action, k - 1) for k in mdp.actions_per_state))


@dataclass(frozen=True)
class GainBias:
    gain: float
    bias: np.ndarray
    span: float


@dataclass
class Rollout:
    states: list[int]
    actions: list[int]
    rewards: list[float]
    rng_seed: int | None = None

    def __post_init__(self):
        if not (len(self.rewards) == len(self.actions) == len(self.states) - 1):
            raise ValueError("rollout needs len(states) == len(actions) + 1 == len(rewards) + 1")


@dataclass
class ValidationReport:
    row_sum_violations: list[tuple[int, int, float]]
    negative_entries: list[tuple[int, int, int]]
    weakly_communicating: bool
    end_components: list[list[int]]
    unique_closed_class: bool

    @property
    def stochastic(self) -> bool:
        return not self.row_sum_violations and not self.negative_entries

    @property
    def ok(self) -> bool:
        return self.stochastic and self.weakly_communicating


def span(h: Sequence[float] | np.ndarray) -> float:
    h = np.asarray(h, dtype=float)
    if h.size == 0:
        raise ValueError("span of an empty vector is undefined")
    return float(h.max() - h.min())


def _support_graph(P: np.ndarray, mask: np.ndarray, allowed: np.ndarray, keep: np.ndarray) -> csr_matrix:
    adj = ((P > 0) & (allowed & mask)[:, :, None]).any(axis=1)
    adj &= keep[:, None] & keep[None, :]
    return csr_matrix(adj)


def end_components(mdp: TabularMDP) -> list[list[int]]:
    """Maximal end components: state sets some policy can stay in forever while
    reaching every member. States outside all of them are transient under every
    policy."""
    P, mask = mdp.transitions, mdp.action_mask
    allowed = mask.copy()
    keep = np.ones(mdp.num_states, dtype=bool)
    while True:
        graph = _support_graph(P, mask, allowed, keep)
        _, labels = connected_components(graph, directed=True, connection="strong")
        labels = np.where(keep, labels, -1)
        # an action survives only if its whole support stays inside its own SCC
        leaves = ((P > 0) & (labels[None, None, :] != labels[:, None, None])).any(axis=2)
        new_allowed = allowed & ~leaves
        new_keep = keep & new_allowed.any(axis=1)
        new_allowed &= new_keep[:, None]
        if np.array_equal(new_allowed, allowed) and np.array_equal(new_keep, keep):
            break
        allowed, keep = new_allowed, new_keep
    comps: dict[int, list[int]] = {}
    for s in np.flatnonzero(keep):
        comps.setdefault(int(labels[s]), []).append(int(s))
    return sorted(comps.values())


def _closed_classes(adj: csr_matrix) -> list[list[int]]:
    n, labels = connected_components(adj, directed=True, connection="strong")
    coo = adj.tocoo()
    leaving = np.zeros(n, dtype=bool)
    leaving[labels[coo.row][labels[coo.row] != labels[coo.col]]] = True
    return [np.flatnonzero(labels == c).tolist() for c in range(n) if not leaving[c]]


def validate(mdp: TabularMDP) -> ValidationReport:
    P, mask = mdp.transitions, mdp.action_mask
    sums = P.sum(axis=2)
    bad_rows = [
        (int(s), int(a), float(sums[s, a]))
        for s, a in zip(*np.nonzero(mask & (np.abs(sums - 1.0) > ROW_SUM_TOL)))
    ]
    neg = [tuple(int(i) for i in idx) for idx in zip(*np.nonzero((P < 0) | (P > 1)))]
    mecs = end_components(mdp)
    union = _support_graph(P, mask, mask, np.ones(mdp.num_states, dtype=bool))
    return ValidationReport(
        row_sum_violations=bad_rows,
        negative_entries=neg,
        weakly_communicating=len(mecs) == 1,
        end_components=mecs,
        unique_closed_class=len(_closed_classes(union)) == 1,
    )


def q_values(mdp: TabularMDP, h: np.ndarray) -> np.ndarray:
    """One-step lookahead R + P h, with -inf on padded actions."""
    q = mdp.rewards + mdp.transitions @ h
    return np.where(mdp.action_mask, q, -np.inf)


def argmax_lowest(q: np.ndarray, atol: float = 0.0) -> np.ndarray:
    """Row-wise argmax; actions within ``atol`` of the best tie to the lowest index."""
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - atol, axis=1)


def relative_value_iteration(
    mdp: TabularMDP,
    tol: float = 1e-9,
    max_iters: int = 1_000_000,
    aperiodicity: float = 0.5,
) -> tuple[GainBias, DeterministicPolicy]:
    """Optimal gain, bias (re-centred to min 0) and greedy policy.

    Iterates the Bellman optimality operator on the aperiodic transform
    ``tau*I + (1-tau)*P`` so periodic chains still converge, and stops once the
    span of successive differences (rescaled to the original chain) is below
    ``tol``. The gain is the midpoint of that difference vector.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0.0 <= aperiodicity < 1.0:
        raise ValueError("aperiodicity must lie in [0, 1)")
    keep = 1.0 - aperiodicity
    v = np.zeros(mdp.num_states)
    resid = np.inf
    for _ in range(max_iters):
        tv = q_values(mdp, v).max(axis=1)
        diff = (tv - v)  # Tv - v on the original chain
        resid = span(diff)
        v = v + keep * diff
        v -= v.min()
        if resid < tol:
            gain = 0.5 * (diff.max() + diff.min())
            pol = DeterministicPolicy(argmax_lowest(q_values(mdp, v), atol=tol))
            return GainBias(float(gain), v, span(v)), pol
    raise ConvergenceError("relative value iteration did not converge", resid)


def bellman_residual(mdp: TabularMDP, gb: GainBias) -> float:
    return float(np.abs(gb.bias + gb.gain - q_values(mdp, gb.bias).max(axis=1)).max())


def policy_chain(mdp: TabularMDP, policy: DeterministicPolicy) -> tuple[np.ndarray, np.ndarray]:
    policy.check(mdp)
    idx = np.arange(mdp.num_states)
    acts = np.array(policy.action_of)
    return mdp.transitions[idx, acts], mdp.rewards[idx, acts]


def policy_gains(mdp: TabularMDP, policy: DeterministicPolicy, tol: float = 1e-9) -> np.ndarray:
    """Long-run average reward of a fixed policy from every start state.

    Exact: stationary distribution of each recurrent class, then absorption
    probabilities of the transient states into those classes.
    """
    P, r = policy_chain(mdp, policy)
    S = mdp.num_states
    classes = _closed_classes(csr_matrix(P > 0))
    gains = np.zeros(S)
    absorb = np.zeros((S, len(classes)))
    recurrent = np.zeros(S, dtype=bool)
    class_gain = np.zeros(len(classes))
    for c, members in enumerate(classes):
        sub = P[np.ix_(members, members)]
        k = len(members)
        A = np.vstack([sub.T - np.eye(k), np.ones((1, k))])
        b = np.zeros(k + 1)
        b[-1] = 1.0
        pi, *_ = np.linalg.lstsq(A, b, rcond=None)
        if np.abs(A @ pi - b).max() > max(tol, 1e-8):
            raise ConvergenceError("stationary distribution solve failed", float(np.abs(A @ pi - b).max()))
        class_gain[c] = pi @ r[members]
        gains[members] = class_gain[c]
        absorb[members, c] = 1.0
        recurrent[members] = True
    trans = np.flatnonzero(~recurrent)
    if trans.size:
        Q = P[np.ix_(trans, trans)]
        B = np.stack([P[np.ix_(trans, m)].sum(axis=1) for m in classes], axis=1)
        absorb_t = np.linalg.solve(np.eye(trans.size) - Q, B)
        gains[trans] = absorb_t @ class_gain
    return gains


def evaluate_policy_average_reward(
    mdp: TabularMDP, policy: DeterministicPolicy, tol: float = 1e-9, start: int | None = None
) -> float:
    s0 = mdp.start_state if start is None else start
    return float(policy_gains(mdp, policy, tol)[s0])


def expected_return(mdp: TabularMDP, policy: DeterministicPolicy, horizon: int, start: int | None = None) -> float:
    """Exact expected total reward of ``policy`` over ``horizon`` steps."""
    P, r = policy_chain(mdp, policy)
    v = np.zeros(mdp.num_states)
    for _ in range(horizon):
        v = r + P @ v
    return float(v[mdp.start_state if start is None else start])


def step(mdp: TabularMDP, s: int, a: int, rng: np.random.Generator) -> tuple[int, float]:
    mdp.check_pair(s, a)
    row = mdp.transitions[s, a]
    nxt = int(np.searchsorted(np.cumsum(row), rng.random(), side="right"))
    return min(nxt, mdp.num_states - 1), float(mdp.rewards[s, a])


class Simulator:
    """Fast repeated sampling from one MDP; same draws as :func:`step`."""

    def __init__(self, mdp: TabularMDP):
        self.mdp = mdp
        self._cdf = np.cumsum(mdp.transitions, axis=2)
        self._last = mdp.num_states - 1

    def step(self, s: int, a: int, rng: np.random.Generator) -> tuple[int, float]:
        if not 0 <= a < self.mdp.actions_per_state[s]:
            self.mdp.check_pair(s, a)
        nxt = int(np.searchsorted(self._cdf[s, a], rng.random(), side="right"))
        return min(nxt, self._last), float(self.mdp.rewards[s, a])


def rollout(
    mdp: TabularMDP,
    policy: DeterministicPolicy,
    steps: int,
    seed: int,
    start: int | None = None,
) -> Rollout:
    rng = np.random.default_rng(seed)
    sim = Simulator(mdp)
    s = mdp.start_state if start is None else start
    states, actions, rewards = [s], [], []
    for _ in range(steps):
        a = policy(s)
        s, r = sim.step(s, a, rng)
        states.append(s)
        actions.append(a)
        rewards.append(r)
    return Rollout(states, actions, rewards, seed)
