"""Visit counters, the empirical transition model and its L1 confidence set."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .mdp import TabularMDP

L1_SLACK = 1e-12


class TransitionCounts:
    """N(s,a,s') and N(s,a), plus the chronological record needed to rebuild
    the counts at any earlier time and the per-iteration visit deltas."""

    def __init__(self, num_states: int, actions_per_state: Sequence[int]):
        self.num_states = int(num_states)
        self.actions_per_state = tuple(int(k) for k in actions_per_state)
        if len(self.actions_per_state) != self.num_states:
            raise ValueError("actions_per_state must have one entry per state")
        A = max(self.actions_per_state)
        self.triple_counts = np.zeros((self.num_states, A, self.num_states), dtype=np.int64)
        self.pair_counts = np.zeros((self.num_states, A), dtype=np.int64)
        self.history: list[tuple[int, int, int]] = []
        self.boundaries: list[int] = [0]

    @classmethod
    def for_mdp(cls, mdp: TabularMDP) -> "TransitionCounts":
        return cls(mdp.num_states, mdp.actions_per_state)

    @property
    def max_actions(self) -> int:
        return self.pair_counts.shape[1]

    @property
    def total(self) -> int:
        return len(self.history)

    def record(self, s: int, a: int, s_next: int) -> "TransitionCounts":
        if not (0 <= s < self.num_states and 0 <= s_next < self.num_states):
            raise IndexError(f"state index out of range in ({s}, {a}, {s_next})")
        if not 0 <= a < self.actions_per_state[s]:
            raise IndexError(f"action {a} invalid in state {s}")
        self.triple_counts[s, a, s_next] += 1
        self.pair_counts[s, a] += 1
        self.history.append((s, a, s_next))
        return self

    def end_iteration(self) -> np.ndarray:
        """Mark an iteration boundary t_i and return that iteration's v_i(s,a)."""
        self.boundaries.append(self.total)
        return self.visit_deltas()[-1]

    def visit_deltas(self) -> list[np.ndarray]:
        out = []
        for lo, hi in zip(self.boundaries[:-1], self.boundaries[1:]):
            v = np.zeros_like(self.pair_counts)
            for s, a, _ in self.history[lo:hi]:
                v[s, a] += 1
            out.append(v)
        return out

    def at(self, t: int) -> "TransitionCounts":
        """Counts after the first ``t`` recorded transitions."""
        if t >= self.total:
            return self
        snap = TransitionCounts(self.num_states, self.actions_per_state)
        for s, a, s_next in self.history[: max(t, 0)]:
            snap.record(s, a, s_next)
        return snap

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "actions_per_state": list(self.actions_per_state),
            "history": [list(rec) for rec in self.history],
            "boundaries": list(self.boundaries),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TransitionCounts":
        counts = cls(doc["num_states"], doc["actions_per_state"])
        for s, a, s_next in doc["history"]:
            counts.record(s, a, s_next)
        counts.boundaries = [int(b) for b in doc.get("boundaries", [0])]
        return counts

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "TransitionCounts":
        return cls.from_dict(json.loads(Path(path).read_text()))


def empirical_transition(counts: TransitionCounts, s: int, a: int, s_next: int, t: int | None = None) -> float:
    c = counts if t is None else counts.at(t)
    return c.triple_counts[s, a, s_next] / max(int(c.pair_counts[s, a]), 1)


def empirical_model(counts: TransitionCounts) -> np.ndarray:
    return counts.triple_counts / np.maximum(counts.pair_counts, 1)[:, :, None]


def radius_formula(num_states: int, num_actions: int, n: int, t: int, delta: float) -> float:
    if t < 1:
        raise ValueError("t must be >= 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return math.sqrt(12.0 * num_states * math.log(2.0 * num_actions * t / delta) / max(n, 1))


def confidence_radius(counts: TransitionCounts, s: int, a: int, t: int, delta: float) -> float:
    return radius_formula(counts.num_states, counts.max_actions, int(counts.pair_counts[s, a]), t, delta)


@dataclass(frozen=True, eq=False)
class ConfidenceSet:
    """L1 balls around the empirical rows. Unvisited pairs are centred on the
    uniform row so every centre is itself a distribution."""

    p_hat: np.ndarray  # (S, A, S)
    radius: np.ndarray  # (S, A)
    action_mask: np.ndarray  # (S, A)
    t: int = 1
    delta: float = 0.1

    @property
    def num_states(self) -> int:
        return self.p_hat.shape[0]

    @classmethod
    def from_counts(cls, counts: TransitionCounts, t: int, delta: float) -> "ConfidenceSet":
        S, A = counts.num_states, counts.max_actions
        mask = np.arange(A)[None, :] < np.array(counts.actions_per_state)[:, None]
        p_hat = empirical_model(counts)
        unvisited = counts.pair_counts == 0
        p_hat[unvisited] = 1.0 / S
        p_hat[~mask] = 0.0
        radius_formula(S, A, 1, t, delta)  # argument checks
        log_term = math.log(2.0 * A * t / delta)
        radius = np.sqrt(12.0 * S * log_term / np.maximum(counts.pair_counts, 1))
        return cls(p_hat, np.where(mask, radius, 0.0), mask, t, delta)

    @classmethod
    def around(cls, mdp: TabularMDP, radius: float | np.ndarray) -> "ConfidenceSet":
        """Ball of a fixed radius around a known model (radius 0 is a singleton)."""
        r = np.broadcast_to(np.asarray(radius, dtype=float), mdp.action_mask.shape).copy()
        return cls(mdp.transitions.copy(), np.where(mdp.action_mask, r, 0.0), mdp.action_mask.copy())

    def l1_distances(self, candidate: TabularMDP) -> np.ndarray:
        if candidate.transitions.shape != self.p_hat.shape:
            raise ValueError(
                f"candidate shape {candidate.transitions.shape} incompatible with set {self.p_hat.shape}"
            )
        return np.abs(candidate.transitions - self.p_hat).sum(axis=2)

    def contains(self, candidate: TabularMDP) -> bool:
        d = self.l1_distances(candidate)
        return bool(np.all(d[self.action_mask] <= self.radius[self.action_mask] + L1_SLACK))


def contains(cs: ConfidenceSet, candidate: TabularMDP) -> bool:
    return cs.contains(candidate)


def record(counts: TransitionCounts, s: int, a: int, s_next: int) -> TransitionCounts:
    return counts.record(s, a, s_next)
