"""Teachers, grand-teacher construction and the multi-teacher advice loop."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .estimation import TransitionCounts
from .mdp import (
    DeterministicPolicy,
    Simulator,
    TabularMDP,
    q_values,
    relative_value_iteration,
    rollout,
)
from .regal import RegalParams, Step, regal_c

DEFAULT_TEACHERS = 10
DEFAULT_ITERS = 10
DEFAULT_STEPS_PER_ITER = 200


@dataclass
class TeacherPolicy:
    advise: DeterministicPolicy
    budget: int
    spent: int = 0
    kind: str = ""

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be non-negative")

    @property
    def remaining(self) -> int:
        return self.budget - self.spent

    def query(self, s: int) -> int | None:
        """Advice for ``s``, or None once the budget is used up."""
        if self.spent >= self.budget:
            return None
        self.spent += 1
        return self.advise(s)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "advise": list(self.advise.action_of), "budget": self.budget, "spent": self.spent}

    @classmethod
    def from_dict(cls, doc: dict) -> "TeacherPolicy":
        return cls(DeterministicPolicy(doc["advise"]), int(doc["budget"]), int(doc.get("spent", 0)), doc.get("kind", ""))


@dataclass
class AdviceModel:
    teachers: list[TeacherPolicy]

    def __post_init__(self):
        if not self.teachers:
            raise ValueError("an advice model needs at least one teacher")

    @property
    def budgets(self) -> list[int]:
        return [t.budget for t in self.teachers]

    def __len__(self) -> int:
        return len(self.teachers)


def majority_vote(advices: Sequence[int]) -> int:
    """Most frequent action; ties go to the lowest action index."""
    if not advices:
        raise ValueError("majority vote over an empty list")
    tally = Counter(advices)
    top = max(tally.values())
    return min(a for a, c in tally.items() if c == top)


def _poll(model: AdviceModel, s: int, used: list[int]) -> int | None:
    votes = []
    for i, teacher in enumerate(model.teachers):
        a = teacher.query(s)
        if a is not None:
            used[i] += 1
            votes.append(a)
    return majority_vote(votes) if votes else None


@dataclass
class GrandTeacher:
    policy: DeterministicPolicy
    construction: str
    queries_used: list[int]

    def advise(self, s: int) -> int:
        return self.policy(s)

    def to_dict(self) -> dict:
        return {
            "construction": self.construction,
            "policy": list(self.policy.action_of),
            "queries_used": list(self.queries_used),
        }

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))


class OnlineGrandTeacher:
    """Polls every teacher the first time a state is seen and caches the vote."""

    construction = "online"

    def __init__(self, model: AdviceModel):
        self.model = model
        self.cache: dict[int, int | None] = {}
        self.queries_used = [0] * len(model)

    def advise(self, s: int) -> int | None:
        if s not in self.cache:
            self.cache[s] = _poll(self.model, s, self.queries_used)
        return self.cache[s]

    def to_dict(self) -> dict:
        return {
            "construction": self.construction,
            "cache": {str(s): a for s, a in sorted(self.cache.items())},
            "queries_used": list(self.queries_used),
        }


def build_grand_teacher_online(model: AdviceModel) -> OnlineGrandTeacher:
    return OnlineGrandTeacher(model)


def build_grand_teacher_offline(
    mdp: TabularMDP,
    model: AdviceModel,
    rng: np.random.Generator,
    step_cap: int | None = None,
) -> tuple[GrandTeacher, int]:
    """Uniform-random exploration until every state has been seen, polling the
    teachers once per newly visited state. Returns the grand teacher and the
    number of exploration steps taken."""
    S = mdp.num_states
    cap = step_cap if step_cap is not None else 1_000_000 * S
    sim = Simulator(mdp)
    used = [0] * len(model)
    actions: list[int | None] = [None] * S
    seen = np.zeros(S, dtype=bool)
    s = mdp.start_state
    steps = 0
    remaining = S
    while True:
        if not seen[s]:
            seen[s] = True
            remaining -= 1
            actions[s] = _poll(model, s, used)
            if actions[s] is None:
                raise RuntimeError(f"no teacher has budget left to advise state {s}")
            if remaining == 0:
                break
        if steps >= cap:
            raise RuntimeError(f"exploration exceeded {cap} steps with {remaining} states unvisited")
        a = int(rng.integers(mdp.actions_per_state[s]))
        s, _ = sim.step(s, a, rng)
        steps += 1
    return GrandTeacher(DeterministicPolicy(actions), "offline", used), steps


def make_optimal_teacher(mdp: TabularMDP, budget: int | None = None) -> TeacherPolicy:
    _, policy = relative_value_iteration(mdp)
    return TeacherPolicy(policy, mdp.num_states if budget is None else budget, kind="optimal")


def make_worst_teacher(mdp: TabularMDP, budget: int | None = None) -> TeacherPolicy:
    """Advises the action with the lowest one-step value R + P h*."""
    gb, _ = relative_value_iteration(mdp)
    q = q_values(mdp, gb.bias)
    q = np.where(mdp.action_mask, q, np.inf)
    worst = np.argmax(q <= q.min(axis=1, keepdims=True) + 1e-9, axis=1)
    return TeacherPolicy(DeterministicPolicy(worst), mdp.num_states if budget is None else budget, kind="worst")


def make_random_teacher(mdp: TabularMDP, rng: np.random.Generator, budget: int | None = None) -> TeacherPolicy:
    acts = [int(rng.integers(k)) for k in mdp.actions_per_state]
    return TeacherPolicy(DeterministicPolicy(acts), mdp.num_states if budget is None else budget, kind="random")


def make_teachers(mdp: TabularMDP, kind: str, k: int = DEFAULT_TEACHERS, seed: int = 0) -> AdviceModel:
    if kind == "optimal":
        base = make_optimal_teacher(mdp)
        return AdviceModel([TeacherPolicy(base.advise, base.budget, kind=kind) for _ in range(k)])
    if kind == "worst":
        base = make_worst_teacher(mdp)
        return AdviceModel([TeacherPolicy(base.advise, base.budget, kind=kind) for _ in range(k)])
    if kind == "random":
        rng = np.random.default_rng(seed)
        return AdviceModel([make_random_teacher(mdp, rng) for _ in range(k)])
    raise ValueError(f"unknown teacher kind {kind!r}")


@dataclass(frozen=True)
class MixSchedule:
    betas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if any(not 0.0 <= b <= 1.0 for b in self.betas):
            raise ValueError("every beta must lie in [0, 1]")

    @classmethod
    def geometric(cls, iters: int = DEFAULT_ITERS, base: float = 0.5) -> "MixSchedule":
        return cls(tuple(base ** i for i in range(1, iters + 1)))

    @classmethod
    def constant(cls, iters: int, beta: float) -> "MixSchedule":
        return cls((beta,) * iters)

    def __len__(self) -> int:
        return len(self.betas)

    def __getitem__(self, i: int) -> float:
        return self.betas[i]


def teacher_fires(beta: float, rng: np.random.Generator) -> bool:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta {beta} outside [0, 1]")
    return bool(rng.random() < beta)


def mixed_action(beta: float, teacher_action: int, student_action: int, rng: np.random.Generator) -> int:
    return teacher_action if teacher_fires(beta, rng) else student_action


class Advisor(Protocol):
    def advise(self, s: int) -> int | None: ...


@dataclass
class AdviceRun:
    final_policy: DeterministicPolicy
    policies: list[DeterministicPolicy]
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    teacher_fired: np.ndarray
    iteration_starts: list[int]
    counts: TransitionCounts
    betas: tuple[float, ...] = field(default=())


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    env_seq, mix_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(env_seq), np.random.default_rng(mix_seq)


def multi_teacher_advice(
    mdp: TabularMDP,
    grand_teacher: Advisor | None,
    schedule: MixSchedule,
    steps_per_iter: int | Sequence[int] = DEFAULT_STEPS_PER_ITER,
    params: RegalParams = RegalParams(),
    seed: int = 0,
) -> AdviceRun:
    """Run the mixed teacher/student loop for ``len(schedule)`` iterations.

    Iteration i follows the grand teacher with per-step probability beta_i and
    the current REGAL.C policy otherwise, collects every transition, and then
    replans with the accumulated counts at the accumulated time T. Transitions
    and the mixing coin use separate random streams, so a zero schedule
    reproduces plain REGAL.C exactly. ``grand_teacher=None`` is plain REGAL.C.
    """
    m = len(schedule)
    if m < 1:
        raise ValueError("need at least one iteration")
    lengths = [steps_per_iter] * m if isinstance(steps_per_iter, int) else list(steps_per_iter)
    if len(lengths) != m or min(lengths) < 1:
        raise ValueError("steps_per_iter must give a positive length for every iteration")
    env_rng, mix_rng = _streams(seed)
    sim = Simulator(mdp)
    counts = TransitionCounts.for_mdp(mdp)
    student = regal_c([], counts, 1, params, mdp.rewards)
    policies = [student]
    total = sum(lengths)
    states = np.empty(total + 1, dtype=np.int64)
    actions = np.empty(total, dtype=np.int64)
    rewards = np.empty(total)
    fired = np.zeros(total, dtype=bool)
    starts = []
    s = mdp.start_state
    states[0] = s
    T = 0
    for i in range(m):
        beta = schedule[i]
        starts.append(T)
        dataset: list[Step] = []
        for k in range(T, T + lengths[i]):
            advice = grand_teacher.advise(s) if grand_teacher is not None else None
            if advice is not None and teacher_fires(beta, mix_rng):
                a, fired[k] = advice, True
            else:
                a = student(s)
            s_next, r = sim.step(s, a, env_rng)
            dataset.append(Step(s, a, s_next, r))
            actions[k], rewards[k], states[k + 1] = a, r, s_next
            s = s_next
        T += lengths[i]
        student = regal_c(dataset, counts, T, params, mdp.rewards)
        counts.end_iteration()
        policies.append(student)
    return AdviceRun(student, policies, states, actions, rewards, fired, starts, counts, schedule.betas)


def regal_no_advice(
    mdp: TabularMDP,
    iters: int = DEFAULT_ITERS,
    steps_per_iter: int = DEFAULT_STEPS_PER_ITER,
    params: RegalParams = RegalParams(),
    seed: int = 0,
) -> AdviceRun:
    return multi_teacher_advice(mdp, None, MixSchedule.constant(iters, 0.0), steps_per_iter, params, seed)


def best_teacher_baseline(
    mdp: TabularMDP,
    model: AdviceModel,
    eval_steps: int,
    seed: int = 0,
) -> tuple[int, DeterministicPolicy]:
    """Simplified best-expert selection: roll each teacher out for
    ``eval_steps`` and keep the one with the highest empirical average reward.
    Never does better than the best teacher. All teachers share one random
    stream, so identical teachers score identically and index 0 wins."""
    scores = [float(np.mean(rollout(mdp, t.advise, eval_steps, seed).rewards)) for t in model.teachers]
    best = int(np.argmax(scores))
    return best, model.teachers[best].advise
