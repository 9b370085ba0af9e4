"""Seeded experiment runner: configs, trials, CSV/JSON/SVG output."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .advice import (
    MixSchedule,
    best_teacher_baseline,
    build_grand_teacher_offline,
    build_grand_teacher_online,
    make_teachers,
    multi_teacher_advice,
    regal_no_advice,
)
from .analysis import cumulative_regret
from .domains import DOMAINS, build_domain
from .mdp import DeterministicPolicy, TabularMDP, evaluate_policy_average_reward, relative_value_iteration, rollout
from .regal import RegalParams

log = logging.getLogger(__name__)

ALGORITHMS = ("ours", "regal-no-advice", "optimal-policy", "best-teacher-baseline")
TEACHERS = ("optimal", "worst", "random")
SMOOTHING_WINDOW = 200

# the six curves of one figure panel
SUITE = (
    ("ours", "optimal"),
    ("ours", "random"),
    ("ours", "worst"),
    ("regal-no-advice", "optimal"),
    ("optimal-policy", "optimal"),
    ("best-teacher-baseline", "worst"),
)


@dataclass(frozen=True)
class ExperimentConfig:
    domain: str = "combination-lock"
    algo: str = "ours"
    teacher: str = "optimal"
    k: int = 10
    iters: int = 10
    steps_per_iter: int = 200
    beta_base: float = 0.5
    H: float = 1000.0
    delta: float = 0.8
    trials: int = 10
    seed: int = 0
    lock_n: int = 5
    construction: str = "online"  # grand teacher: online cache or offline exploration

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algo!r}")
        if self.teacher not in TEACHERS:
            raise ValueError(f"unknown teacher kind {self.teacher!r}")
        if self.construction not in ("online", "offline"):
            raise ValueError(f"unknown grand-teacher construction {self.construction!r}")
        for name in ("k", "iters", "steps_per_iter", "trials", "lock_n"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.beta_base <= 1.0:
            raise ValueError("beta_base must lie in [0, 1]")
        RegalParams(span_ceiling=self.H, delta=self.delta)

    @property
    def horizon(self) -> int:
        return self.iters * self.steps_per_iter

    @property
    def label(self) -> str:
        if self.algo in ("ours", "best-teacher-baseline"):
            return f"{self.algo}[{self.teacher}]"
        return self.algo

    @property
    def params(self) -> RegalParams:
        return RegalParams(span_ceiling=self.H, delta=self.delta)

    def schedule(self) -> MixSchedule:
        return MixSchedule.geometric(self.iters, self.beta_base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**doc)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def override(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def trailing_mean(x: np.ndarray, window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Mean of the last min(t, window) values at every step t."""
    c = np.concatenate([[0.0], np.cumsum(x)])
    t = np.arange(1, x.size + 1)
    lo = np.maximum(t - window, 0)
    return (c[t] - c[lo]) / (t - lo)


@dataclass
class TrialResult:
    seed: int
    rewards: np.ndarray
    smoothed: np.ndarray
    final_policy_gain: float
    regret: np.ndarray
    teacher_fired: np.ndarray
    window: int = SMOOTHING_WINDOW
    run: object | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.rewards.size == self.smoothed.size == self.regret.size == self.teacher_fired.size:
            raise ValueError("trial curves must share one length")

    def final_window(self, steps: int = 400) -> float:
        return float(self.rewards[-steps:].mean())


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    gain: float
    trials: list[TrialResult]

    @property
    def rewards(self) -> np.ndarray:
        return np.stack([t.rewards for t in self.trials])

    @property
    def mean_reward(self) -> np.ndarray:
        return self.rewards.mean(axis=0)

    @property
    def mean_regret(self) -> np.ndarray:
        return np.stack([t.regret for t in self.trials]).mean(axis=0)

    @property
    def smoothed(self) -> np.ndarray:
        return trailing_mean(self.mean_reward)

    def summary(self) -> dict:
        fw = [t.final_window() for t in self.trials]
        final = [float(t.regret[-1]) for t in self.trials]
        n = len(self.trials)
        return {
            "label": self.config.label,
            "config": self.config.to_dict(),
            "optimal_gain": self.gain,
            "smoothing_window": SMOOTHING_WINDOW,
            "seeds": [t.seed for t in self.trials],
            "final_window_mean": float(np.mean(fw)),
            "final_window_per_trial": fw,
            "final_regret_mean": float(np.mean(final)),
            "final_regret_se": float(np.std(final, ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
            "final_policy_gain": [t.final_policy_gain for t in self.trials],
            "teacher_steps": [int(t.teacher_fired.sum()) for t in self.trials],
        }


def _grand_teacher(mdp: TabularMDP, cfg: ExperimentConfig, seed: int):
    model = make_teachers(mdp, cfg.teacher, cfg.k, seed=seed)
    if cfg.construction == "offline":
        gt, _ = build_grand_teacher_offline(mdp, model, np.random.default_rng([seed, 1]))
        return gt
    return build_grand_teacher_online(model)


def run_trial(mdp: TabularMDP, cfg: ExperimentConfig, seed: int, gain: float, optimal: DeterministicPolicy) -> TrialResult:
    T = cfg.horizon
    run = None
    if cfg.algo == "ours":
        run = multi_teacher_advice(mdp, _grand_teacher(mdp, cfg, seed), cfg.schedule(), cfg.steps_per_iter, cfg.params, seed)
    elif cfg.algo == "regal-no-advice":
        run = regal_no_advice(mdp, cfg.iters, cfg.steps_per_iter, cfg.params, seed)
    if run is not None:
        rewards, fired, final = run.rewards, run.teacher_fired, run.final_policy
    else:
        if cfg.algo == "optimal-policy":
            final = optimal
        else:
            model = make_teachers(mdp, cfg.teacher, cfg.k, seed=seed)
            _, final = best_teacher_baseline(mdp, model, cfg.steps_per_iter, seed)
        rewards = np.asarray(rollout(mdp, final, T, seed).rewards)
        fired = np.zeros(T, dtype=bool)
    return TrialResult(
        seed,
        rewards,
        trailing_mean(rewards),
        evaluate_policy_average_reward(mdp, final),
        cumulative_regret(rewards, gain).regret,
        fired,
        run=run,
    )


def run_experiment(cfg: ExperimentConfig, mdp: TabularMDP | None = None) -> ExperimentResult:
    mdp = build_domain(cfg.domain, cfg.lock_n) if mdp is None else mdp
    gb, optimal = relative_value_iteration(mdp)
    trials = []
    for i in range(cfg.trials):
        seed = cfg.seed + i
        try:
            trials.append(run_trial(mdp, cfg, seed, gb.gain, optimal))
        except Exception as exc:
            raise RuntimeError(f"{cfg.label} on {cfg.domain}: trial {i} (seed {seed}) failed: {exc}") from exc
        log.info("%s trial %d done, final window %.3f", cfg.label, i, trials[-1].final_window())
    return ExperimentResult(cfg, gb.gain, trials)


def run_suite(base: ExperimentConfig) -> list[ExperimentResult]:
    mdp = build_domain(base.domain, base.lock_n)
    return [run_experiment(replace(base, algo=a, teacher=t), mdp) for a, t in SUITE]


def csv_header(trials: int) -> list[str]:
    return ["step", "mean_reward"] + [f"trial_{i}" for i in range(trials)] + ["cumulative_regret"]


def emit_csv(result: ExperimentResult, path: str | Path) -> None:
    if not result.trials:
        raise ValueError("no trials to write")
    R = result.rewards
    mean, regret = result.mean_reward, result.mean_regret
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(R.shape[0]))
        for t in range(R.shape[1]):
            w.writerow([t + 1, repr(float(mean[t]))] + [repr(float(x)) for x in R[:, t]] + [repr(float(regret[t]))])


def read_trace_csv(path: str | Path) -> np.ndarray:
    """Per-trial reward columns of a CSV written by :func:`emit_csv`, shape (trials, T)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    cols = [i for i, h in enumerate(header) if h.startswith("trial_")]
    if not cols or header[0] != "step":
        raise ValueError(f"{path}: not a trace CSV (header {header[:3]}...)")
    return np.array([[float(r[i]) for i in cols] for r in rows[1:]]).T


def emit_summary(results: Sequence[ExperimentResult], path: str | Path) -> None:
    Path(path).write_text(json.dumps([r.summary() for r in results], indent=2) + "\n")


def emit_svg(results: Sequence[ExperimentResult], path: str | Path, title: str = "") -> None:
    if not results:
        raise ValueError("no results to plot")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "teachadvice"
    fig, ax = plt.subplots(figsize=(7, 4))
    for res in results:
        y = res.smoothed
        ax.plot(np.arange(1, y.size + 1), y, label=res.config.label, linewidth=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel(f"average reward (trailing {SMOOTHING_WINDOW})")
    ax.set_title(title or results[0].config.domain)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
