"""Command line: run experiments, dump domains, analyze trace CSVs."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analysis import Degenerate, ReturnEstimate, negative_transfer_check, ratio_of_regrets, transfer_gap
from .domains import DOMAINS, build_domain
from .harness import (
    ALGORITHMS,
    TEACHERS,
    ExperimentConfig,
    emit_csv,
    emit_summary,
    emit_svg,
    read_trace_csv,
    run_experiment,
    run_suite,
)
from .mdp import relative_value_iteration

log = logging.getLogger("teachadvice")

# flag dest -> config field
OVERRIDES = {
    "domain": "domain",
    "algo": "algo",
    "teacher": "teacher",
    "seed": "seed",
    "trials": "trials",
    "steps_per_iter": "steps_per_iter",
    "iters": "iters",
    "beta_base": "beta_base",
    "H": "H",
    "delta": "delta",
    "k": "k",
    "lock_n": "lock_n",
    "construction": "construction",
}


def _slug(label: str) -> str:
    return label.replace("[", "-").replace("]", "")


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    cfg = cfg.override(**{field: getattr(args, dest) for dest, field in OVERRIDES.items()})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_suite(cfg) if args.suite else [run_experiment(cfg)]
    stem = cfg.domain
    for res in results:
        emit_csv(res, out / f"{stem}_{_slug(res.config.label)}.csv")
    emit_summary(results, out / f"{stem}_summary.json")
    emit_svg(results, out / f"{stem}.svg")
    cfg.dump(out / f"{stem}_config.json")
    for res in results:
        s = res.summary()
        print(f"{s['label']:<32} final-window {s['final_window_mean']:+.4f}  regret {s['final_regret_mean']:9.2f} +- {s['final_regret_se']:.2f}")
    return 0


def cmd_build_domain(args) -> int:
    mdp = build_domain(args.domain, args.lock_n)
    if args.out:
        mdp.dump(args.out)
    else:
        json.dump(mdp.to_dict(), sys.stdout)
        sys.stdout.write("\n")
    log.info("%s: %d states, %d state-action pairs", args.domain, mdp.num_states, mdp.num_pairs)
    return 0


def _number(x):
    return x.value if isinstance(x, Degenerate) else x


def cmd_analyze(args) -> int:
    mdp = build_domain(args.domain, args.lock_n)
    gain = args.gain if args.gain is not None else relative_value_iteration(mdp)[0].gain
    r_max = args.r_max if args.r_max is not None else mdp.r_max
    R1, R2 = read_trace_csv(args.trace1), read_trace_csv(args.trace2)
    RS = read_trace_csv(args.source) if args.source else R1
    T = min(R1.shape[1], R2.shape[1], RS.shape[1])
    tgt1 = ReturnEstimate.of(R1[:, :T].sum(axis=1), T)
    tgt2 = ReturnEstimate.of(R2[:, :T].sum(axis=1), T)
    src = ReturnEstimate.of(RS[:, :T].sum(axis=1), T)
    gap = transfer_gap(src, tgt1)
    intervals = (src.interval(args.delta, r_max), tgt2.interval(args.delta, r_max))
    report = negative_transfer_check(gap, src.mean, tgt2.mean, intervals, gain, T)
    doc = {
        "horizon": T,
        "gain": gain,
        "rho_hat": _number(ratio_of_regrets(gain * T - tgt1.mean, gain * T - tgt2.mean)),
        "transfer_gap": gap,
        "eq4_condition": report.eq4_condition,
        "negative_transfer": report.negative_transfer,
        "rho_low": _number(report.rho_low),
        "rho_high": _number(report.rho_high),
        "bernstein": {
            name: {"center": iv.center, "half_width": iv.half_width, "n": iv.n, "sigma": iv.sigma}
            for name, iv in zip(("source", "baseline"), intervals)
        },
    }
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="teachadvice", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run seeded trials and write CSV, SVG and a JSON summary")
    run.add_argument("--config", help="JSON config file; flags override its values")
    run.add_argument("--domain", choices=DOMAINS)
    run.add_argument("--algo", choices=ALGORITHMS)
    run.add_argument("--teacher", choices=TEACHERS)
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--steps-per-iter", type=int)
    run.add_argument("--iters", type=int)
    run.add_argument("--beta-base", type=float)
    run.add_argument("--H", type=float)
    run.add_argument("--delta", type=float)
    run.add_argument("--k", type=int, help="number of teachers")
    run.add_argument("--lock-n", type=int)
    run.add_argument("--construction", choices=("online", "offline"))
    run.add_argument("--suite", action="store_true", help="run all six settings for the domain")
    run.add_argument("--out", default="results")
    run.set_defaults(func=cmd_run)

    bd = sub.add_parser("build-domain", help="dump a benchmark MDP as JSON")
    bd.add_argument("--domain", choices=DOMAINS, required=True)
    bd.add_argument("--lock-n", type=int, default=5)
    bd.add_argument("--out")
    bd.set_defaults(func=cmd_build_domain)

    an = sub.add_parser("analyze", help="regret ratio, Bernstein intervals and negative-transfer test")
    an.add_argument("trace1", help="trace CSV of the policy under test, on the target task")
    an.add_argument("trace2", help="trace CSV of the baseline policy, on the target task")
    an.add_argument("--source", help="trace CSV of the tested policy on its source task (default: trace1)")
    an.add_argument("--domain", choices=DOMAINS, default="combination-lock")
    an.add_argument("--lock-n", type=int, default=5)
    an.add_argument("--gain", type=float, help="optimal gain (default: solved from --domain)")
    an.add_argument("--r-max", type=float, help="per-step reward bound (default: from --domain)")
    an.add_argument("--delta", type=float, default=0.05)
    an.add_argument("--out")
    an.set_defaults(func=cmd_analyze)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
