"""Command-line entry point: ``attnswitch solve|run|sweep|report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .assist import scaling_table
from .domain import load_instance
from .errors import AttnSwitchError
from .harness import (
    POLICIES,
    EpisodeConfig,
    ExperimentConfig,
    aggregate,
    context_for,
    load_config,
    records_from_csv,
    run_episode,
    summary_to_csv,
    sweep,
    write_sweep,
    write_trace,
)
from .human import sample_pool
from .planner import save_cost_table

log = logging.getLogger("attnswitch")


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    cfg = load_config(args.config)[0] if args.config else ExperimentConfig()
    ctx = context_for(cfg, inst, args.out)
    save_cost_table(str(args.out) + ".cost", ctx.cost)
    print(f"states: {ctx.space.n_states}")
    print(f"optimal human actions from start: {int(ctx.cost.v[ctx.space.initial])}")
    print(f"behaviour cells: {ctx.grid.size}")
    print(f"bellman residual: {ctx.policy.residual:.3e}")
    print(f"policy cache: {args.out}")
    for row in scaling_table(ctx.space.n_states, ctx.grid.size):
        print(f"K={row['K']}: factored {row['factored']} states, joint {row['joint']:.3e}")
    return 0


def cmd_run(args) -> int:
    cfg, inst = load_config(args.config)
    if args.heuristic:
        cfg = cfg.model_copy(update={"heuristic": args.heuristic})
    ctx = context_for(cfg, inst, args.policy_cache)
    pool = sample_pool(cfg.pool, ctx.cost, cfg.seeds.pool, cfg.trust_form)
    if args.workers > len(pool):
        raise AttnSwitchError(f"--workers {args.workers} exceeds the pool size {len(pool)}")
    rng = np.random.default_rng(np.random.SeedSequence([args.seed]))
    ids = tuple(int(i) for i in rng.choice(len(pool), size=args.workers, replace=False))
    ep = EpisodeConfig(ctx, tuple(pool[i] for i in ids), args.policy, cfg.heuristic,
                       args.seed, cfg.step_cap, ids)
    trace: list[dict] | None = [] if args.trace else None
    rec = run_episode(ep, trace, trace_beliefs=args.trace_beliefs)
    if args.trace:
        write_trace(trace, args.trace)
    print(json.dumps(asdict(rec), indent=2))
    return 0


def cmd_sweep(args) -> int:
    cfg, inst = load_config(args.config)
    if args.heuristic:
        cfg = cfg.model_copy(update={"heuristic": args.heuristic})
    records = sweep(cfg, inst, args.policy_cache)
    write_sweep(records, args.out)
    print(f"{len(records)} runs written to {args.out}")
    return 0


def _print_report(summary) -> None:
    print(f"{'K':>2} {'policy':<10} {'runs':>4} {'actions':>16} {'interventions':>16} {'moves':>6}")
    for r in summary.rows:
        print(f"{r.k:>2} {r.policy:<10} {r.runs:>4} {r.actions_mean:>8.2f} ± {r.actions_std:<5.2f} "
              f"{r.interventions_mean:>8.2f} ± {r.interventions_std:<5.2f} {r.relocations_mean:>6.2f}")
    if summary.reductions:
        print("\nreductions (%)")
        for entry in summary.reductions:
            parts = [f"{k}={v:.2f}" for k, v in entry.items() if k != "K"]
            print(f"K={entry['K']}: " + ", ".join(parts))
    if summary.categories:
        print("\nmean interventions by behaviour category")
        for c in summary.categories:
            print(f"{c['category']:<20} {c['policy']:<10} n={c['workers']:<4} {c['interventions_mean']:.3f}")


def cmd_report(args) -> int:
    src = Path(args.indir)
    runs = src / "runs.csv" if src.is_dir() else src
    summary = aggregate(records_from_csv(runs.read_text()))
    _print_report(summary)
    if args.write_summary and src.is_dir():
        (src / "summary.csv").write_text(summary_to_csv(summary))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attnswitch", description="Single-robot multi-worker assistance planner.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the per-worker policy and write a cache file")
    p.add_argument("--instance", required=True)
    p.add_argument("--out", required=True, help="policy cache path; the cost table goes to OUT.cost")
    p.add_argument("--config", help="experiment config supplying grid, rewards and discount")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("run", help="run one seeded episode and print its record")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--policy", choices=POLICIES, default="attention")
    p.add_argument("--heuristic", choices=("qvalue", "one-step", "passive"))
    p.add_argument("--policy-cache")
    p.add_argument("--trace", help="write a JSON-lines step trace here")
    p.add_argument("--trace-beliefs", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the matched-seed experiment grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--heuristic", choices=("qvalue", "one-step", "passive"))
    p.add_argument("--policy-cache")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarise a sweep directory")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--write-summary", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (AttnSwitchError, OSError, ValueError) as exc:
        print(f"attnswitch: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
