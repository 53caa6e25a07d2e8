"""Command-line entry point.

Subcommands: ``train``, ``eval``, ``sensitivity``, ``compare``, ``plot``.
All tabular output is CSV; report paths also render figures (SVG) next to
the tables.  Exit code 0 on success; on failure a machine-readable JSON
error line goes to stderr and the exit code is nonzero.  The environment
variable ``ATSCLAB_WORKERS`` sets the replicate worker count.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, mappo, plots
from .errors import AtscLabError
from .harness import BaselineSource, ExperimentConfig, PolicySource


def _parse_factors(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atsclab",
        description="Corridor lab for adaptive traffic signal control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train MA-PPO agents on a scenario")
    train.add_argument("--scenario", required=True,
                       help="bundled name (toy2, corridor7) or path to a scenario file")
    train.add_argument("--episodes", type=int, required=True)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--episode-len", type=float, default=1800.0,
                       help="episode length in simulation seconds")
    train.add_argument("--checkpoint-every", type=int, default=25)
    train.add_argument("--entropy-coef", type=float, default=0.0)
    train.add_argument("--no-resume", action="store_true",
                       help="ignore an existing checkpoint in the output directory")

    ev = sub.add_parser("eval", help="evaluate a checkpoint or baseline")
    ev.add_argument("--scenario", required=True)
    group = ev.add_mutually_exclusive_group(required=True)
    group.add_argument("--checkpoint", help="path to a training checkpoint")
    group.add_argument("--baseline", choices=["asc", "fixed"])
    ev.add_argument("--replicates", type=int, default=10)
    ev.add_argument("--duration", type=float, default=3600.0)
    ev.add_argument("--warmup", type=float, default=900.0)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out", required=True)

    sens = sub.add_parser("sensitivity", help="volume sensitivity sweep")
    sens.add_argument("--scenario", required=True)
    sens.add_argument("--checkpoint", help="policy checkpoint to include")
    sens.add_argument("--baseline", choices=["asc", "fixed"], default="fixed")
    sens.add_argument("--factors", type=_parse_factors, default=(0.90, 1.00, 1.05),
                      help="comma-separated demand multipliers (default 0.9,1.0,1.05)")
    sens.add_argument("--replicates", type=int, default=10)
    sens.add_argument("--duration", type=float, default=3600.0)
    sens.add_argument("--warmup", type=float, default=900.0)
    sens.add_argument("--seed", type=int, default=0)
    sens.add_argument("--out", required=True)

    cmp_ = sub.add_parser("compare", help="compare two evaluation tables")
    cmp_.add_argument("baseline_csv", help="eval CSV of the reference controller")
    cmp_.add_argument("policy_csv", help="eval CSV of the candidate controller")
    cmp_.add_argument("--out", required=True)

    plot = sub.add_parser("plot", help="render figures from result files")
    plot.add_argument("--curve", help="learning_curve.csv to plot")
    plot.add_argument("--eval", nargs="+", dest="eval_csvs",
                      help="one or more eval CSVs to box-plot together")
    plot.add_argument("--out", required=True)

    return parser


def cmd_train(args) -> int:
    config = ExperimentConfig(scenario=args.scenario, mode="train", seed=args.seed,
                              out_dir=Path(args.out))
    hp = mappo.Hyperparams(episode_len_s=args.episode_len,
                           entropy_coef=args.entropy_coef)

    def progress(row):
        print(f"episode {row['episode']:4d}  mean reward {row['mean_reward']:9.4f}  "
              f"steps {row['steps']}", flush=True)

    result = harness.run_training(config, hp, args.episodes,
                                  checkpoint_every=args.checkpoint_every,
                                  resume=not args.no_resume, progress=progress)
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"learning curve: {Path(args.out) / 'learning_curve.csv'}")
    return 0


def cmd_eval(args) -> int:
    config = ExperimentConfig(
        scenario=args.scenario,
        mode="eval-policy" if args.checkpoint else "eval-baseline",
        seed=args.seed, replicates=args.replicates,
        duration_s=args.duration, warmup_s=args.warmup, out_dir=Path(args.out))
    source = (PolicySource(args.checkpoint) if args.checkpoint
              else BaselineSource(args.baseline))
    table = harness.run_eval(config, source)
    out = Path(args.out)
    plots.eval_boxes({table.label: table}, out / f"eval_{table.label}_routes.svg")
    for row in table.rows:
        if row["replicate"] == "mean":
            print(f"{row['kind']:9s} {row['name']:28s} mean {row['value']:10.3f} "
                  f"(n={row['n']})")
    print(f"table: {out / f'eval_{table.label}.csv'}")
    return 0


def cmd_sensitivity(args) -> int:
    config = ExperimentConfig(
        scenario=args.scenario, mode="sensitivity", seed=args.seed,
        replicates=args.replicates, duration_s=args.duration,
        warmup_s=args.warmup, factors=tuple(args.factors), out_dir=Path(args.out))
    policy = PolicySource(args.checkpoint) if args.checkpoint else None
    base = BaselineSource(args.baseline) if args.baseline else None
    result = harness.run_sensitivity(config, policy, base)
    out = Path(args.out)
    plots.sensitivity_lines(result, out / "sensitivity_routes.svg")
    for row in result.change_rows:
        print(f"{row['controller']:8s} {row['kind']:8s} {row['name']:28s} "
              f"{row['low_factor']:.2f}->{row['high_factor']:.2f}: "
              f"{row['pct_change']:+.1f}%")
    print(f"tables: {out / 'sensitivity.csv'}, {out / 'sensitivity_change.csv'}")
    return 0


def cmd_compare(args) -> int:
    base = harness.EvalTable.from_csv(args.baseline_csv)
    policy = harness.EvalTable.from_csv(args.policy_csv)
    rows = harness.compare_report(base, policy)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_compare_csv(rows, out / "compare.csv")
    plots.eval_boxes({base.label: base, policy.label: policy},
                     out / "compare_routes.svg")
    for row in rows:
        print(f"{row['kind']:9s} {row['name']:28s} "
              f"{row['baseline_mean']:9.3f} -> {row['policy_mean']:9.3f}  "
              f"{row['pct_change']:+.1f}%  wins {row['policy_wins']}/{row['n_replicates']}")
    print(f"report: {out / 'compare.csv'}")
    return 0


def cmd_plot(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    produced = []
    if args.curve:
        import csv as csv_mod
        with open(args.curve, newline="") as fh:
            curve = []
            for record in csv_mod.DictReader(fh):
                row = {"episode": int(record["episode"]),
                       "mean_reward": float(record["mean_reward"])}
                for key, value in record.items():
                    if key.startswith("reward_"):
                        row[key] = float(value)
                curve.append(row)
        produced.append(plots.learning_curves(curve, out / "learning_curve.svg"))
    if args.eval_csvs:
        tables = {}
        for path in args.eval_csvs:
            table = harness.EvalTable.from_csv(path)
            tables[table.label] = table
        produced.append(plots.eval_boxes(tables, out / "eval_routes.svg"))
        produced.append(plots.eval_boxes(tables, out / "eval_movements.svg",
                                         kind="movement"))
    if not produced:
        raise AtscLabError("plot: nothing to do (pass --curve and/or --eval)")
    for path in produced:
        print(f"figure: {path}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sensitivity": cmd_sensitivity,
    "compare": cmd_compare,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except AtscLabError as err:
        print(json.dumps({"error": type(err).__name__, "message": str(err)}),
              file=sys.stderr)
        return 2
    except (OSError, ValueError) as err:
        print(json.dumps({"error": type(err).__name__, "message": str(err)}),
              file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
