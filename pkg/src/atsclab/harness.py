"""Experiment orchestration: evaluation replicates, sweeps, reports.

Evaluation runs ``replicates`` independent simulations (seed = master seed
+ replicate index), collects metrics from vehicles leaving after the
warm-up, and emits one delimited table per controller plus per-replicate
vehicle records.  The sensitivity sweep rescales entry demand while
keeping turn proportions fixed.  Reports are byte-stable: regenerating
with the same configuration reproduces identical files.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import baseline, mappo
from .env import CorridorEnv, run_baseline
from .errors import CheckpointMismatch, MissingRoute, RouteMismatch, SpecError
from .scenario import Scenario, load_scenario, scale_demand

WORKERS_ENV_VAR = "ATSCLAB_WORKERS"

MODES = ("train", "eval-policy", "eval-baseline", "compare", "sensitivity")


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Union[str, Path, Mapping]
    mode: str = "eval-baseline"
    seed: int = 0
    replicates: int = 10
    duration_s: float = 3600.0
    warmup_s: float = 900.0
    factors: tuple[float, ...] = (0.90, 1.00, 1.05)
    out_dir: Optional[Path] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise SpecError(f"unknown mode {self.mode!r}")
        if self.replicates < 1:
            raise SpecError("replicate count must be >= 1")
        if not self.warmup_s < self.duration_s:
            raise SpecError("warm-up must be shorter than the run duration")
        for f in self.factors:
            if f <= 0.0:
                raise SpecError(f"volume scale factor must be > 0, got {f}")


# -- controller sources --------------------------------------------------------


@dataclass(frozen=True)
class BaselineSource:
    kind: str  # "asc" | "fixed"

    def label(self) -> str:
        return self.kind


@dataclass(frozen=True)
class PolicySource:
    checkpoint: Union[str, Path]

    def label(self) -> str:
        return "policy"


Source = Union[BaselineSource, PolicySource]


def _make_controllers(scenario: Scenario, env: CorridorEnv, kind: str):
    controllers = {}
    for iid in env.agent_ids:
        plan = env.plans[iid]
        if kind == "asc":
            if iid not in scenario.coordination:
                raise SpecError(f"intersection {iid} has no coordination parameters")
            controllers[iid] = baseline.AscController(plan, scenario.coordination[iid])
        elif kind == "fixed":
            if iid not in scenario.fixed_time:
                raise SpecError(f"intersection {iid} has no fixed-time schedule")
            controllers[iid] = baseline.FixedTimeController(plan, scenario.fixed_time[iid])
        else:
            raise SpecError(f"unknown baseline {kind!r}")
    return controllers


def _run_one_replicate(raw_scenario: Mapping, seed: int, duration_s: float,
                       warmup_s: float, source_desc: tuple[str, str]):
    """Worker: one seeded replicate; returns picklable metric summaries."""
    scenario = load_scenario(raw_scenario)
    env = CorridorEnv(scenario, seed=seed, episode_len_s=duration_s)
    kind, detail = source_desc
    if kind == "baseline":
        run_baseline(env, _make_controllers(scenario, env, detail))
    else:
        loaded = mappo.load_checkpoint(Path(detail))
        mappo.check_compatible(loaded.agents, env)
        hp = mappo.Hyperparams(**loaded.hyperparams)
        mappo.run_episode(env, loaded.agents, hp, None, training=False)
    metrics = env.sim.metrics(warmup_s=warmup_s)
    vehicles = [
        {"id": rec.vid, "entry_s": rec.entry_tick / 10.0, "exit_s": rec.exit_tick / 10.0,
         "path": ">".join(rec.nodes), "delay_s": rec.total_delay}
        for rec in env.sim.exit_records
    ]
    return {
        "routes": {name: (stat.n, stat.mean_travel_time)
                   for name, stat in metrics.routes.items()},
        "movements": {"/".join(key): (stat.n, stat.mean_delay)
                      for key, stat in metrics.movements.items()},
        "overall": metrics.mean_intersection_delay,
        "counts": (metrics.spawned, metrics.exited, metrics.in_network),
        "vehicles": vehicles,
    }


# -- evaluation tables ------------------------------------------------------------


@dataclass
class EvalTable:
    label: str
    scenario_name: str
    seeds: list[int]
    rows: list[dict] = field(default_factory=list)
    # rows: kind, name, replicate (int or "mean"/"std"), seed, n, value

    def values(self, kind: str, name: str) -> list[float]:
        return [r["value"] for r in self.rows
                if r["kind"] == kind and r["name"] == name
                and isinstance(r["replicate"], int)]

    def mean(self, kind: str, name: str) -> Optional[float]:
        vals = self.values(kind, name)
        return float(np.mean(vals)) if vals else None

    def names(self, kind: str) -> list[str]:
        seen = []
        for r in self.rows:
            if r["kind"] == kind and r["name"] not in seen:
                seen.append(r["name"])
        return seen

    def to_csv(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label", "scenario", "kind", "name",
                             "replicate", "seed", "n", "value"])
            for r in self.rows:
                writer.writerow([
                    self.label, self.scenario_name, r["kind"], r["name"],
                    r["replicate"], r["seed"], r["n"], f"{r['value']:.6f}",
                ])

    @classmethod
    def from_csv(cls, path: Path) -> "EvalTable":
        rows = []
        label = ""
        scenario_name = ""
        seeds = []
        with open(path, newline="") as fh:
            for record in csv.DictReader(fh):
                label = record["label"]
                scenario_name = record["scenario"]
                replicate = record["replicate"]
                replicate = int(replicate) if replicate.lstrip("-").isdigit() else replicate
                seed = int(record["seed"]) if record["seed"] else None
                if isinstance(replicate, int) and seed is not None and seed not in seeds:
                    seeds.append(seed)
                rows.append({
                    "kind": record["kind"], "name": record["name"],
                    "replicate": replicate, "seed": record["seed"],
                    "n": int(record["n"]) if record["n"] else 0,
                    "value": float(record["value"]),
                })
        return cls(label=label, scenario_name=scenario_name, seeds=seeds, rows=rows)


def _summaries(rows: list[dict]) -> list[dict]:
    grouped: dict[tuple[str, str], list[dict]] = {}
    for r in rows:
        grouped.setdefault((r["kind"], r["name"]), []).append(r)
    out = []
    for (kind, name), group in sorted(grouped.items()):
        vals = [g["value"] for g in group]
        n = sum(g["n"] for g in group)
        out.append({"kind": kind, "name": name, "replicate": "mean", "seed": "",
                    "n": n, "value": float(np.mean(vals))})
        out.append({"kind": kind, "name": name, "replicate": "std", "seed": "",
                    "n": n, "value": float(np.std(vals))})
    return out


def run_eval(config: ExperimentConfig, source: Source,
             scenario: Optional[Scenario] = None,
             write_outputs: bool = True) -> EvalTable:
    """Replicated evaluation of one controller source.

    Raises MissingRoute if a scenario route never completes a vehicle in
    any replicate, and CheckpointMismatch before spending any simulation
    time if the checkpoint does not fit the scenario.
    """
    if scenario is None:
        scenario = load_scenario(config.scenario)
    if isinstance(source, PolicySource):
        loaded = mappo.load_checkpoint(Path(source.checkpoint))
        mappo.check_compatible(loaded.agents, CorridorEnv(scenario, seed=0))
        source_desc = ("checkpoint", str(source.checkpoint))
    else:
        _make_controllers(scenario, CorridorEnv(scenario, seed=0), source.kind)
        source_desc = ("baseline", source.kind)

    seeds = [config.seed + r for r in range(config.replicates)]
    tasks = [(scenario.raw, seed, config.duration_s, config.warmup_s, source_desc)
             for seed in seeds]
    workers = worker_count()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one_replicate, *zip(*tasks)))
    else:
        results = [_run_one_replicate(*task) for task in tasks]

    rows: list[dict] = []
    for r, (seed, result) in enumerate(zip(seeds, results)):
        for name, (n, value) in sorted(result["routes"].items()):
            rows.append({"kind": "route", "name": name, "replicate": r,
                         "seed": seed, "n": n, "value": value})
        for name, (n, value) in sorted(result["movements"].items()):
            rows.append({"kind": "movement", "name": name, "replicate": r,
                         "seed": seed, "n": n, "value": value})
        if result["overall"] is not None:
            rows.append({"kind": "overall", "name": "mean_intersection_delay",
                         "replicate": r, "seed": seed,
                         "n": sum(n for n, _ in result["movements"].values()),
                         "value": result["overall"]})

    for route in scenario.routes:
        if not any(r["kind"] == "route" and r["name"] == route.name for r in rows):
            raise MissingRoute(
                f"route {route.name!r} completed no vehicles in any replicate")

    rows.sort(key=lambda r: (r["kind"], r["name"], r["replicate"]))
    rows.extend(_summaries(rows))
    table = EvalTable(label=source.label(), scenario_name=scenario.name,
                      seeds=seeds, rows=rows)

    if write_outputs and config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        table.to_csv(out / f"eval_{source.label()}.csv")
        for r, result in enumerate(results):
            _write_vehicle_records(out / f"vehicles_{source.label()}_r{r}.csv",
                                   result["vehicles"])
    return table


def _write_vehicle_records(path: Path, vehicles: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "entry_s", "exit_s", "path", "delay_s"])
        for v in vehicles:
            writer.writerow([v["id"], f"{v['entry_s']:.1f}", f"{v['exit_s']:.1f}",
                             v["path"], f"{v['delay_s']:.6f}"])


# -- comparison -----------------------------------------------------------------------


def compare_report(baseline_table: EvalTable, policy_table: EvalTable) -> list[dict]:
    """Per route/movement: means, percent change, paired win counts.

    Raises RouteMismatch when the two tables do not cover identical routes.
    Movements with no crossings under one controller are skipped (rare
    turns may simply not occur in a short window).
    """
    rows = []
    for kind in ("route", "movement", "overall"):
        base_names = baseline_table.names(kind)
        pol_names = policy_table.names(kind)
        if kind == "movement":
            names = [n for n in base_names if n in pol_names]
        else:
            if base_names != pol_names:
                raise RouteMismatch(
                    f"{kind} entries differ: {base_names} vs {pol_names}")
            names = base_names
        for name in names:
            base_vals = baseline_table.values(kind, name)
            pol_vals = policy_table.values(kind, name)
            base_mean = float(np.mean(base_vals))
            pol_mean = float(np.mean(pol_vals))
            pct = 100.0 * (pol_mean - base_mean) / base_mean if base_mean else float("nan")
            paired = min(len(base_vals), len(pol_vals))
            wins = sum(1 for b, p in zip(base_vals[:paired], pol_vals[:paired]) if p < b)
            rows.append({
                "kind": kind, "name": name,
                "baseline_mean": base_mean, "policy_mean": pol_mean,
                "pct_change": pct, "policy_wins": wins, "n_replicates": paired,
            })
    return rows


def write_compare_csv(rows: Sequence[dict], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "name", "baseline_mean", "policy_mean",
                         "pct_change", "policy_wins", "n_replicates"])
        for r in rows:
            writer.writerow([r["kind"], r["name"], f"{r['baseline_mean']:.6f}",
                             f"{r['policy_mean']:.6f}", f"{r['pct_change']:.3f}",
                             r["policy_wins"], r["n_replicates"]])


# -- sensitivity -----------------------------------------------------------------------


@dataclass
class SensitivityResult:
    factors: tuple[float, ...]
    tables: dict[tuple[float, str], EvalTable]
    change_rows: list[dict]


def run_sensitivity(config: ExperimentConfig, policy: Optional[PolicySource],
                    base: Optional[BaselineSource],
                    scenario: Optional[Scenario] = None) -> SensitivityResult:
    """Evaluate each controller at every demand level; summarize the change
    in means between the lowest and highest level."""
    if scenario is None:
        scenario = load_scenario(config.scenario)
    sources = [s for s in (base, policy) if s is not None]
    if not sources:
        raise SpecError("sensitivity needs at least one controller source")
    factors = tuple(sorted(config.factors))
    tables: dict[tuple[float, str], EvalTable] = {}
    for factor in factors:
        scaled = scale_demand(scenario, factor)
        for source in sources:
            table = run_eval(config, source, scenario=scaled, write_outputs=False)
            tables[(factor, source.label())] = table

    low, high = factors[0], factors[-1]
    change_rows = []
    for source in sources:
        table_low = tables[(low, source.label())]
        table_high = tables[(high, source.label())]
        for kind in ("route", "overall"):
            for name in table_low.names(kind):
                v_low = table_low.mean(kind, name)
                v_high = table_high.mean(kind, name)
                if v_low is None or v_high is None:
                    continue
                change_rows.append({
                    "controller": source.label(), "kind": kind, "name": name,
                    "low_factor": low, "high_factor": high,
                    "value_low": v_low, "value_high": v_high,
                    "pct_change": 100.0 * (v_high - v_low) / v_low if v_low else float("nan"),
                })

    if config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sensitivity.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["factor", "controller", "kind", "name", "mean", "std", "n"])
            for (factor, label), table in sorted(tables.items()):
                for kind in ("route", "movement", "overall"):
                    for name in table.names(kind):
                        vals = table.values(kind, name)
                        writer.writerow([
                            f"{factor:.2f}", label, kind, name,
                            f"{float(np.mean(vals)):.6f}",
                            f"{float(np.std(vals)):.6f}", len(vals)])
        with open(out / "sensitivity_change.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["controller", "kind", "name", "low_factor", "high_factor",
                             "value_low", "value_high", "pct_change"])
            for r in change_rows:
                writer.writerow([r["controller"], r["kind"], r["name"],
                                 f"{r['low_factor']:.2f}", f"{r['high_factor']:.2f}",
                                 f"{r['value_low']:.6f}", f"{r['value_high']:.6f}",
                                 f"{r['pct_change']:.3f}"])
    return SensitivityResult(factors=factors, tables=tables, change_rows=change_rows)


# -- training ------------------------------------------------------------------------


def write_learning_curve_csv(curve: Sequence[dict], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    agent_cols = sorted({k for row in curve for k in row if k.startswith("reward_")})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "mean_reward", *agent_cols, "steps"])
        for row in curve:
            writer.writerow([
                row["episode"], f"{row['mean_reward']:.6f}",
                *(f"{row[c]:.6f}" for c in agent_cols),
                row["steps"],
            ])


def run_training(config: ExperimentConfig, hp: mappo.Hyperparams, n_episodes: int,
                 checkpoint_every: int = 25, resume: bool = True,
                 progress=None) -> mappo.TrainResult:
    """Train on the configured scenario, leaving checkpoint + curve + figure.

    Training resumes from the latest checkpoint in the output directory
    when one exists, so an interrupted run restarts where it stopped.
    """
    scenario = load_scenario(config.scenario)
    out = Path(config.out_dir) if config.out_dir is not None else None
    result = mappo.train(scenario, hp, n_episodes, config.seed, out_dir=out,
                         checkpoint_every=checkpoint_every, resume=resume,
                         progress=progress)
    if out is not None:
        write_learning_curve_csv(result.curve, out / "learning_curve.csv")
        if result.curve:
            from . import plots
            plots.learning_curves(result.curve, out / "learning_curve.svg")
    return result
