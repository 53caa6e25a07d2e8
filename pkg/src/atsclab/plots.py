"""Figure rendering for reports: learning curves, travel-time boxes, sweeps.

Everything draws to files (SVG by default) with the Agg backend; there is
no interactive UI.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402


def _moving_average(values: Sequence[float], window: int = 20) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return values
    window = min(window, len(values))
    kernel = np.ones(window) / window
    smoothed = np.convolve(values, kernel, mode="valid")
    pad = np.full(len(values) - len(smoothed), np.nan)
    return np.concatenate([pad, smoothed])


def learning_curves(curve: Sequence[Mapping], out_path: Path, window: int = 20) -> Path:
    """Per-agent and global mean step reward by episode, with moving average."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    episodes = [row["episode"] for row in curve]
    agent_cols = sorted({k for row in curve for k in row if k.startswith("reward_")})

    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for col in agent_cols:
        ax.plot(episodes, [row[col] for row in curve], alpha=0.35, linewidth=0.9,
                label=col.removeprefix("reward_"))
    global_rewards = [row["mean_reward"] for row in curve]
    ax.plot(episodes, global_rewards, color="black", alpha=0.45, linewidth=0.9,
            label="all agents")
    ax.plot(episodes, _moving_average(global_rewards, window), color="black",
            linewidth=2.0, label=f"all agents ({window}-ep avg)")
    ax.set_xlabel("episode")
    ax.set_ylabel("mean step reward")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def eval_boxes(tables: Mapping[str, "EvalTable"], out_path: Path,
               kind: str = "route") -> Path:
    """Box plot of per-replicate values, one group per route/metric name."""
    from .harness import EvalTable  # local import to avoid a cycle

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    labels = list(tables)
    names: list[str] = []
    for table in tables.values():
        for name in table.names(kind):
            if name not in names:
                names.append(name)

    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(names) * len(labels), 4.2))
    data, positions, ticks, tick_pos = [], [], [], []
    slot = 0
    for name in names:
        group_start = slot
        for label in labels:
            vals = tables[label].values(kind, name)
            if vals:
                data.append(vals)
                positions.append(slot)
            slot += 1
        ticks.append(name)
        tick_pos.append((group_start + slot - 1) / 2.0)
        slot += 1
    box = ax.boxplot(data, positions=positions, widths=0.8, patch_artist=True)
    colors = plt.cm.tab10.colors
    for i, patch in enumerate(box["boxes"]):
        patch.set_facecolor(colors[i % len(labels) % len(colors)])
        patch.set_alpha(0.6)
    handles = [plt.Line2D([], [], color=colors[i % len(colors)], linewidth=6, alpha=0.6)
               for i in range(len(labels))]
    ax.legend(handles, labels, fontsize=8)
    ax.set_xticks(tick_pos)
    ax.set_xticklabels(ticks, fontsize=8)
    ax.set_ylabel("travel time (s)" if kind == "route" else "delay (s)")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def sensitivity_lines(result: "SensitivityResult", out_path: Path,
                      kind: str = "route") -> Path:
    """Mean value vs demand factor, one line per (controller, name)."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    controllers = sorted({label for _, label in result.tables})
    names: list[str] = []
    for table in result.tables.values():
        for name in table.names(kind):
            if name not in names:
                names.append(name)
    styles = ["-", "--", ":", "-."]
    for ci, controller in enumerate(controllers):
        for ni, name in enumerate(names):
            ys = []
            for factor in result.factors:
                table = result.tables.get((factor, controller))
                ys.append(table.mean(kind, name) if table is not None else np.nan)
            ax.plot(result.factors, ys, marker="o",
                    linestyle=styles[ci % len(styles)],
                    color=plt.cm.tab10.colors[ni % 10],
                    label=f"{controller}: {name}")
    ax.set_xlabel("demand scale factor")
    ax.set_ylabel("mean travel time (s)" if kind == "route" else "mean value")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path
