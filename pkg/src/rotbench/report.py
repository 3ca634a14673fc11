"""Figure rendering for experiment products.

Everything draws through the Agg backend and writes PNG files next to the
CSVs they come from, so reports work on headless machines. ``render_report``
scans a run directory for the known file names (per-pair summaries with
their metrics CSVs, ``grid_summary.csv``, ``timing.csv``) and emits every
figure it has data for.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from rotbench.experiment import (
    read_grid_csv,
    read_metrics_csv,
    read_summary,
    read_timing_csv,
)
from rotbench.rotations import ReprTag

_REP_ORDER = [tag.value for tag in ReprTag]

_GRID_TITLES = {
    "final_success_mean": "final success rate (mean over seeds)",
    "avg_train_success_mean": "average training success (mean over seeds)",
}


def plot_training_curves(metrics_by_seed: dict, title: str, out_path) -> Path:
    """Per-seed success curves, with the across-seed mean drawn on top."""
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    curves = []
    for seed in sorted(metrics_by_seed):
        rows = metrics_by_seed[seed]
        xs = [r.env_step for r in rows]
        ys = [r.eval_success_rate for r in rows]
        ax.plot(xs, ys, lw=1.0, alpha=0.4, label=f"seed {seed}")
        curves.append((xs, ys))
    if curves:
        n = min(len(ys) for _, ys in curves)
        if n and all(xs[:n] == curves[0][0][:n] for xs, _ in curves):
            mean = np.mean([ys[:n] for _, ys in curves], axis=0)
            ax.plot(curves[0][0][:n], mean, lw=2.2, color="black", label="mean")
    ax.set_xlabel("environment steps")
    ax.set_ylabel("evaluation success rate")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path


def plot_grid_heatmap(grid_rows: list, value_key: str, out_path) -> Path:
    """6x6 state-by-action heatmap of one aggregate column."""
    out_path = Path(out_path)
    values = np.full((len(_REP_ORDER), len(_REP_ORDER)), np.nan)
    for row in grid_rows:
        i = _REP_ORDER.index(row["state_rep"])
        j = _REP_ORDER.index(row["action_rep"])
        values[i, j] = float(row[value_key])
    fig, ax = plt.subplots(figsize=(7.4, 6.2))
    im = ax.imshow(values, vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xticks(range(len(_REP_ORDER)), _REP_ORDER, rotation=40, ha="right", fontsize=8)
    ax.set_yticks(range(len(_REP_ORDER)), _REP_ORDER, fontsize=8)
    ax.set_xlabel("action representation")
    ax.set_ylabel("state representation")
    ax.set_title(_GRID_TITLES.get(value_key, value_key))
    for i in range(len(_REP_ORDER)):
        for j in range(len(_REP_ORDER)):
            if np.isfinite(values[i, j]):
                bright = values[i, j] > 0.55
                ax.text(
                    j,
                    i,
                    f"{values[i, j]:.2f}",
                    ha="center",
                    va="center",
                    fontsize=8,
                    color="black" if bright else "white",
                )
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path


def plot_timing_bars(records: list, out_path) -> Path:
    """Per-pair representation-dependent cost, cheapest at the top."""
    out_path = Path(out_path)
    records = sorted(records, key=lambda r: r.per_step_us)
    labels = [f"{r.state_rep} / {r.action_rep}" for r in records]
    decode = np.array([r.decode_us for r in records])
    weighted_update = np.array([r.per_step_us - r.decode_us for r in records])
    pos = np.arange(len(records))
    fig, ax = plt.subplots(figsize=(8.0, max(3.0, 0.28 * len(records) + 1.5)))
    ax.barh(pos, decode, label="decode per env step")
    ax.barh(pos, weighted_update, left=decode, label="updates per env step")
    ax.set_yticks(pos, labels, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("microseconds per environment step")
    ax.set_title("representation-dependent cost (decode + weighted update)")
    ax.grid(axis="x", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path


def render_report(run_dir) -> list[Path]:
    """Render every figure the directory has source data for."""
    run_dir = Path(run_dir)
    written = []
    for summary in sorted(run_dir.glob("summary_*.txt")):
        slug = summary.stem[len("summary_") :]
        metrics = {}
        for csv_path in sorted(run_dir.glob(f"metrics_{slug}_seed*.csv")):
            seed = int(csv_path.stem.rsplit("seed", 1)[1])
            metrics[seed] = read_metrics_csv(csv_path)
        if not metrics:
            continue
        entries = read_summary(summary)
        title = f"{entries['state_rep']} state / {entries['action_rep']} actions"
        written.append(plot_training_curves(metrics, title, run_dir / f"curves_{slug}.png"))
    grid_csv = run_dir / "grid_summary.csv"
    if grid_csv.exists():
        rows = read_grid_csv(grid_csv)
        for key in ("final_success_mean", "avg_train_success_mean"):
            written.append(plot_grid_heatmap(rows, key, run_dir / f"grid_{key}.png"))
    timing_csv = run_dir / "timing.csv"
    if timing_csv.exists():
        written.append(plot_timing_bars(read_timing_csv(timing_csv), run_dir / "timing.png"))
    return written
