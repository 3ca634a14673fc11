"""Figure rendering writes real PNG files from the product formats."""

import numpy as np

from rotbench.agent import MetricsRow
from rotbench.experiment import TimingRecord, all_pairs
from rotbench.report import (
    plot_grid_heatmap,
    plot_timing_bars,
    plot_training_curves,
    render_report,
)

PNG_MAGIC = b"\x89PNG"


def rows_for(seed, n=5):
    rng = np.random.default_rng(seed)
    return [
        MetricsRow(
            env_step=(i + 1) * 100,
            eval_success_rate=float(rng.random()),
            eval_avg_reward_per_step=float(-rng.random()),
            train_s=i * 1.0,
            rollout_s=i * 0.5,
        )
        for i in range(n)
    ]


def test_training_curves_png(tmp_path):
    path = plot_training_curves(
        {0: rows_for(0), 1: rows_for(1)}, "demo", tmp_path / "curves.png"
    )
    data = path.read_bytes()
    assert data[:4] == PNG_MAGIC and len(data) > 1000


def test_grid_heatmap_png(tmp_path):
    rng = np.random.default_rng(2)
    rows = [
        {
            "state_rep": s.value,
            "action_rep": a.value,
            "final_success_mean": repr(float(rng.random())),
        }
        for s, a in all_pairs()
    ]
    path = plot_grid_heatmap(rows, "final_success_mean", tmp_path / "grid.png")
    assert path.read_bytes()[:4] == PNG_MAGIC


def test_timing_bars_png(tmp_path):
    records = [
        TimingRecord(s.value, a.value, 20.0 + i, 900.0 + 10 * i, 20.0 + i + 0.8 * (900.0 + 10 * i))
        for i, (s, a) in enumerate(all_pairs()[:8])
    ]
    path = plot_timing_bars(records, tmp_path / "timing.png")
    assert path.read_bytes()[:4] == PNG_MAGIC


def test_render_report_ignores_empty_directories(tmp_path):
    assert render_report(tmp_path) == []
