"""Multi-seed experiments over the representation grid, with file products.

An experiment fixes one (state, action) representation pair and trains
``n_seeds`` independent runs with run seed = base_seed + run index. Every
run writes a metrics CSV and a policy checkpoint; the experiment writes a
key=value summary with per-seed and aggregate results. The grid runner
sweeps all 36 pairs and collects one row per pair into ``grid_summary.csv``.

Runs are deterministic given their seed, so CSVs from repeated experiments
are identical except for the two wall-clock columns. Seeds can run in
parallel worker processes; set ROTBENCH_WORKERS to the process count
(default 1).
"""

from __future__ import annotations

import csv
import json
import os
import time
import zipfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from rotbench.agent import (
    Hyperparams,
    MetricsRow,
    TrainConfig,
    TrainedPolicy,
    TrainingDiverged,
    build_networks,
    ddpg_update,
    evaluate,
    train,
)
from rotbench.codec import ActionSpec, action_dim, decode_action, obs_dim
from rotbench.env import EnvConfig
from rotbench.nets import load_checkpoint, save_checkpoint
from rotbench.rotations import ReprTag

METRICS_HEADER = ("env_step", "eval_success_rate", "eval_avg_reward_per_step", "train_s", "rollout_s")
TIMING_HEADER = ("state_rep", "action_rep", "decode_us", "update_us", "per_step_us")
GRID_HEADER = (
    "state_rep",
    "action_rep",
    "final_success_mean",
    "final_success_stderr",
    "avg_train_success_mean",
    "avg_train_success_stderr",
    "degenerate_decodes_total",
)

# evaluation of the finished policy draws from one more derived stream,
# alongside the six used inside train()
FINAL_EVAL_STREAM = 6


def worker_count() -> int:
    raw = os.environ.get("ROTBENCH_WORKERS", "").strip()
    if not raw:
        return 1
    n = int(raw)
    if n < 1:
        raise ValueError("ROTBENCH_WORKERS must be a positive integer")
    return n


def all_pairs() -> list[tuple[ReprTag, ReprTag]]:
    """The full 36-cell grid in a fixed order (state-major)."""
    return [(s, a) for s in ReprTag for a in ReprTag]


@dataclass(frozen=True)
class ExperimentConfig:
    state_rep: ReprTag
    action_rep: ReprTag
    base_seed: int = 0
    n_seeds: int = 5
    final_rollouts: int = 160
    env: EnvConfig = field(default_factory=EnvConfig)
    hp: Hyperparams = field(default_factory=Hyperparams)
    # explicit run seeds; when set they win over base_seed / n_seeds
    seeds: Optional[tuple] = None

    def __post_init__(self):
        if self.n_seeds < 1 or self.final_rollouts < 1:
            raise ValueError("n_seeds and final_rollouts must be positive")
        if self.seeds is not None:
            if len(self.seeds) < 1:
                raise ValueError("seeds must name at least one run")
            if len(set(self.seeds)) != len(self.seeds):
                raise ValueError("seeds must be distinct")

    def run_seeds(self) -> list[int]:
        if self.seeds is not None:
            return [int(s) for s in self.seeds]
        return [self.base_seed + i for i in range(self.n_seeds)]


@dataclass
class RunRecord:
    seed: int
    metrics: list
    final_success: float
    final_avg_reward: float
    avg_train_success: float
    degenerate_decodes: int
    train_s: float
    rollout_s: float
    wall_s: float
    metrics_csv: str
    checkpoint: str


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list
    final_success_mean: float
    final_success_stderr: float
    avg_train_success_mean: float
    avg_train_success_stderr: float
    summary_path: str


# ---------- file formats


def write_metrics_csv(path, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow(
                [r.env_step, repr(r.eval_success_rate), repr(r.eval_avg_reward_per_step), repr(r.train_s), repr(r.rollout_s)]
            )


def read_metrics_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header {header}")
        return [
            MetricsRow(
                env_step=int(row[0]),
                eval_success_rate=float(row[1]),
                eval_avg_reward_per_step=float(row[2]),
                train_s=float(row[3]),
                rollout_s=float(row[4]),
            )
            for row in reader
        ]


def write_summary(path, entries: dict) -> None:
    """Flat key=value record, one pair per line, insertion-ordered."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")


def read_summary(path) -> dict:
    entries = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            entries[key] = value
    return entries


def save_policy(path, policy: TrainedPolicy, extra_meta: Optional[dict] = None) -> None:
    meta = {
        "kind": "policy",
        "state_rep": policy.state_rep.value,
        "action_rep": policy.action_rep.value,
        "max_angle": policy.max_angle,
    }
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, {"actor": policy.actor}, meta)


def load_policy(path) -> TrainedPolicy:
    nets, meta = load_checkpoint(path)
    if meta.get("kind") != "policy" or "actor" not in nets:
        raise ValueError(f"{path} is not a policy checkpoint")
    return TrainedPolicy(
        actor=nets["actor"],
        state_rep=ReprTag.parse(meta["state_rep"]),
        action_rep=ReprTag.parse(meta["action_rep"]),
        max_angle=float(meta["max_angle"]),
    )


def _pair_slug(state_rep: ReprTag, action_rep: ReprTag) -> str:
    return f"{state_rep.value}_{action_rep.value}"


# ---------- single runs and experiments


def _mean_stderr(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if len(arr) < 2:
        return mean, 0.0
    return mean, float(arr.std(ddof=1) / np.sqrt(len(arr)))


def _write_crash_report(out_dir, config, seed, exc) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"crash_{_pair_slug(config.state_rep, config.action_rep)}_seed{seed}.json"
    payload = {
        "state_rep": config.state_rep.value,
        "action_rep": config.action_rep.value,
        "seed": seed,
        "error": str(exc),
        "diagnostics": getattr(exc, "diagnostics", {}),
        "total_steps": config.hp.total_steps,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path


def run_one(config: ExperimentConfig, seed: int, out_dir) -> RunRecord:
    """Train a single seed, evaluate it, and write its CSV and checkpoint."""
    out_dir = Path(out_dir)
    slug = _pair_slug(config.state_rep, config.action_rep)
    try:
        result = train(
            TrainConfig(
                state_rep=config.state_rep,
                action_rep=config.action_rep,
                seed=seed,
                env=config.env,
                hp=config.hp,
            )
        )
    except TrainingDiverged as exc:
        crash = _write_crash_report(out_dir, config, seed, exc)
        raise TrainingDiverged(f"run seed {seed} diverged; report at {crash}", exc.diagnostics) from exc
    final = evaluate(
        result.policy,
        config.env,
        config.final_rollouts,
        seed=seed * 1_000_003 + FINAL_EVAL_STREAM,
    )
    metrics_csv = out_dir / f"metrics_{slug}_seed{seed}.csv"
    write_metrics_csv(metrics_csv, result.metrics)
    checkpoint = out_dir / f"policy_{slug}_seed{seed}.npz"
    save_policy(
        checkpoint,
        result.policy,
        extra_meta={
            "seed": seed,
            "total_steps": config.hp.total_steps,
            "degenerate_decodes": result.stats.degenerate_decodes,
            "train_s": result.stats.train_s,
            "rollout_s": result.stats.rollout_s,
            "wall_s": result.stats.wall_s,
        },
    )
    train_success = [row.eval_success_rate for row in result.metrics]
    return RunRecord(
        seed=seed,
        metrics=result.metrics,
        final_success=final.success_rate,
        final_avg_reward=final.avg_reward_per_step,
        avg_train_success=float(np.mean(train_success)) if train_success else 0.0,
        degenerate_decodes=result.stats.degenerate_decodes,
        train_s=result.stats.train_s,
        rollout_s=result.stats.rollout_s,
        wall_s=result.stats.wall_s,
        metrics_csv=str(metrics_csv),
        checkpoint=str(checkpoint),
    )


def load_run(config: ExperimentConfig, seed: int, out_dir) -> Optional[RunRecord]:
    """Rebuild a finished seed's RunRecord from its on-disk artifacts.

    Training is fully deterministic given the seed scheme, so a seed whose
    metrics CSV and checkpoint both exist is equivalent to retraining it.
    The final evaluation is recomputed from the checkpoint rather than
    stored; it is cheap and keeps the artifact set minimal. Returns None
    when either artifact is missing or the checkpoint belongs to a
    different configuration.
    """
    out_dir = Path(out_dir)
    slug = _pair_slug(config.state_rep, config.action_rep)
    metrics_csv = out_dir / f"metrics_{slug}_seed{seed}.csv"
    checkpoint = out_dir / f"policy_{slug}_seed{seed}.npz"
    if not (metrics_csv.exists() and checkpoint.exists()):
        return None
    try:
        policy = load_policy(checkpoint)
        _, meta = load_checkpoint(checkpoint)
        metrics = read_metrics_csv(metrics_csv)
    except (ValueError, OSError, KeyError, IndexError, zipfile.BadZipFile):
        # an interrupted writer can leave truncated files; retrain the seed
        return None
    if (
        meta.get("seed") != seed
        or meta.get("total_steps") != config.hp.total_steps
        or policy.state_rep is not config.state_rep
        or policy.action_rep is not config.action_rep
    ):
        return None
    final = evaluate(
        policy,
        config.env,
        config.final_rollouts,
        seed=seed * 1_000_003 + FINAL_EVAL_STREAM,
    )
    train_success = [row.eval_success_rate for row in metrics]
    return RunRecord(
        seed=seed,
        metrics=metrics,
        final_success=final.success_rate,
        final_avg_reward=final.avg_reward_per_step,
        avg_train_success=float(np.mean(train_success)) if train_success else 0.0,
        degenerate_decodes=int(meta.get("degenerate_decodes", 0)),
        train_s=float(meta.get("train_s", 0.0)),
        rollout_s=float(meta.get("rollout_s", 0.0)),
        wall_s=float(meta.get("wall_s", 0.0)),
        metrics_csv=str(metrics_csv),
        checkpoint=str(checkpoint),
    )


def _run_one_payload(payload):
    config, seed, out_dir = payload
    return run_one(config, seed, out_dir)


def run_experiment(
    config: ExperimentConfig,
    out_dir,
    workers: Optional[int] = None,
    resume: bool = False,
) -> ExperimentResult:
    """All seeds of one representation pair, plus the summary file.

    With resume=True, seeds whose artifacts are already present in out_dir
    are loaded back instead of retrained, so an interrupted experiment picks
    up where it stopped. The summary is rewritten either way.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = worker_count() if workers is None else workers
    seeds = config.run_seeds()
    loaded = {}
    if resume:
        for seed in seeds:
            record = load_run(config, seed, out_dir)
            if record is not None:
                loaded[seed] = record
    pending = [seed for seed in seeds if seed not in loaded]
    payloads = [(config, seed, out_dir) for seed in pending]
    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(pending))) as pool:
            fresh = list(pool.map(_run_one_payload, payloads))
    else:
        fresh = [run_one(*p) for p in payloads]
    by_seed = dict(loaded)
    by_seed.update({r.seed: r for r in fresh})
    runs = [by_seed[seed] for seed in seeds]

    final_mean, final_stderr = _mean_stderr([r.final_success for r in runs])
    avg_mean, avg_stderr = _mean_stderr([r.avg_train_success for r in runs])
    slug = _pair_slug(config.state_rep, config.action_rep)
    summary_path = out_dir / f"summary_{slug}.txt"
    write_summary(
        summary_path,
        {
            "state_rep": config.state_rep.value,
            "action_rep": config.action_rep.value,
            "base_seed": config.base_seed,
            "n_seeds": len(seeds),
            "run_seeds": ",".join(str(s) for s in seeds),
            "total_steps": config.hp.total_steps,
            "episode_len": config.env.episode_len,
            "final_rollouts": config.final_rollouts,
            "final_success_mean": repr(final_mean),
            "final_success_stderr": repr(final_stderr),
            "avg_train_success_mean": repr(avg_mean),
            "avg_train_success_stderr": repr(avg_stderr),
            "final_success_per_seed": ",".join(repr(r.final_success) for r in runs),
            "avg_train_success_per_seed": ",".join(repr(r.avg_train_success) for r in runs),
            "degenerate_decodes_total": sum(r.degenerate_decodes for r in runs),
            "train_s_total": round(sum(r.train_s for r in runs), 3),
            "rollout_s_total": round(sum(r.rollout_s for r in runs), 3),
        },
    )
    return ExperimentResult(
        config=config,
        runs=runs,
        final_success_mean=final_mean,
        final_success_stderr=final_stderr,
        avg_train_success_mean=avg_mean,
        avg_train_success_stderr=avg_stderr,
        summary_path=str(summary_path),
    )


def run_grid(
    base_config: ExperimentConfig,
    out_dir,
    pairs: Optional[list] = None,
    workers: Optional[int] = None,
    resume: bool = False,
) -> list[ExperimentResult]:
    """run_experiment for every requested pair; collects grid_summary.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = all_pairs() if pairs is None else pairs
    results = []
    for state_rep, action_rep in pairs:
        config = replace(base_config, state_rep=state_rep, action_rep=action_rep)
        results.append(run_experiment(config, out_dir, workers=workers, resume=resume))
    with open(out_dir / "grid_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GRID_HEADER)
        for res in results:
            w.writerow(
                [
                    res.config.state_rep.value,
                    res.config.action_rep.value,
                    repr(res.final_success_mean),
                    repr(res.final_success_stderr),
                    repr(res.avg_train_success_mean),
                    repr(res.avg_train_success_stderr),
                    sum(r.degenerate_decodes for r in res.runs),
                ]
            )
    return results


def read_grid_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames) != GRID_HEADER:
            raise ValueError(f"unexpected grid header {reader.fieldnames}")
        return list(reader)


# ---------- timing benchmark


@dataclass(frozen=True)
class TimingRecord:
    state_rep: str
    action_rep: str
    decode_us: float
    update_us: float
    per_step_us: float


def bench_timing(
    pairs: Optional[list] = None,
    decode_calls: int = 200,
    update_calls: int = 20,
    rounds: int = 5,
    seed: int = 0,
    env: EnvConfig = EnvConfig(),
    hp: Hyperparams = Hyperparams(),
) -> list[TimingRecord]:
    """Per-pair cost of the two representation-dependent hot paths.

    Environment stepping is representation-independent (the state is a
    quaternion internally), so the honest cost comparison is decode cost per
    env step plus update cost weighted by updates per env step. Update cost
    depends only on the layer shapes, so pairs sharing an (observation,
    action) width are timed once and share the number; timing identical
    shapes separately would only feed scheduler noise into their ranking.
    Rounds are interleaved and reduced by the median, which keeps slow drift
    of the machine from biasing late pairs.
    """
    pairs = all_pairs() if pairs is None else pairs
    rng = np.random.default_rng(seed)
    setups = []
    update_setups = {}
    for state_rep, action_rep in pairs:
        obs_d = 2 * obs_dim(state_rep)
        act_d = action_dim(action_rep)
        shape_key = (obs_d, act_d)
        if shape_key not in update_setups:
            nets = build_networks(state_rep, action_rep, hp, rng)
            batch = (
                rng.normal(size=(hp.batch_size, obs_d)),
                rng.uniform(-1.0, 1.0, size=(hp.batch_size, act_d)),
                -np.ones(hp.batch_size),
                rng.normal(size=(hp.batch_size, obs_d)),
            )
            update_setups[shape_key] = (nets, batch)
        raws = rng.uniform(-1.0, 1.0, size=(decode_calls, act_d))
        spec = ActionSpec(action_rep, env.max_angle)
        setups.append((state_rep, action_rep, raws, spec, shape_key))

    decode_times = [[] for _ in setups]
    update_times = {key: [] for key in update_setups}
    for _ in range(rounds):
        for i, (_, _, raws, spec, _) in enumerate(setups):
            t0 = time.perf_counter()
            for raw in raws:
                decode_action(raw, spec)
            decode_times[i].append((time.perf_counter() - t0) / decode_calls)
        for key, (nets, batch) in update_setups.items():
            t0 = time.perf_counter()
            for _ in range(update_calls):
                ddpg_update(nets, batch, hp)
            update_times[key].append((time.perf_counter() - t0) / update_calls)

    updates_per_env_step = hp.updates_per_episode / env.episode_len
    records = []
    for i, (state_rep, action_rep, _, _, shape_key) in enumerate(setups):
        decode_us = float(np.median(decode_times[i]) * 1e6)
        update_us = float(np.median(update_times[shape_key]) * 1e6)
        records.append(
            TimingRecord(
                state_rep=state_rep.value,
                action_rep=action_rep.value,
                decode_us=decode_us,
                update_us=update_us,
                per_step_us=decode_us + updates_per_env_step * update_us,
            )
        )
    return records


def write_timing_csv(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TIMING_HEADER)
        for r in records:
            w.writerow([r.state_rep, r.action_rep, f"{r.decode_us:.3f}", f"{r.update_us:.3f}", f"{r.per_step_us:.3f}"])


def read_timing_csv(path) -> list[TimingRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames) != TIMING_HEADER:
            raise ValueError(f"unexpected timing header {reader.fieldnames}")
        return [
            TimingRecord(
                state_rep=row["state_rep"],
                action_rep=row["action_rep"],
                decode_us=float(row["decode_us"]),
                update_us=float(row["update_us"]),
                per_step_us=float(row["per_step_us"]),
            )
            for row in reader
        ]
