"""Experiment orchestration: file formats, determinism, aggregation, timing."""

from pathlib import Path

import numpy as np
import pytest

from rotbench.agent import Hyperparams, MetricsRow, TrainingDiverged
from rotbench.env import EnvConfig
from rotbench.experiment import (
    ExperimentConfig,
    all_pairs,
    bench_timing,
    load_policy,
    load_run,
    read_grid_csv,
    read_metrics_csv,
    read_summary,
    read_timing_csv,
    run_experiment,
    run_grid,
    run_one,
    save_policy,
    worker_count,
    write_metrics_csv,
    write_summary,
    write_timing_csv,
)
from rotbench.nets import DenseNet, save_checkpoint
from rotbench.rotations import ReprTag
from rotbench.agent import TrainedPolicy


def tiny_experiment(n_seeds=1, **hp_kw):
    kw = dict(
        total_steps=200,
        eval_every=100,
        eval_episodes=2,
        her_k=1,
        updates_per_episode=2,
        batch_size=32,
        hidden_sizes=(8,),
        buffer_episodes=20,
    )
    kw.update(hp_kw)
    return ExperimentConfig(
        state_rep=ReprTag.LIE_ALGEBRA,
        action_rep=ReprTag.LIE_ALGEBRA,
        n_seeds=n_seeds,
        final_rollouts=4,
        env=EnvConfig(episode_len=50),
        hp=Hyperparams(**kw),
    )


def fake_rows(n=4):
    rng = np.random.default_rng(0)
    return [
        MetricsRow(
            env_step=(i + 1) * 100,
            eval_success_rate=float(rng.random()),
            eval_avg_reward_per_step=float(-rng.random()),
            train_s=float(i * 0.5),
            rollout_s=float(i * 0.25),
        )
        for i in range(n)
    ]


# ---------- file formats


def test_metrics_csv_roundtrips_exactly(tmp_path):
    rows = fake_rows()
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, rows)
    header = path.read_text().splitlines()[0]
    assert header == "env_step,eval_success_rate,eval_avg_reward_per_step,train_s,rollout_s"
    assert read_metrics_csv(path) == rows


def test_metrics_csv_rejects_unknown_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("step,success\n1,0.5\n")
    with pytest.raises(ValueError):
        read_metrics_csv(path)


def test_summary_roundtrip(tmp_path):
    path = tmp_path / "summary.txt"
    write_summary(path, {"alpha": 1, "final_success_mean": repr(0.925)})
    entries = read_summary(path)
    assert entries["alpha"] == "1"
    assert float(entries["final_success_mean"]) == 0.925


def test_policy_checkpoint_roundtrip(tmp_path):
    # sixd observations are 2 * 6 wide (state and goal)
    actor = DenseNet([12, 8, 3], head="tanh", rng=np.random.default_rng(0))
    policy = TrainedPolicy(
        actor=actor,
        state_rep=ReprTag.SIXD,
        action_rep=ReprTag.EULER,
        max_angle=0.1 * np.pi,
    )
    path = tmp_path / "policy.npz"
    save_policy(path, policy, extra_meta={"seed": 7})
    loaded = load_policy(path)
    assert loaded.state_rep is ReprTag.SIXD
    assert loaded.action_rep is ReprTag.EULER
    assert loaded.max_angle == policy.max_angle
    for a, b in zip(actor.params(), loaded.actor.params()):
        assert np.array_equal(a, b)
    obs = np.random.default_rng(1).normal(size=12)
    assert np.array_equal(policy.act_raw(obs), loaded.act_raw(obs))


def test_load_policy_rejects_non_policy_archives(tmp_path):
    net = DenseNet([2, 2], head="identity", rng=np.random.default_rng(0))
    path = tmp_path / "other.npz"
    save_checkpoint(path, {"critic": net}, {"kind": "other"})
    with pytest.raises(ValueError):
        load_policy(path)


# ---------- runs and experiments


def test_run_one_writes_products_and_aggregates(tmp_path):
    record = run_one(tiny_experiment(), seed=0, out_dir=tmp_path)
    assert (tmp_path / "metrics_lie-algebra_lie-algebra_seed0.csv").exists()
    assert (tmp_path / "policy_lie-algebra_lie-algebra_seed0.npz").exists()
    rows = read_metrics_csv(record.metrics_csv)
    assert [r.env_step for r in rows] == [100, 200]
    assert record.avg_train_success == pytest.approx(
        np.mean([r.eval_success_rate for r in rows])
    )
    assert 0.0 <= record.final_success <= 1.0
    policy = load_policy(record.checkpoint)
    assert policy.state_rep is ReprTag.LIE_ALGEBRA


def test_experiment_runs_are_deterministic_excluding_wall_time(tmp_path):
    res_a = run_experiment(tiny_experiment(), tmp_path / "a")
    res_b = run_experiment(tiny_experiment(), tmp_path / "b")
    rows_a = read_metrics_csv(res_a.runs[0].metrics_csv)
    rows_b = read_metrics_csv(res_b.runs[0].metrics_csv)
    for ra, rb in zip(rows_a, rows_b):
        assert ra.env_step == rb.env_step
        assert ra.eval_success_rate == rb.eval_success_rate
        assert ra.eval_avg_reward_per_step == rb.eval_avg_reward_per_step
    assert res_a.final_success_mean == res_b.final_success_mean
    assert res_a.avg_train_success_mean == res_b.avg_train_success_mean


def test_resume_reuses_finished_seeds(tmp_path):
    config = tiny_experiment(n_seeds=2)
    first = run_experiment(config, tmp_path)
    stamps = [Path(r.metrics_csv).stat().st_mtime_ns for r in first.runs]
    second = run_experiment(config, tmp_path, resume=True)
    # untouched artifact files prove nothing was retrained
    assert [Path(r.metrics_csv).stat().st_mtime_ns for r in second.runs] == stamps
    assert second.final_success_mean == first.final_success_mean
    assert second.avg_train_success_mean == first.avg_train_success_mean
    assert [r.degenerate_decodes for r in second.runs] == [
        r.degenerate_decodes for r in first.runs
    ]


def test_resume_trains_only_missing_seeds(tmp_path):
    config = tiny_experiment(n_seeds=2)
    full = run_experiment(config, tmp_path / "full")
    partial = tmp_path / "partial"
    run_one(config, seed=0, out_dir=partial)
    res = run_experiment(config, partial, resume=True)
    assert [r.seed for r in res.runs] == [0, 1]
    assert [r.final_success for r in res.runs] == [r.final_success for r in full.runs]
    assert [r.avg_train_success for r in res.runs] == [
        r.avg_train_success for r in full.runs
    ]


def test_load_run_rejects_missing_or_mismatched_artifacts(tmp_path):
    config = tiny_experiment()
    run_one(config, seed=0, out_dir=tmp_path)
    assert load_run(config, 0, tmp_path) is not None
    assert load_run(config, 1, tmp_path) is None
    other = tiny_experiment(total_steps=400)
    assert load_run(other, 0, tmp_path) is None


def test_load_run_treats_truncated_artifacts_as_missing(tmp_path):
    config = tiny_experiment()
    record = run_one(config, seed=0, out_dir=tmp_path)
    csv_text = Path(record.metrics_csv).read_text()
    Path(record.metrics_csv).write_text(csv_text[: len(csv_text) // 2])
    assert load_run(config, 0, tmp_path) is None
    Path(record.metrics_csv).write_text(csv_text)
    Path(record.checkpoint).write_bytes(b"PK\x03\x04 not a real archive")
    assert load_run(config, 0, tmp_path) is None


def test_experiment_aggregates_per_seed_results(tmp_path):
    res = run_experiment(tiny_experiment(n_seeds=2), tmp_path)
    assert [r.seed for r in res.runs] == [0, 1]
    finals = [r.final_success for r in res.runs]
    assert res.final_success_mean == pytest.approx(np.mean(finals))
    if len(set(finals)) > 1:
        assert res.final_success_stderr > 0.0
    entries = read_summary(res.summary_path)
    assert entries["n_seeds"] == "2"
    per_seed = [float(v) for v in entries["final_success_per_seed"].split(",")]
    assert per_seed == finals


def test_worker_pool_matches_sequential_results(tmp_path):
    seq = run_experiment(tiny_experiment(n_seeds=2), tmp_path / "seq", workers=1)
    par = run_experiment(tiny_experiment(n_seeds=2), tmp_path / "par", workers=2)
    assert [r.final_success for r in seq.runs] == [r.final_success for r in par.runs]
    assert [r.avg_train_success for r in seq.runs] == [
        r.avg_train_success for r in par.runs
    ]


def test_worker_count_reads_the_environment(monkeypatch):
    monkeypatch.delenv("ROTBENCH_WORKERS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("ROTBENCH_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("ROTBENCH_WORKERS", "0")
    with pytest.raises(ValueError):
        worker_count()


def test_run_seeds_are_base_plus_index():
    config = tiny_experiment(n_seeds=3)
    config = ExperimentConfig(
        state_rep=config.state_rep,
        action_rep=config.action_rep,
        base_seed=40,
        n_seeds=3,
        final_rollouts=4,
        env=config.env,
        hp=config.hp,
    )
    assert config.run_seeds() == [40, 41, 42]


def test_explicit_seed_tuple_wins_over_base_and_count():
    base = tiny_experiment()
    config = ExperimentConfig(
        state_rep=base.state_rep,
        action_rep=base.action_rep,
        base_seed=40,
        n_seeds=3,
        final_rollouts=4,
        env=base.env,
        hp=base.hp,
        seeds=(3, 5),
    )
    assert config.run_seeds() == [3, 5]
    for bad in ((), (1, 1)):
        with pytest.raises(ValueError):
            ExperimentConfig(
                state_rep=base.state_rep,
                action_rep=base.action_rep,
                env=base.env,
                hp=base.hp,
                seeds=bad,
            )


def test_divergence_writes_a_crash_report(tmp_path):
    # a step of ~1e200 overflows the critic's forward pass to inf
    config = tiny_experiment(critic_lr=1e200, total_steps=400)
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(TrainingDiverged):
        run_one(config, seed=0, out_dir=tmp_path)
    crash = tmp_path / "crash_lie-algebra_lie-algebra_seed0.json"
    assert crash.exists()
    text = crash.read_text()
    assert '"seed": 0' in text and "diagnostics" in text


def test_grid_collects_one_row_per_pair(tmp_path):
    pairs = [
        (ReprTag.LIE_ALGEBRA, ReprTag.LIE_ALGEBRA),
        (ReprTag.QUAT, ReprTag.EULER),
    ]
    results = run_grid(tiny_experiment(), tmp_path, pairs=pairs)
    assert len(results) == 2
    rows = read_grid_csv(tmp_path / "grid_summary.csv")
    assert [(r["state_rep"], r["action_rep"]) for r in rows] == [
        ("lie-algebra", "lie-algebra"),
        ("quaternion", "euler"),
    ]
    for pair in ("lie-algebra_lie-algebra", "quaternion_euler"):
        assert (tmp_path / f"summary_{pair}.txt").exists()


def test_all_pairs_covers_the_grid():
    pairs = all_pairs()
    assert len(pairs) == 36
    assert len(set(pairs)) == 36


# ---------- timing benchmark


def test_bench_timing_records_and_csv_roundtrip(tmp_path):
    pairs = [
        (ReprTag.LIE_ALGEBRA, ReprTag.LIE_ALGEBRA),
        (ReprTag.MATRIX, ReprTag.MATRIX),
    ]
    hp = Hyperparams(hidden_sizes=(8,), batch_size=16)
    records = bench_timing(pairs=pairs, decode_calls=20, update_calls=3, rounds=2, hp=hp)
    assert len(records) == 2
    weight = hp.updates_per_episode / EnvConfig().episode_len
    for r in records:
        assert r.decode_us > 0.0 and r.update_us > 0.0
        assert r.per_step_us == pytest.approx(r.decode_us + weight * r.update_us)
    path = tmp_path / "timing.csv"
    write_timing_csv(path, records)
    loaded = read_timing_csv(path)
    assert [(r.state_rep, r.action_rep) for r in loaded] == [
        ("lie-algebra", "lie-algebra"),
        ("so3-matrix", "so3-matrix"),
    ]
    for a, b in zip(records, loaded):
        assert b.per_step_us == pytest.approx(a.per_step_us, abs=1e-3)


def test_bench_timing_shares_update_cost_across_equal_shapes():
    # tangent and euler encodings are both 3-wide, so their nets match and
    # the update measurement is shared; decode is still timed per pair
    pairs = [
        (ReprTag.LIE_ALGEBRA, ReprTag.LIE_ALGEBRA),
        (ReprTag.EULER, ReprTag.EULER),
    ]
    hp = Hyperparams(hidden_sizes=(8,), batch_size=16)
    records = bench_timing(pairs=pairs, decode_calls=20, update_calls=3, rounds=2, hp=hp)
    assert records[0].update_us == records[1].update_us
    assert records[0].per_step_us != records[1].per_step_us
