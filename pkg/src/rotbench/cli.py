"""Command-line front end.

Subcommands:

* ``train``: one training run (one seed) of one representation pair
* ``grid``: multi-seed experiments over one pair or the full 6x6 grid
* ``eval``: roll out a saved policy checkpoint and report success
* ``bench-timing``: microbenchmark of representation-dependent costs
* ``report``: render PNG figures for everything found in a run directory

Options may come from a flat key=value config file (``--config``); keys use
the long flag names with either dashes or underscores, ``#`` starts a
comment, and explicit command-line flags override file values. Exit codes:
0 success, 1 usage or I/O errors, 3 training divergence (a crash report is
written next to the other outputs).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from rotbench.agent import Hyperparams, TrainingDiverged, evaluate
from rotbench.env import EnvConfig
from rotbench.experiment import (
    ExperimentConfig,
    all_pairs,
    bench_timing,
    load_policy,
    read_summary,
    run_experiment,
    run_grid,
    write_timing_csv,
)
from rotbench.report import render_report
from rotbench.rotations import ReprTag


def _parse_hidden(text: str) -> tuple:
    try:
        sizes = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad hidden sizes {text!r}") from exc
    if not sizes or any(s < 1 for s in sizes):
        raise argparse.ArgumentTypeError(f"bad hidden sizes {text!r}")
    return sizes


def _parse_seeds(text: str):
    """One integer is a seed count; a comma list names the run seeds."""
    try:
        values = [int(part) for part in str(text).split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seeds {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError(f"bad seeds {text!r}")
    if len(values) == 1:
        return values[0]
    return tuple(values)


_CONVERTERS = {
    "state_rep": str,
    "action_rep": str,
    "seed": int,
    "base_seed": int,
    "seeds": _parse_seeds,
    "final_rollouts": int,
    "out": str,
    "steps": int,
    "episode_len": int,
    "max_angle": float,
    "eps_orient": float,
    "gamma": float,
    "soft_update_rate": float,
    "batch": int,
    "buffer_episodes": int,
    "noise_sigma": float,
    "random_action_prob": float,
    "her_k": int,
    "updates_per_episode": int,
    "hidden": _parse_hidden,
    "actor_lr": float,
    "critic_lr": float,
    "eval_every": int,
    "eval_episodes": int,
}

_HP_FIELDS = {
    "steps": "total_steps",
    "gamma": "gamma",
    "soft_update_rate": "soft_update_rate",
    "batch": "batch_size",
    "buffer_episodes": "buffer_episodes",
    "noise_sigma": "noise_sigma",
    "random_action_prob": "random_action_prob",
    "her_k": "her_k",
    "updates_per_episode": "updates_per_episode",
    "hidden": "hidden_sizes",
    "actor_lr": "actor_lr",
    "critic_lr": "critic_lr",
    "eval_every": "eval_every",
    "eval_episodes": "eval_episodes",
}

_ENV_FIELDS = {
    "episode_len": "episode_len",
    "max_angle": "max_angle",
    "eps_orient": "eps_orient",
}


def load_config_file(path) -> dict:
    """Flat key=value options; '#' starts a comment, blank lines are skipped."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        if key not in _CONVERTERS:
            raise ValueError(f"{path}:{lineno}: unknown option {key!r}")
        values[key] = _CONVERTERS[key](value.strip())
    return values


def merged_options(args: argparse.Namespace) -> dict:
    """Config-file values with explicitly passed flags layered on top."""
    opts = {}
    if getattr(args, "config", None):
        opts.update(load_config_file(args.config))
    for key in _CONVERTERS:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    return opts


def _build_hp(opts: dict) -> Hyperparams:
    return Hyperparams(**{field: opts[k] for k, field in _HP_FIELDS.items() if k in opts})


def _build_env(opts: dict) -> EnvConfig:
    return EnvConfig(**{field: opts[k] for k, field in _ENV_FIELDS.items() if k in opts})


def _require(opts: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in opts]
    if missing:
        raise ValueError(f"missing required option(s): {', '.join(missing)}")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value options file; flags override it")
    parser.add_argument("--steps", type=int, help="total environment steps per run")
    parser.add_argument("--episode-len", type=int, dest="episode_len")
    parser.add_argument("--max-angle", type=float, dest="max_angle")
    parser.add_argument("--eps-orient", type=float, dest="eps_orient")
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--soft-update-rate", type=float, dest="soft_update_rate")
    parser.add_argument("--batch", type=int)
    parser.add_argument("--buffer-episodes", type=int, dest="buffer_episodes")
    parser.add_argument("--noise-sigma", type=float, dest="noise_sigma")
    parser.add_argument("--random-action-prob", type=float, dest="random_action_prob")
    parser.add_argument("--her-k", type=int, dest="her_k")
    parser.add_argument("--updates-per-episode", type=int, dest="updates_per_episode")
    parser.add_argument("--hidden", type=_parse_hidden, help="comma-separated layer sizes")
    parser.add_argument("--actor-lr", type=float, dest="actor_lr")
    parser.add_argument("--critic-lr", type=float, dest="critic_lr")
    parser.add_argument("--eval-every", type=int, dest="eval_every")
    parser.add_argument("--eval-episodes", type=int, dest="eval_episodes")


def _print_summary(path) -> None:
    for key, value in read_summary(path).items():
        print(f"{key}={value}")


def _seed_fields(opts: dict, base_key: str, default_count: int) -> dict:
    """--seeds as either a count or an explicit tuple of run seeds."""
    seeds = opts.get("seeds", default_count)
    if isinstance(seeds, tuple):
        return {"seeds": seeds}
    return {"base_seed": opts.get(base_key, 0), "n_seeds": seeds}


def cmd_train(args) -> int:
    opts = merged_options(args)
    _require(opts, "state_rep", "action_rep", "out")
    config = ExperimentConfig(
        state_rep=ReprTag.parse(opts["state_rep"]),
        action_rep=ReprTag.parse(opts["action_rep"]),
        final_rollouts=opts.get("final_rollouts", 160),
        env=_build_env(opts),
        hp=_build_hp(opts),
        **_seed_fields(opts, "seed", 1),
    )
    result = run_experiment(config, opts["out"], resume=args.resume)
    _print_summary(result.summary_path)
    return 0


def cmd_grid(args) -> int:
    opts = merged_options(args)
    _require(opts, "out")
    if args.all:
        pairs = None
    else:
        _require(opts, "state_rep", "action_rep")
        pairs = [(ReprTag.parse(opts["state_rep"]), ReprTag.parse(opts["action_rep"]))]
    base = ExperimentConfig(
        state_rep=ReprTag.LIE_ALGEBRA,
        action_rep=ReprTag.LIE_ALGEBRA,
        final_rollouts=opts.get("final_rollouts", 160),
        env=_build_env(opts),
        hp=_build_hp(opts),
        **_seed_fields(opts, "base_seed", 5),
    )
    results = run_grid(base, opts["out"], pairs=pairs, resume=args.resume)
    for res in results:
        print(
            f"{res.config.state_rep.value} / {res.config.action_rep.value}: "
            f"final={res.final_success_mean:.3f}+-{res.final_success_stderr:.3f} "
            f"avg_train={res.avg_train_success_mean:.3f}+-{res.avg_train_success_stderr:.3f}"
        )
    return 0


def cmd_eval(args) -> int:
    opts = merged_options(args)
    policy = load_policy(args.checkpoint)
    result = evaluate(policy, _build_env(opts), args.rollouts, seed=opts.get("seed", 0))
    print(f"checkpoint={args.checkpoint}")
    print(f"state_rep={policy.state_rep.value}")
    print(f"action_rep={policy.action_rep.value}")
    print(f"episodes={result.episodes}")
    print(f"success_rate={result.success_rate!r}")
    print(f"avg_reward_per_step={result.avg_reward_per_step!r}")
    print(f"degenerate_decodes={result.degenerate_decodes}")
    return 0


def _parse_pairs(text: str):
    if text == "all":
        return None
    pairs = []
    for chunk in text.split(","):
        state, sep, action = chunk.strip().partition(":")
        if not sep:
            raise ValueError(f"bad pair {chunk!r}, expected state:action")
        pairs.append((ReprTag.parse(state), ReprTag.parse(action)))
    return pairs


def cmd_bench_timing(args) -> int:
    opts = merged_options(args)
    _require(opts, "out")
    records = bench_timing(
        pairs=_parse_pairs(args.pairs),
        decode_calls=args.decode_calls,
        update_calls=args.update_calls,
        rounds=args.rounds,
        seed=opts.get("seed", 0),
        env=_build_env(opts),
        hp=_build_hp(opts),
    )
    out_dir = Path(opts["out"])
    write_timing_csv(out_dir / "timing.csv", records)
    for r in records:
        print(
            f"{r.state_rep} / {r.action_rep}: decode={r.decode_us:.1f}us "
            f"update={r.update_us:.1f}us per_step={r.per_step_us:.1f}us"
        )
    cheapest = min(records, key=lambda r: r.per_step_us)
    print(f"cheapest={cheapest.state_rep}/{cheapest.action_rep}")
    print(f"wrote {out_dir / 'timing.csv'}")
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.dir)
    if not run_dir.is_dir():
        raise ValueError(f"{run_dir} is not a directory")
    written = render_report(run_dir)
    if not written:
        print(f"no renderable products found in {run_dir}", file=sys.stderr)
        return 1
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rotbench",
        description="train and compare orientation representations for goal reaching",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="training runs for one representation pair")
    p.add_argument("--state-rep", "--state", dest="state_rep", help="state representation name")
    p.add_argument("--action-rep", "--action", dest="action_rep", help="action representation name")
    p.add_argument("--seed", type=int, help="base seed (default 0)")
    p.add_argument("--seeds", type=_parse_seeds, help="seed count or comma-separated run seeds (default 1)")
    p.add_argument("--final-rollouts", type=int, dest="final_rollouts")
    p.add_argument("--out", help="output directory")
    p.add_argument("--resume", action="store_true", help="skip seeds with finished artifacts")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="multi-seed experiments over representation pairs")
    p.add_argument("--all", action="store_true", help="run the full 6x6 grid")
    p.add_argument("--state-rep", "--state", dest="state_rep")
    p.add_argument("--action-rep", "--action", dest="action_rep")
    p.add_argument("--base-seed", type=int, dest="base_seed")
    p.add_argument("--seeds", type=_parse_seeds, help="seed count or comma-separated run seeds (default 5)")
    p.add_argument("--final-rollouts", type=int, dest="final_rollouts")
    p.add_argument("--out")
    p.add_argument("--resume", action="store_true", help="skip seeds with finished artifacts")
    _add_common(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("eval", help="evaluate a saved policy checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rollouts", type=int, default=160)
    p.add_argument("--seed", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench-timing", help="microbenchmark representation costs")
    p.add_argument("--pairs", default="all", help="'all' or comma-separated state:action")
    p.add_argument("--decode-calls", type=int, default=200, dest="decode_calls")
    p.add_argument("--update-calls", type=int, default=20, dest="update_calls")
    p.add_argument("--rounds", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_bench_timing)

    p = sub.add_parser("report", help="render figures for a run directory")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
