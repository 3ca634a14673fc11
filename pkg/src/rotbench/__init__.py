"""Orientation-representation benchmark: SO(3) math, a goal-reaching
environment, a from-scratch DDPG+HER trainer, and the experiment CLI."""

from rotbench.agent import (
    GreedyPolicy,
    Hyperparams,
    RandomPolicy,
    TrainConfig,
    TrainedPolicy,
    evaluate,
    train,
)
from rotbench.codec import (
    ActionSpec,
    DegeneracyCounter,
    action_dim,
    decode_action,
    encode_observation,
    encode_observation_batch,
    obs_dim,
)
from rotbench.env import EnvConfig, OrientationEnv, StepResult, greedy_action
from rotbench.experiment import (
    ExperimentConfig,
    bench_timing,
    load_policy,
    load_run,
    run_experiment,
    run_grid,
    save_policy,
)
from rotbench.rotations import (
    ReprTag,
    Rotation,
    boxminus,
    boxplus,
    canonicalize,
    clamp_angle,
    compose,
    convert,
    exp,
    geodesic_distance,
    identity,
    inverse,
    log,
    project_to_so3,
    reconstruct_third_column,
    sample_uniform,
    sample_uniform_batch,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "ActionSpec",
    "DegeneracyCounter",
    "EnvConfig",
    "ExperimentConfig",
    "GreedyPolicy",
    "Hyperparams",
    "OrientationEnv",
    "RandomPolicy",
    "ReprTag",
    "Rotation",
    "StepResult",
    "TrainConfig",
    "TrainedPolicy",
    "action_dim",
    "bench_timing",
    "boxminus",
    "boxplus",
    "canonicalize",
    "clamp_angle",
    "compose",
    "convert",
    "decode_action",
    "encode_observation",
    "encode_observation_batch",
    "evaluate",
    "exp",
    "geodesic_distance",
    "greedy_action",
    "identity",
    "inverse",
    "load_policy",
    "load_run",
    "log",
    "obs_dim",
    "project_to_so3",
    "reconstruct_third_column",
    "run_experiment",
    "run_grid",
    "sample_uniform",
    "sample_uniform_batch",
    "save_policy",
    "train",
    "validate",
    "__version__",
]
