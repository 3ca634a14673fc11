"""Goal-conditioned orientation-reaching environment.

The agent directly controls the orientation of a free body: each step
composes a bounded rotation action onto the current orientation. Both the
start orientation and the goal are drawn uniformly (Haar) at reset, with
the goal resampled until it lies outside the success threshold. Reward is
sparse, ``0`` once the geodesic distance to the goal is within
``eps_orient`` and ``-1`` otherwise, and depends only on the current
distance (Markov). Episodes always run to ``episode_len``: ``done`` flags
success or time-out, but stepping remains legal until the step budget is
exhausted so replay sees full trajectories.

Internally the state is a unit quaternion regardless of what the policy
observes; observations are encoded through :mod:`rotbench.codec` in the
representation the environment was built with.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from rotbench.codec import encode_observation_batch
from rotbench.rotations import (
    ReprTag,
    Rotation,
    _quat_conj,
    _quat_log,
    _quat_mul,
    _quat_normalize,
    _to_quat,
    boxminus,
    clamp_angle,
    exp,
    sample_uniform_batch,
)


@dataclass(frozen=True)
class EnvConfig:
    episode_len: int = 50
    max_angle: float = 0.1 * np.pi
    eps_orient: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.episode_len < 1:
            raise ValueError("episode_len must be at least 1")
        if not 0.0 < self.eps_orient < np.pi:
            raise ValueError("eps_orient must lie in (0, pi)")
        if not 0.0 < self.max_angle <= np.pi:
            raise ValueError("max_angle must lie in (0, pi]")


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    reward: float
    success: bool
    done: bool
    achieved: Rotation


def _angle_between(qa: np.ndarray, qb: np.ndarray) -> float:
    return float(np.linalg.norm(_quat_log(_quat_mul(_quat_conj(qa), qb))))


def reward(state: Rotation, goal: Rotation, config: EnvConfig) -> float:
    """Sparse reward: 0 iff the geodesic distance is within eps_orient (closed)."""
    d = _angle_between(_to_quat(state), _to_quat(goal))
    return 0.0 if d <= config.eps_orient else -1.0


def greedy_action(current: Rotation, goal: Rotation, max_angle: float) -> Rotation:
    """Scripted shortest-path step: the clamped tangent toward the goal.

    Applying this every step shrinks the distance by exactly max_angle until
    the goal is hit, so any instance resolves in ceil(pi / max_angle) steps.
    """
    return exp(clamp_angle(boxminus(goal, current), max_angle))


class OrientationEnv:
    """See the module docstring for the task definition."""

    def __init__(
        self,
        config: EnvConfig = EnvConfig(),
        state_tag: ReprTag = ReprTag.LIE_ALGEBRA,
        rng: Optional[np.random.Generator] = None,
    ):
        self.config = config
        self.state_tag = state_tag
        self._rng = rng if rng is not None else np.random.default_rng(config.seed)
        self._current: Optional[np.ndarray] = None
        self._goal: Optional[np.ndarray] = None
        self._steps = 0

    # ---------- state access

    @property
    def current(self) -> Rotation:
        return Rotation(ReprTag.QUAT, self._current)

    @property
    def goal(self) -> Rotation:
        return Rotation(ReprTag.QUAT, self._goal)

    @property
    def steps(self) -> int:
        return self._steps

    def achieved_goal(self) -> Rotation:
        """The goal the agent has actually reached: its current orientation."""
        return self.current

    def distance_to_goal(self) -> float:
        return _angle_between(self._current, self._goal)

    def _observe(self) -> np.ndarray:
        return encode_observation_batch(
            self._current[None], self._goal[None], self.state_tag
        )[0]

    # ---------- gym-style surface

    def reset(self, seed: Optional[int] = None) -> StepResult:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._current = sample_uniform_batch(self._rng, 1)[0]
        self._goal = sample_uniform_batch(self._rng, 1)[0]
        # a goal inside the success set would make the episode trivial
        while _angle_between(self._current, self._goal) <= self.config.eps_orient:
            self._goal = sample_uniform_batch(self._rng, 1)[0]
        self._steps = 0
        return StepResult(
            observation=self._observe(),
            reward=-1.0,
            success=False,
            done=False,
            achieved=self.current,
        )

    def step(self, action: Rotation) -> StepResult:
        if self._current is None:
            raise RuntimeError("call reset() before step()")
        if self._steps >= self.config.episode_len:
            raise RuntimeError("episode is finished; call reset()")
        q_act = _to_quat(action)
        angle = float(np.linalg.norm(_quat_log(q_act)))
        if angle > self.config.max_angle + 1e-9:
            raise ValueError(
                f"action angle {angle:.6f} exceeds the limit {self.config.max_angle:.6f}"
            )
        # compose in the body frame and renormalize so drift cannot accumulate
        self._current = _quat_normalize(_quat_mul(self._current, q_act))
        self._steps += 1
        d = self.distance_to_goal()
        r = 0.0 if d <= self.config.eps_orient else -1.0
        success = r == 0.0
        return StepResult(
            observation=self._observe(),
            reward=r,
            success=success,
            done=success or self._steps >= self.config.episode_len,
            achieved=self.current,
        )
