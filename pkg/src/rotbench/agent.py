"""DDPG with hindsight experience replay for the orientation task.

The training loop is episode-synchronous: collect one full episode, relabel
it (each transition is stored once with the real goal plus ``her_k`` copies
with goals taken from achieved states later in the same episode, rewards
recomputed), then run a fixed number of network updates. Episodes never end
early, so every stored episode has the same length and the replay buffer is
a flat ring over whole episodes.

Critic targets follow the sparse-reward structure: with rewards in {-1, 0}
and discount gamma, every return lies in [-1/(1-gamma), 0], and targets are
clipped to that interval before the regression.

Randomness is split into fixed, documented streams so that runs are
reproducible and the separate concerns cannot perturb one another:
stream k of run seed s uses ``numpy.random.default_rng(s * 1_000_003 + k)``
with k = 0 env, 1 network init, 2 exploration, 3 relabeling, 4 replay
sampling, 5 evaluation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from rotbench.codec import (
    ActionSpec,
    DegeneracyCounter,
    action_dim,
    decode_action,
    encode_observation_batch,
    obs_dim,
)
from rotbench.env import EnvConfig, OrientationEnv
from rotbench.nets import Adam, DenseNet, soft_update
from rotbench.rotations import (
    ReprTag,
    Rotation,
    _quat_conj,
    _quat_exp,
    _quat_log,
    _quat_mul,
    boxminus,
    clamp_angle,
)

STREAM_ENV = 0
STREAM_INIT = 1
STREAM_EXPLORE = 2
STREAM_HER = 3
STREAM_REPLAY = 4
STREAM_EVAL = 5


def stream_rng(run_seed: int, stream: int) -> np.random.Generator:
    """The documented seed-derivation scheme (see the module docstring)."""
    return np.random.default_rng(run_seed * 1_000_003 + stream)


@dataclass(frozen=True)
class Hyperparams:
    gamma: float = 0.98
    soft_update_rate: float = 0.005
    batch_size: int = 256
    buffer_episodes: int = 10_000
    noise_sigma: float = 0.2
    random_action_prob: float = 0.3
    her_k: int = 4
    updates_per_episode: int = 40
    hidden_sizes: tuple = (256, 256)
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    total_steps: int = 200_000
    eval_every: int = 2_000
    eval_episodes: int = 20

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.her_k < 0:
            raise ValueError("her_k must be non-negative")
        if self.batch_size < 1 or self.buffer_episodes < 1:
            raise ValueError("batch_size and buffer_episodes must be positive")

    @property
    def return_floor(self) -> float:
        """Lowest possible discounted return under {-1, 0} rewards."""
        return -1.0 / (1.0 - self.gamma)


@dataclass(frozen=True)
class TrainConfig:
    state_rep: ReprTag
    action_rep: ReprTag
    seed: int = 0
    env: EnvConfig = field(default_factory=EnvConfig)
    hp: Hyperparams = field(default_factory=Hyperparams)

    def __post_init__(self):
        if self.hp.total_steps % self.env.episode_len != 0:
            raise ValueError("total_steps must be a multiple of episode_len")
        if self.hp.eval_every % self.env.episode_len != 0:
            raise ValueError("eval_every must be a multiple of episode_len")


class TrainingDiverged(RuntimeError):
    """Raised when a loss or target goes non-finite; carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


# ---------- episodes, relabeling, replay


@dataclass
class EpisodeRecord:
    """One completed episode in raw form (quaternions kept for relabeling)."""

    states: np.ndarray  # (T+1, 4) body orientation before/after each step
    goal: np.ndarray  # (4,)
    obs: np.ndarray  # (T+1, obs_dim) encoded with the episode goal
    raws: np.ndarray  # (T, act_dim) pre-decode network outputs
    rewards: np.ndarray  # (T,)

    def __len__(self) -> int:
        return len(self.raws)


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action_raw: np.ndarray
    reward: float
    next_observation: np.ndarray
    goal: np.ndarray
    achieved_next: np.ndarray
    done: bool


@dataclass
class TransitionBatch:
    """Column-wise transitions; row(i) gives the record view of one row."""

    obs: np.ndarray
    raw: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    goal_q: np.ndarray
    achieved_q: np.ndarray
    done: np.ndarray
    t_index: np.ndarray  # source step of each row within its episode
    relabeled: np.ndarray

    def __len__(self) -> int:
        return len(self.reward)

    def row(self, i: int) -> Transition:
        return Transition(
            observation=self.obs[i],
            action_raw=self.raw[i],
            reward=float(self.reward[i]),
            next_observation=self.next_obs[i],
            goal=self.goal_q[i],
            achieved_next=self.achieved_q[i],
            done=bool(self.done[i]),
        )


def _angles_to(goals: np.ndarray, states: np.ndarray) -> np.ndarray:
    rel = _quat_mul(_quat_conj(states), goals)
    return np.linalg.norm(_quat_log(rel), axis=-1)


def her_relabel(
    episode: EpisodeRecord,
    k: int,
    rng: np.random.Generator,
    state_tag: ReprTag,
    eps_orient: float,
) -> TransitionBatch:
    """The original transitions plus k future-goal relabelings of each.

    The substitute goal of transition t is the orientation actually reached
    after some uniformly chosen step j >= t of the same episode; its reward
    is recomputed against the new goal with the environment's rule.
    """
    t_len = len(episode)
    achieved = episode.states[1:]
    orig = TransitionBatch(
        obs=episode.obs[:-1],
        raw=episode.raws,
        reward=episode.rewards,
        next_obs=episode.obs[1:],
        goal_q=np.broadcast_to(episode.goal, (t_len, 4)),
        achieved_q=achieved,
        done=episode.rewards == 0.0,
        t_index=np.arange(t_len),
        relabeled=np.zeros(t_len, dtype=bool),
    )
    if k == 0:
        return orig

    idx = np.repeat(np.arange(t_len), k)
    future = idx + (rng.random(t_len * k) * (t_len - idx)).astype(np.int64)
    new_goals = achieved[future]
    rewards = np.where(_angles_to(new_goals, achieved[idx]) <= eps_orient, 0.0, -1.0)
    return TransitionBatch(
        obs=np.concatenate(
            [orig.obs, encode_observation_batch(episode.states[idx], new_goals, state_tag)]
        ),
        raw=np.concatenate([orig.raw, episode.raws[idx]]),
        reward=np.concatenate([orig.reward, rewards]),
        next_obs=np.concatenate(
            [orig.next_obs, encode_observation_batch(achieved[idx], new_goals, state_tag)]
        ),
        goal_q=np.concatenate([orig.goal_q, new_goals]),
        achieved_q=np.concatenate([orig.achieved_q, achieved[idx]]),
        done=np.concatenate([orig.done, rewards == 0.0]),
        t_index=np.concatenate([orig.t_index, idx]),
        relabeled=np.concatenate([orig.relabeled, np.ones(t_len * k, dtype=bool)]),
    )


class ReplayBuffer:
    """Flat ring buffer over fixed-size episodes with uniform row sampling."""

    def __init__(self, capacity_episodes: int, rows_per_episode: int, obs_d: int, act_d: int):
        self.capacity_episodes = capacity_episodes
        self.rows_per_episode = rows_per_episode
        n = capacity_episodes * rows_per_episode
        self.obs = np.empty((n, obs_d))
        self.raw = np.empty((n, act_d))
        self.reward = np.empty(n)
        self.next_obs = np.empty((n, obs_d))
        self.goal_q = np.empty((n, 4))
        self.achieved_q = np.empty((n, 4))
        self.done = np.empty(n, dtype=bool)
        self.episodes_seen = 0

    def __len__(self) -> int:
        return min(self.episodes_seen, self.capacity_episodes) * self.rows_per_episode

    def add_episode(self, batch: TransitionBatch) -> None:
        if len(batch) != self.rows_per_episode:
            raise ValueError(
                f"expected {self.rows_per_episode} rows per episode, got {len(batch)}"
            )
        slot = self.episodes_seen % self.capacity_episodes
        rows = slice(slot * self.rows_per_episode, (slot + 1) * self.rows_per_episode)
        self.obs[rows] = batch.obs
        self.raw[rows] = batch.raw
        self.reward[rows] = batch.reward
        self.next_obs[rows] = batch.next_obs
        self.goal_q[rows] = batch.goal_q
        self.achieved_q[rows] = batch.achieved_q
        self.done[rows] = batch.done
        self.episodes_seen += 1

    def sample(self, rng: np.random.Generator, batch_size: int):
        idx = rng.integers(len(self), size=batch_size)
        return self.obs[idx], self.raw[idx], self.reward[idx], self.next_obs[idx]


# ---------- networks and updates


@dataclass
class DDPGNetworks:
    actor: DenseNet
    critic: DenseNet
    target_actor: DenseNet
    target_critic: DenseNet
    actor_opt: Adam
    critic_opt: Adam


def build_networks(state_rep: ReprTag, action_rep: ReprTag, hp: Hyperparams, rng) -> DDPGNetworks:
    obs_d = 2 * obs_dim(state_rep)
    act_d = action_dim(action_rep)
    actor = DenseNet(
        [obs_d, *hp.hidden_sizes, act_d], head="tanh", rng=rng, final_scale=1e-3
    )
    critic = DenseNet([obs_d + act_d, *hp.hidden_sizes, 1], head="identity", rng=rng)
    return DDPGNetworks(
        actor=actor,
        critic=critic,
        target_actor=actor.copy(),
        target_critic=critic.copy(),
        actor_opt=Adam(actor.params(), lr=hp.actor_lr),
        critic_opt=Adam(critic.params(), lr=hp.critic_lr),
    )


def act(
    actor: DenseNet,
    observation: np.ndarray,
    hp: Hyperparams,
    rng: Optional[np.random.Generator] = None,
    explore: bool = False,
) -> np.ndarray:
    """Raw action in [-1, 1]; exploration adds Gaussian noise and sometimes
    replaces the action with a uniform draw."""
    a = actor.forward(observation)
    if explore:
        if rng is None:
            raise ValueError("exploration requires an rng")
        a = np.clip(a + rng.normal(0.0, hp.noise_sigma, a.shape), -1.0, 1.0)
        if rng.random() < hp.random_action_prob:
            a = rng.uniform(-1.0, 1.0, a.shape)
        return a
    return np.clip(a, -1.0, 1.0)


def ddpg_update(nets: DDPGNetworks, batch, hp: Hyperparams) -> dict:
    """One critic and one actor gradient step on a sampled batch."""
    obs, raw, rew, next_obs = batch
    b = len(obs)
    obs_d = obs.shape[1]

    next_act = nets.target_actor.forward(next_obs)
    next_q = nets.target_critic.forward(np.concatenate([next_obs, next_act], axis=1))[:, 0]
    y = rew + hp.gamma * next_q
    if not np.all(np.isfinite(y)):
        raise TrainingDiverged(
            "non-finite critic target",
            {"next_q_nonfinite": int(np.sum(~np.isfinite(next_q)))},
        )
    np.clip(y, hp.return_floor, 0.0, out=y)
    assert np.all(y >= hp.return_floor) and np.all(y <= 0.0)

    q, critic_cache = nets.critic.forward_cached(np.concatenate([obs, raw], axis=1))
    q = q[:, 0]
    critic_loss = float(np.mean((q - y) ** 2))
    actor_in, actor_cache = nets.actor.forward_cached(obs)
    q_pi, q_cache = nets.critic.forward_cached(np.concatenate([obs, actor_in], axis=1))
    actor_loss = float(-np.mean(q_pi))
    if not (np.isfinite(critic_loss) and np.isfinite(actor_loss)):
        raise TrainingDiverged(
            "non-finite loss",
            {
                "critic_loss": critic_loss,
                "actor_loss": actor_loss,
                "q_mean": float(np.mean(q)),
                "target_mean": float(np.mean(y)),
            },
        )

    critic_grads, _ = nets.critic.backward_from_cache(
        critic_cache, ((2.0 / b) * (q - y))[:, None]
    )
    nets.critic_opt.step(nets.critic.params(), critic_grads)

    # ascend Q(s, actor(s)): push the critic's action-gradient through the actor
    dq_dinput = nets.critic.input_grad_from_cache(q_cache, np.full((b, 1), -1.0 / b))
    actor_grads, _ = nets.actor.backward_from_cache(actor_cache, dq_dinput[:, obs_d:])
    nets.actor_opt.step(nets.actor.params(), actor_grads)

    soft_update(nets.target_actor, nets.actor, hp.soft_update_rate)
    soft_update(nets.target_critic, nets.critic, hp.soft_update_rate)
    return {
        "critic_loss": critic_loss,
        "actor_loss": actor_loss,
        "q_mean": float(np.mean(q)),
        "target_mean": float(np.mean(y)),
    }


# ---------- policies


@dataclass
class TrainedPolicy:
    actor: DenseNet
    state_rep: ReprTag
    action_rep: ReprTag
    max_angle: float

    def act_raw(self, observation: np.ndarray) -> np.ndarray:
        return np.clip(self.actor.forward(observation), -1.0, 1.0)

    @property
    def action_spec(self) -> ActionSpec:
        return ActionSpec(self.action_rep, self.max_angle)


_PAYLOAD_2D = {ReprTag.MATRIX: (3, 3), ReprTag.SIXD: (3, 2)}


@dataclass
class GreedyPolicy:
    """Scripted shortest-path oracle wearing the policy interface.

    It reads state and goal back out of the observation, computes the clamped
    tangent toward the goal and emits it as a quaternion action, whose raw
    components always fit the [-1, 1] head range.
    """

    state_rep: ReprTag = ReprTag.LIE_ALGEBRA
    max_angle: float = 0.1 * np.pi
    action_rep: ReprTag = ReprTag.QUAT

    def _parse(self, vec: np.ndarray) -> Rotation:
        shape = _PAYLOAD_2D.get(self.state_rep)
        payload = vec.reshape(shape, order="F") if shape else vec
        return Rotation(self.state_rep, payload)

    def act_raw(self, observation: np.ndarray) -> np.ndarray:
        half = len(observation) // 2
        state = self._parse(observation[:half])
        goal = self._parse(observation[half:])
        tau = clamp_angle(boxminus(goal, state), self.max_angle)
        return _quat_exp(tau)


@dataclass
class RandomPolicy:
    """Uniform raw actions; the floor any learned policy has to beat."""

    state_rep: ReprTag
    action_rep: ReprTag
    max_angle: float = 0.1 * np.pi
    seed: int = 0

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def act_raw(self, observation: np.ndarray) -> np.ndarray:
        return self._rng.uniform(-1.0, 1.0, action_dim(self.action_rep))


# ---------- evaluation and training


@dataclass(frozen=True)
class EvalResult:
    success_rate: float
    avg_reward_per_step: float
    episodes: int
    degenerate_decodes: int


def evaluate(policy, env_config: EnvConfig, n_episodes: int, seed: int) -> EvalResult:
    """Deterministic rollouts; an episode counts as a success if it reaches
    the goal at any step. Episodes always run to full length, so reaching
    the goal sooner (and staying) raises the average reward per step."""
    env = OrientationEnv(
        replace(env_config, seed=seed), state_tag=policy.state_rep
    )
    spec = ActionSpec(policy.action_rep, policy.max_angle)
    counter = DegeneracyCounter()
    hits = 0
    total_reward = 0.0
    for _ in range(n_episodes):
        obs = env.reset().observation
        hit = False
        for _ in range(env_config.episode_len):
            res = env.step(decode_action(policy.act_raw(obs), spec, counter))
            obs = res.observation
            total_reward += res.reward
            hit = hit or res.success
        hits += hit
    return EvalResult(
        success_rate=hits / n_episodes,
        avg_reward_per_step=total_reward / (n_episodes * env_config.episode_len),
        episodes=n_episodes,
        degenerate_decodes=counter.count,
    )


@dataclass(frozen=True)
class MetricsRow:
    env_step: int
    eval_success_rate: float
    eval_avg_reward_per_step: float
    train_s: float
    rollout_s: float


@dataclass
class TrainStats:
    episodes: int = 0
    updates: int = 0
    degenerate_decodes: int = 0
    train_s: float = 0.0
    rollout_s: float = 0.0
    wall_s: float = 0.0


@dataclass
class TrainResult:
    policy: TrainedPolicy
    metrics: list  # of MetricsRow
    stats: TrainStats
    nets: DDPGNetworks


def _collect_episode(env, nets, hp, spec, explore_rng, counter, obs_d, act_d):
    t_len = env.config.episode_len
    states = np.empty((t_len + 1, 4))
    obs = np.empty((t_len + 1, obs_d))
    raws = np.empty((t_len, act_d))
    rewards = np.empty(t_len)
    first = env.reset()
    states[0] = first.achieved.data
    obs[0] = first.observation
    for t in range(t_len):
        raws[t] = act(nets.actor, obs[t], hp, explore_rng, explore=True)
        res = env.step(decode_action(raws[t], spec, counter))
        states[t + 1] = res.achieved.data
        obs[t + 1] = res.observation
        rewards[t] = res.reward
    return EpisodeRecord(
        states=states, goal=env.goal.data, obs=obs, raws=raws, rewards=rewards
    )


def train(config: TrainConfig) -> TrainResult:
    """Run DDPG+HER for config.hp.total_steps environment steps.

    Deterministic given config.seed; the wall-clock fields in the metrics
    are the only thing that varies between identical runs.
    """
    hp = config.hp
    env_rng = stream_rng(config.seed, STREAM_ENV)
    init_rng = stream_rng(config.seed, STREAM_INIT)
    explore_rng = stream_rng(config.seed, STREAM_EXPLORE)
    her_rng = stream_rng(config.seed, STREAM_HER)
    replay_rng = stream_rng(config.seed, STREAM_REPLAY)
    eval_rng = stream_rng(config.seed, STREAM_EVAL)

    env = OrientationEnv(config.env, state_tag=config.state_rep, rng=env_rng)
    nets = build_networks(config.state_rep, config.action_rep, hp, init_rng)
    spec = ActionSpec(config.action_rep, config.env.max_angle)
    counter = DegeneracyCounter()

    obs_d = 2 * obs_dim(config.state_rep)
    act_d = action_dim(config.action_rep)
    episodes_planned = hp.total_steps // config.env.episode_len
    buffer = ReplayBuffer(
        capacity_episodes=min(hp.buffer_episodes, episodes_planned),
        rows_per_episode=config.env.episode_len * (hp.her_k + 1),
        obs_d=obs_d,
        act_d=act_d,
    )

    policy = TrainedPolicy(
        actor=nets.actor,
        state_rep=config.state_rep,
        action_rep=config.action_rep,
        max_angle=config.env.max_angle,
    )
    metrics: list = []
    stats = TrainStats()
    wall_start = time.perf_counter()
    steps_done = 0
    next_eval = hp.eval_every

    while steps_done < hp.total_steps:
        t0 = time.perf_counter()
        episode = _collect_episode(env, nets, hp, spec, explore_rng, counter, obs_d, act_d)
        buffer.add_episode(
            her_relabel(episode, hp.her_k, her_rng, config.state_rep, config.env.eps_orient)
        )
        steps_done += config.env.episode_len
        stats.episodes += 1
        stats.rollout_s += time.perf_counter() - t0

        if len(buffer) >= hp.batch_size:
            t0 = time.perf_counter()
            for _ in range(hp.updates_per_episode):
                ddpg_update(nets, buffer.sample(replay_rng, hp.batch_size), hp)
                stats.updates += 1
            stats.train_s += time.perf_counter() - t0

        if steps_done >= next_eval:
            t0 = time.perf_counter()
            result = evaluate(
                policy,
                config.env,
                hp.eval_episodes,
                seed=int(eval_rng.integers(2**31)),
            )
            stats.rollout_s += time.perf_counter() - t0
            metrics.append(
                MetricsRow(
                    env_step=steps_done,
                    eval_success_rate=result.success_rate,
                    eval_avg_reward_per_step=result.avg_reward_per_step,
                    train_s=stats.train_s,
                    rollout_s=stats.rollout_s,
                )
            )
            next_eval += hp.eval_every

    stats.degenerate_decodes = counter.count
    stats.wall_s = time.perf_counter() - wall_start
    return TrainResult(policy=policy, metrics=metrics, stats=stats, nets=nets)
