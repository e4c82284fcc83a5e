"""Offline (batch) RL from logged transitions: DQN, DDPG and TD3.

Training never touches the simulator; it makes epoch passes over a fixed
transition log.  States are ``(viewability, goal, previous threshold)`` and
the action is the next threshold in [0, 1].
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import CampaignState
from .csvio import FormatError, fmt_float, write_rows
from .nn import Adam, Mlp, soft_update
from .dataset import tables_overlap
from .sim import (TransitionSample, UniformRandomPolicy, collect_random_rollouts, episode_seed, run_episode,
                  transitions_to_arrays)

ALGOS = ("dqn", "ddpg", "td3")


@dataclass(frozen=True)
class AgentConfig:
    algo: str = "td3"
    n_actions: int = 10
    gamma: float = 0.9
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    epochs: int = 30
    minibatch: int = 64
    tau: float = 0.005
    td3_policy_noise: float = 0.2
    td3_noise_clip: float = 0.5
    td3_policy_delay: int = 2
    hidden: tuple = (64, 64)
    seed: int = 0

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.algo == "dqn" and self.n_actions < 2:
            raise ValueError("dqn needs n_actions >= 2")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not (self.actor_lr > 0 and self.critic_lr > 0):
            raise ValueError("learning rates must be > 0")
        if self.epochs < 1 or self.minibatch < 1:
            raise ValueError("epochs and minibatch must be positive")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.td3_policy_delay < 1 or self.td3_noise_clip < 0 or self.td3_policy_noise < 0:
            raise ValueError("bad td3 settings")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class ReplayBuffer:
    """Bounded FIFO store of transitions with a seeded uniform sampler."""

    def __init__(self, capacity: int = 1_000_000, seed=0):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.rng = np.random.default_rng(seed)
        self._data = None
        self._size = 0

    def __len__(self):
        return self._size

    def extend(self, samples: Sequence[TransitionSample]) -> None:
        if not samples:
            return
        arrays = transitions_to_arrays(samples)
        if self._data is None:
            self._data = arrays
        else:
            self._data = tuple(np.concatenate([old, new]) for old, new in zip(self._data, arrays))
        n = self._data[0].shape[0]
        if n > self.capacity:
            self._data = tuple(a[n - self.capacity:] for a in self._data)
        self._size = min(n, self.capacity)

    @property
    def arrays(self):
        return self._data

    def sample(self, batch: int):
        if self._size < batch:
            raise ValueError(f"buffer holds {self._size} transitions, cannot sample {batch}")
        idx = self.rng.integers(0, self._size, batch)
        return tuple(a[idx] for a in self._data)

    def epoch(self, batch: int):
        """Yield shuffled minibatches covering the buffer once."""
        batch = min(batch, self._size)
        order = self.rng.permutation(self._size)
        for start in range(0, self._size, batch):
            idx = order[start:start + batch]
            yield tuple(a[idx] for a in self._data)


def encode_states(s) -> np.ndarray:
    return 2.0 * np.asarray(s, dtype=float) - 1.0


def _critic_input(s, a):
    return np.column_stack([encode_states(s), 2.0 * np.asarray(a, dtype=float).reshape(-1) - 1.0])


def _net(sizes_in, hidden, n_out, out_act, seed):
    sizes = [sizes_in, *hidden, n_out]
    acts = ["relu"] * len(hidden) + [out_act]
    return Mlp(sizes, acts, seed=seed)


def action_bins(n_actions: int) -> np.ndarray:
    return np.arange(n_actions) / (n_actions - 1)


def bin_actions(actions, n_actions: int) -> np.ndarray:
    return np.rint(np.asarray(actions, dtype=float) * (n_actions - 1)).astype(np.int64)


def actor_actions(actor: Mlp, states) -> np.ndarray:
    """Squash the tanh actor output from [-1, 1] onto thresholds in [0, 1]."""
    return 0.5 * (actor.forward(encode_states(states)).reshape(-1) + 1.0)


class TrainedPolicy:
    """Deterministic greedy decision function produced by an offline trainer."""

    def __init__(self, algo: str, networks: dict, n_actions: int = 0, config_digest: str = ""):
        if algo not in ALGOS:
            raise ValueError(f"unknown algo {algo!r}")
        self.algo = algo
        self.networks = networks
        self.n_actions = n_actions
        self.config_digest = config_digest

    def act_batch(self, states) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if self.algo == "dqn":
            q = self.networks["q"].forward(encode_states(states))
            return action_bins(self.n_actions)[np.argmax(q, axis=1)]
        return np.clip(actor_actions(self.networks["actor"], states), 0.0, 1.0)

    def act(self, state: CampaignState) -> float:
        return float(self.act_batch(state.as_array())[0])

    __call__ = act

    def __repr__(self):
        extra = f", n_actions={self.n_actions}" if self.algo == "dqn" else ""
        return f"TrainedPolicy({self.algo}{extra})"

    def save(self, path) -> None:
        lines = [f"manifest,algo,{self.algo},n_actions,{self.n_actions},config_digest,{self.config_digest}"]
        for name in sorted(self.networks):
            lines.append(f"network,{name}")
            lines.extend(self.networks[name].to_lines())
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TrainedPolicy":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("manifest,"):
            raise FormatError(f"{path}: missing manifest line")
        fields = lines[0].split(",")[1:]
        meta = dict(zip(fields[::2], fields[1::2]))
        try:
            algo, n_actions, digest = meta["algo"], int(meta["n_actions"]), meta["config_digest"]
        except (KeyError, ValueError):
            raise FormatError(f"{path}: malformed manifest {lines[0]!r}") from None
        networks = {}
        i = 1
        while i < len(lines):
            if not lines[i].startswith("network,"):
                raise FormatError(f"{path}: line {i + 1}: expected a network header")
            name = lines[i].split(",", 1)[1]
            networks[name] = Mlp.from_lines(lines[i + 1:i + 4])
            i += 4
        return cls(algo, networks, n_actions, digest)


@dataclass
class TrainStats:
    critic_updates: int = 0
    actor_updates: int = 0
    losses: list = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


def _buffer(transitions, seed) -> ReplayBuffer:
    if len(transitions) == 0:
        raise ValueError("no transitions to train on")
    buf = ReplayBuffer(capacity=max(len(transitions), 1), seed=seed)
    buf.extend(list(transitions))
    return buf


def bellman_targets(rewards, terminals, next_values, gamma: float) -> np.ndarray:
    """``r + gamma * next_value``, with the bootstrap dropped on terminal steps."""
    r = np.asarray(rewards, dtype=float)
    d = np.asarray(terminals, dtype=float)
    return r + gamma * (1.0 - d) * np.asarray(next_values, dtype=float)


def td3_targets(rewards, terminals, q1_next, q2_next, gamma: float) -> np.ndarray:
    return bellman_targets(rewards, terminals, np.minimum(q1_next, q2_next), gamma)


def smoothed_target_actions(actor_target: Mlp, next_states, rng, policy_noise: float, noise_clip: float) -> np.ndarray:
    a = actor_actions(actor_target, next_states)
    eps = np.clip(rng.normal(0.0, policy_noise, a.shape), -noise_clip, noise_clip) if policy_noise > 0 else 0.0
    return np.clip(a + eps, 0.0, 1.0)


def dqn_train(transitions, config: AgentConfig, stats: Optional[TrainStats] = None) -> TrainedPolicy:
    if config.algo != "dqn":
        raise ValueError("dqn_train needs algo='dqn'")
    stats = TrainStats() if stats is None else stats
    buf = _buffer(transitions, config.seed)
    q = _net(3, config.hidden, config.n_actions, "identity", config.seed)
    q_target = q.copy()
    opt = Adam(q.params, config.critic_lr)
    for _ in range(config.epochs):
        epoch_loss = []
        for s, a, r, s2, d in buf.epoch(config.minibatch):
            bins = bin_actions(a, config.n_actions)
            y = bellman_targets(r, d, q_target.forward(encode_states(s2)).max(axis=1), config.gamma)
            out, cache = q.forward_cache(encode_states(s))
            rows = np.arange(len(bins))
            err = out[rows, bins] - y
            dout = np.zeros_like(out)
            dout[rows, bins] = err / len(bins)
            grads, _ = q.backward(cache, dout)
            opt.step(q.params, grads)
            soft_update(q_target, q, config.tau)
            stats.critic_updates += 1
            epoch_loss.append(0.5 * float(np.mean(err * err)))
        stats.losses.append(float(np.mean(epoch_loss)))
    return TrainedPolicy("dqn", {"q": q}, config.n_actions, config.digest())


def actor_objective_grad(actor: Mlp, critic: Mlp, states):
    """Mean critic value of the actor's actions and its gradient w.r.t. actor params."""
    x = encode_states(states)
    t, a_cache = actor.forward_cache(x)
    actions = 0.5 * (t.reshape(-1) + 1.0)
    q, c_cache = critic.forward_cache(_critic_input(states, actions))
    n = x.shape[0]
    _, dinput = critic.backward(c_cache, np.full_like(q, 1.0 / n))
    # critic sees 2a - 1 and a = (t + 1) / 2, so dQ/dt = dQ/d(input)
    dt = dinput[:, -1:].copy()
    grads, _ = actor.backward(a_cache, dt)
    return float(q.mean()), grads


def _critic_step(critic: Mlp, opt: Adam, s, a, y) -> float:
    out, cache = critic.forward_cache(_critic_input(s, a))
    err = out.reshape(-1) - y
    grads, _ = critic.backward(cache, (err / len(y)).reshape(-1, 1))
    opt.step(critic.params, grads)
    return 0.5 * float(np.mean(err * err))


def _actor_step(actor: Mlp, critic: Mlp, opt: Adam, s) -> None:
    _, grads = actor_objective_grad(actor, critic, s)
    opt.step(actor.params, [-g for g in grads])


def ddpg_train(transitions, config: AgentConfig, stats: Optional[TrainStats] = None) -> TrainedPolicy:
    if config.algo != "ddpg":
        raise ValueError("ddpg_train needs algo='ddpg'")
    stats = TrainStats() if stats is None else stats
    buf = _buffer(transitions, config.seed)
    actor = _net(3, config.hidden, 1, "tanh", config.seed)
    critic = _net(4, config.hidden, 1, "identity", config.seed + 1)
    actor_t, critic_t = actor.copy(), critic.copy()
    a_opt = Adam(actor.params, config.actor_lr)
    c_opt = Adam(critic.params, config.critic_lr)
    for _ in range(config.epochs):
        epoch_loss = []
        for s, a, r, s2, d in buf.epoch(config.minibatch):
            q_next = critic_t.forward(_critic_input(s2, actor_actions(actor_t, s2))).reshape(-1)
            y = bellman_targets(r, d, q_next, config.gamma)
            epoch_loss.append(_critic_step(critic, c_opt, s, a, y))
            stats.critic_updates += 1
            _actor_step(actor, critic, a_opt, s)
            stats.actor_updates += 1
            soft_update(critic_t, critic, config.tau)
            soft_update(actor_t, actor, config.tau)
        stats.losses.append(float(np.mean(epoch_loss)))
    return TrainedPolicy("ddpg", {"actor": actor, "critic": critic}, 0, config.digest())


def td3_train(transitions, config: AgentConfig, stats: Optional[TrainStats] = None) -> TrainedPolicy:
    if config.algo != "td3":
        raise ValueError("td3_train needs algo='td3'")
    stats = TrainStats() if stats is None else stats
    buf = _buffer(transitions, config.seed)
    noise_rng = np.random.default_rng([config.seed, 1])
    actor = _net(3, config.hidden, 1, "tanh", config.seed)
    c1 = _net(4, config.hidden, 1, "identity", config.seed + 1)
    c2 = _net(4, config.hidden, 1, "identity", config.seed + 2)
    actor_t, c1_t, c2_t = actor.copy(), c1.copy(), c2.copy()
    a_opt = Adam(actor.params, config.actor_lr)
    c1_opt = Adam(c1.params, config.critic_lr)
    c2_opt = Adam(c2.params, config.critic_lr)
    for _ in range(config.epochs):
        epoch_loss = []
        for s, a, r, s2, d in buf.epoch(config.minibatch):
            a2 = smoothed_target_actions(actor_t, s2, noise_rng, config.td3_policy_noise, config.td3_noise_clip)
            x2 = _critic_input(s2, a2)
            y = td3_targets(r, d, c1_t.forward(x2).reshape(-1), c2_t.forward(x2).reshape(-1), config.gamma)
            loss = _critic_step(c1, c1_opt, s, a, y) + _critic_step(c2, c2_opt, s, a, y)
            epoch_loss.append(loss)
            stats.critic_updates += 1
            if stats.critic_updates % config.td3_policy_delay == 0:
                _actor_step(actor, c1, a_opt, s)
                stats.actor_updates += 1
                soft_update(c1_t, c1, config.tau)
                soft_update(c2_t, c2, config.tau)
                soft_update(actor_t, actor, config.tau)
        stats.losses.append(float(np.mean(epoch_loss)))
    return TrainedPolicy("td3", {"actor": actor, "critic1": c1, "critic2": c2}, 0, config.digest())


def train_agent(transitions, config: AgentConfig, stats: Optional[TrainStats] = None) -> TrainedPolicy:
    trainer = {"dqn": dqn_train, "ddpg": ddpg_train, "td3": td3_train}[config.algo]
    return trainer(transitions, config, stats)


def act(policy: TrainedPolicy, state: CampaignState) -> float:
    return policy.act(state)


COMPARISON_HEADER = ("algo", "seed", "interval", "reward")
RANDOM_LABEL = "random"


@dataclass
class Comparison:
    """Per-interval reward curves keyed by ``(algo, seed)``."""

    curves: dict
    labels: list
    seeds: list

    def rows(self):
        for label in self.labels:
            for seed in self.seeds:
                for i, r in enumerate(self.curves[label, seed]):
                    yield label, seed, i, float(r)

    def mean_final(self, label: str) -> float:
        return float(np.mean([self.curves[label, s][-1] for s in self.seeds]))

    def mean_finals(self) -> dict:
        return {label: self.mean_final(label) for label in self.labels}

    def write_csv(self, path) -> None:
        write_rows(path, COMPARISON_HEADER, ((a, s, i, fmt_float(r)) for a, s, i, r in self.rows()))


def compare_algorithms(train_market, eval_market, sim_config, agent_specs, seeds,
                       rollout_episodes: int = 200, eval_episodes: int = 5) -> Comparison:
    """Train every agent on one shared rollout log per seed and evaluate on held-out data.

    ``agent_specs`` is a sequence of ``(label, AgentConfig)``.  Each curve is
    the per-interval reward averaged over ``eval_episodes`` evaluation days;
    every policy of a seed sees the same evaluation days.  A uniform-random
    policy is included under the label ``"random"``.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    if tables_overlap(train_market.table, eval_market.table):
        raise ValueError("training and evaluation impression pools overlap")
    eval_config = replace(sim_config, rollout_goal_range=None)
    curves = {}
    labels = [label for label, _ in agent_specs] + [RANDOM_LABEL]
    for seed in seeds:
        transitions = collect_random_rollouts(train_market, sim_config, rollout_episodes, seed=seed)
        day_seeds = [episode_seed(seed, 10_000 + k) for k in range(eval_episodes)]

        def evaluate(policy):
            return np.mean([run_episode(policy, eval_market, eval_config, seed=d).rewards for d in day_seeds], axis=0)

        for label, cfg in agent_specs:
            policy = train_agent(transitions, replace(cfg, seed=seed))
            curves[label, seed] = evaluate(policy)
        curves[RANDOM_LABEL, seed] = evaluate(UniformRandomPolicy(seed))
    return Comparison(curves, labels, list(seeds))
