"""Strict JSON run configuration.

Every section and field is optional; unknown keys are rejected with the
dotted path of the offending key.  ``VIEWSIM_SEED`` replaces the seed list.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .agents import AgentConfig
from .controllers import PidConfig
from .dataset import GeneratorConfig
from .predictors import TrainConfig
from .sim import SimConfig

SEED_ENV = "VIEWSIM_SEED"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AgentSpec:
    """A named agent configuration, e.g. ``dqn10`` or ``td3``."""

    name: str
    config: AgentConfig


@dataclass(frozen=True)
class BayesoptConfig:
    budget: int = 20
    init_points: int = 8
    n_candidates: int = 4096
    algo: str = "ddpg"
    # per-dimension bound overrides, {name: [lo, hi]}
    space: dict = field(default_factory=dict)
    random_search: bool = True

    def __post_init__(self):
        if self.init_points < 1 or self.budget < self.init_points:
            raise ValueError("need budget >= init_points >= 1")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    split_fraction: float = 0.5
    rollout_episodes: int = 200
    eval_episodes: int = 5
    baseline_alphas: tuple = (0.204, 1.08)
    schedule_intervals: int = 96
    goal_changes: tuple = ((48, 0.8), (72, 0.6))
    goal_band: float = 0.05
    policy: Optional[str] = None

    def __post_init__(self):
        if self.rollout_episodes < 1 or self.eval_episodes < 1 or self.schedule_intervals < 1:
            raise ValueError("episode and interval counts must be positive")
        object.__setattr__(self, "baseline_alphas", tuple(float(a) for a in self.baseline_alphas))
        object.__setattr__(self, "goal_changes", tuple((int(i), float(g)) for i, g in self.goal_changes))


DEFAULT_AGENTS = ("dqn10", "dqn20", "ddpg", "td3")


def agent_preset(name: str) -> dict:
    if name.startswith("dqn") and name[3:].isdigit():
        return {"algo": "dqn", "n_actions": int(name[3:])}
    if name in ("ddpg", "td3", "dqn"):
        return {"algo": name}
    raise ConfigError(f"unknown agent name {name!r}; expected dqnN, ddpg or td3")


@dataclass(frozen=True)
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    predictors: TrainConfig = field(default_factory=TrainConfig)
    agents: tuple = field(default_factory=lambda: tuple(
        AgentSpec(n, AgentConfig(**agent_preset(n))) for n in DEFAULT_AGENTS))
    pid: PidConfig = field(default_factory=PidConfig)
    bayesopt: BayesoptConfig = field(default_factory=BayesoptConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    seeds: tuple = (1, 2, 3)

    def agent(self, name: str) -> AgentSpec:
        for spec in self.agents:
            if spec.name == name:
                return spec
        return AgentSpec(name, AgentConfig(**agent_preset(name)))


_TUPLE_FIELDS = {"rollout_goal_range", "hidden", "threshold_bounds", "baseline_alphas", "goal_changes"}


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key {path}.{key}")
    kwargs = {}
    for key, value in data.items():
        if key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _check_seed(value, path):
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 2**64:
        raise ConfigError(f"{path}: seeds must be integers in [0, 2^64), got {value!r}")
    return value


def parse_config(doc: dict, env=None) -> RunConfig:
    env = os.environ if env is None else env
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    sections = {f.name for f in dataclasses.fields(RunConfig)}
    for key in doc:
        if key not in sections:
            raise ConfigError(f"unknown key {key}")
    kwargs = {}
    simple = {"generator": GeneratorConfig, "sim": SimConfig, "predictors": TrainConfig,
              "pid": PidConfig, "bayesopt": BayesoptConfig, "experiment": ExperimentConfig}
    for name, cls in simple.items():
        if name in doc:
            kwargs[name] = _build(cls, doc[name], name)
    if "generator" in kwargs:
        _check_seed(kwargs["generator"].seed, "generator.seed")
    if "agents" in doc:
        if not isinstance(doc["agents"], list) or not doc["agents"]:
            raise ConfigError("agents: expected a nonempty list")
        specs = []
        for i, entry in enumerate(doc["agents"]):
            if not isinstance(entry, dict) or "name" not in entry:
                raise ConfigError(f"agents[{i}]: expected an object with a name")
            body = {k: v for k, v in entry.items() if k != "name"}
            merged = {**agent_preset(entry["name"]), **body} if "algo" not in body else body
            specs.append(AgentSpec(entry["name"], _build(AgentConfig, merged, f"agents[{i}]")))
        kwargs["agents"] = tuple(specs)
    if "seeds" in doc:
        if not isinstance(doc["seeds"], list) or not doc["seeds"]:
            raise ConfigError("seeds: expected a nonempty list")
        kwargs["seeds"] = tuple(_check_seed(s, f"seeds[{i}]") for i, s in enumerate(doc["seeds"]))
    if env.get(SEED_ENV):
        try:
            value = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
        kwargs["seeds"] = (_check_seed(value, SEED_ENV),)
    return RunConfig(**kwargs)


def load_config(path, env=None) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc, env)
