"""Shared numeric primitives: bounded probabilities, logit/sigmoid, reward."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOGIT_EPS = 1e-6


class UnitInterval(float):
    """A float constrained to [0, 1]; construction rejects anything else."""

    def __new__(cls, value):
        value = float(value)
        if not (0.0 <= value <= 1.0):
            raise ValueError(f"value {value!r} outside [0, 1]")
        return super().__new__(cls, value)


@dataclass(frozen=True)
class RewardParams:
    goal: float
    exponent: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "goal", UnitInterval(self.goal))
        if not self.exponent > 0:
            raise ValueError(f"reward exponent must be > 0, got {self.exponent}")


@dataclass(frozen=True)
class CampaignState:
    """Observation handed to a policy: (measured v_t, goal, threshold set at t-1)."""

    viewability: float
    goal: float
    prev_threshold: float

    def __post_init__(self):
        for name in ("viewability", "goal", "prev_threshold"):
            object.__setattr__(self, name, UnitInterval(getattr(self, name)))

    def as_array(self) -> np.ndarray:
        return np.array([self.viewability, self.goal, self.prev_threshold])


def reward(v, params: RewardParams):
    """``(1 - |v - goal|) ** exponent``; accepts scalars or arrays."""
    if np.ndim(v) == 0:
        return (1.0 - abs(float(v) - params.goal)) ** params.exponent
    return (1.0 - np.abs(np.asarray(v, dtype=float) - params.goal)) ** params.exponent


def safe_logit(x, eps: float = LOGIT_EPS):
    """log(x / (1 - x)) after clamping x into [eps, 1 - eps]."""
    if not 0.0 < eps < 0.5:
        raise ValueError(f"eps must lie in (0, 0.5), got {eps}")
    if np.ndim(x) == 0:
        x = min(max(float(x), eps), 1.0 - eps)
        return math.log(x / (1.0 - x))
    x = np.clip(np.asarray(x, dtype=float), eps, 1.0 - eps)
    return np.log(x / (1.0 - x))


def sigmoid(x):
    """Numerically stable logistic function for scalars or arrays."""
    if np.ndim(x) == 0:
        x = float(x)
        if x >= 0:
            return 1.0 / (1.0 + math.exp(-x))
        z = math.exp(x)
        return z / (1.0 + z)
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    z = np.exp(x[~pos])
    out[~pos] = z / (1.0 + z)
    return out
