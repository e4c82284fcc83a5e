"""Deterministic logit-space environment model and the greedy baseline policy.

The model predicts next-interval viewability from the current viewability and
a threshold change::

    logit(v') = logit(v) + alpha * (logit(phi') - logit(phi))

``alpha`` is estimated from logged (v, phi) -> (v', phi') pairs whose
threshold actually moved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import LOGIT_EPS, CampaignState, UnitInterval, safe_logit, sigmoid
from .kernels import greedy_grid_argmax

REFERENCE_ALPHA_MEDIAN = 0.204
REFERENCE_ALPHA_MEAN_POSITIVE = 1.08

_MIN_LOGIT_DELTA = 1e-9


class InsufficientDataError(ValueError):
    """Raised when an estimator has nothing to estimate from."""


@dataclass(frozen=True)
class EnvModelParams:
    alpha: float
    eps: float = LOGIT_EPS

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 < self.eps < 0.5:
            raise ValueError(f"eps must lie in (0, 0.5), got {self.eps}")


@dataclass(frozen=True)
class ControlObservation:
    v_t: float
    phi_t: float
    v_next: float
    phi_next: float

    def __post_init__(self):
        for name in ("v_t", "phi_t", "v_next", "phi_next"):
            object.__setattr__(self, name, UnitInterval(getattr(self, name)))


def predict_next_viewability(v_t, phi_t, phi_next, params: EnvModelParams) -> float:
    if phi_next == phi_t:
        return float(v_t)
    eps = params.eps
    z = safe_logit(v_t, eps) + params.alpha * (safe_logit(phi_next, eps) - safe_logit(phi_t, eps))
    return sigmoid(z)


def alpha_samples(history: Iterable[ControlObservation], eps: float = LOGIT_EPS) -> list[float]:
    """Per-pair sensitivity estimates; pairs whose threshold did not move are skipped."""
    out = []
    for obs in history:
        d_phi = safe_logit(obs.phi_next, eps) - safe_logit(obs.phi_t, eps)
        if abs(d_phi) <= _MIN_LOGIT_DELTA:
            continue
        d_v = safe_logit(obs.v_next, eps) - safe_logit(obs.v_t, eps)
        out.append(d_v / d_phi)
    return out


def alpha_median(samples: Sequence[float]) -> float:
    if len(samples) == 0:
        raise InsufficientDataError("insufficient data: no alpha samples")
    return float(np.median(np.asarray(samples, dtype=float)))


def alpha_mean_positive(samples: Sequence[float]) -> float:
    arr = np.asarray(samples, dtype=float)
    pos = arr[arr > 0]
    if pos.size == 0:
        raise InsufficientDataError("insufficient data: no positive alpha samples")
    return float(pos.mean())


def threshold_grid(grid_size: int, eps: float = LOGIT_EPS) -> np.ndarray:
    if grid_size < 2:
        raise ValueError(f"grid_size must be >= 2, got {grid_size}")
    return np.clip(np.linspace(0.0, 1.0, grid_size), eps, 1.0 - eps)


def greedy_threshold(
    state: CampaignState,
    params: EnvModelParams,
    grid_size: int = 1001,
    exponent: float = 2.0,
) -> float:
    """One-step argmax of predicted reward over a uniform threshold grid."""
    grid = threshold_grid(grid_size, params.eps)
    idx = greedy_grid_argmax(
        safe_logit(state.viewability, params.eps),
        safe_logit(state.prev_threshold, params.eps),
        state.goal,
        params.alpha,
        exponent,
        safe_logit(grid, params.eps),
    )
    return float(grid[idx])


class GreedyPolicy:
    """Callable policy wrapping :func:`greedy_threshold` for a fixed alpha."""

    def __init__(self, alpha: float, grid_size: int = 1001, exponent: float = 2.0, eps: float = LOGIT_EPS):
        self.params = EnvModelParams(alpha, eps)
        self.grid_size = grid_size
        self.exponent = exponent
        self._grid = threshold_grid(grid_size, eps)
        self._logit_grid = safe_logit(self._grid, eps)

    def __call__(self, state: CampaignState) -> float:
        eps = self.params.eps
        idx = greedy_grid_argmax(
            safe_logit(state.viewability, eps),
            safe_logit(state.prev_threshold, eps),
            state.goal,
            self.params.alpha,
            self.exponent,
            self._logit_grid,
        )
        return float(self._grid[idx])

    def __repr__(self):
        return f"GreedyPolicy(alpha={self.params.alpha:g})"
