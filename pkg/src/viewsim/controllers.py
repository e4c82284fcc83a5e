"""PID feedback baseline and the quick policy sanity battery.

The battery runs a policy against a deliberately naive linear toy
environment (``v = intercept + slope * threshold``) before any expensive
simulation: can it reach a goal, does it sit still at the goal, and do its
actions point the right way over a grid of common states.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import CampaignState, UnitInterval
from .csvio import write_rows

SWEEP_HEADER = ("v", "goal", "phi_prev", "action", "direction_ok")


@dataclass(frozen=True)
class PidConfig:
    kp: float = 0.5
    ki: float = 0.05
    kd: float = 0.0
    step_clamp: float = 0.05
    integral_clamp: float = 1.0
    threshold_bounds: tuple = (0.0, 0.99)

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ValueError("PID gains must be >= 0")
        if not (self.step_clamp > 0 and self.integral_clamp > 0):
            raise ValueError("step_clamp and integral_clamp must be > 0")
        lo, hi = self.threshold_bounds
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError(f"threshold_bounds must satisfy 0 <= lo < hi <= 1, got {self.threshold_bounds}")
        object.__setattr__(self, "threshold_bounds", (float(lo), float(hi)))


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: Optional[float] = None
    current_threshold: float = 0.0


def _clip(x, lo, hi):
    return min(max(x, lo), hi)


def pid_step(state: PidState, config: PidConfig, v_t: float, goal: float):
    """One control update; returns ``(new_state, threshold)``."""
    error = float(goal) - float(v_t)
    integral = _clip(state.integral + error, -config.integral_clamp, config.integral_clamp)
    deriv = 0.0 if state.prev_error is None else error - state.prev_error
    delta = config.kp * error + config.ki * integral + config.kd * deriv
    delta = _clip(delta, -config.step_clamp, config.step_clamp)
    threshold = _clip(state.current_threshold + delta, *config.threshold_bounds)
    return PidState(integral, error, threshold), threshold


class PidPolicy:
    """Stateful PID controller usable wherever a policy callable is expected.

    The threshold being adjusted is read from the observed state, so the
    controller only carries its integral and previous error between calls.
    """

    def __init__(self, config: PidConfig = PidConfig()):
        self.config = config
        self.reset()

    def reset(self):
        self._integral = 0.0
        self._prev_error = None

    def __call__(self, state: CampaignState) -> float:
        pid_state = PidState(self._integral, self._prev_error, state.prev_threshold)
        new, threshold = pid_step(pid_state, self.config, state.viewability, state.goal)
        self._integral, self._prev_error = new.integral, new.prev_error
        return threshold

    def __repr__(self):
        return f"PidPolicy({self.config})"


@dataclass(frozen=True)
class ToyEnvConfig:
    intercept: float = 0.3
    slope: float = 0.6

    def __post_init__(self):
        if self.slope == 0:
            raise ValueError("toy slope must be nonzero")

    def inverse(self, v: float) -> float:
        """Threshold that the toy maps to ``v`` (clamped to [0, 1])."""
        return _clip((v - self.intercept) / self.slope, 0.0, 1.0)


def toy_step(threshold: float, config: ToyEnvConfig = ToyEnvConfig()) -> float:
    return _clip(config.intercept + config.slope * float(threshold), 0.0, 1.0)


def _reset(policy):
    if hasattr(policy, "reset"):
        policy.reset()


def check_goal_reaching(policy: Callable, goal: float, max_steps: int = 20, band: float = 0.05,
                        toy: ToyEnvConfig = ToyEnvConfig()):
    """Run from (v=intercept, goal, phi=0); return ``(reached, steps)``.

    ``steps`` is the 1-based step at which ``|v - goal| <= band`` first held,
    or ``max_steps`` when the goal was never reached.
    """
    if band <= 0 or max_steps < 1:
        raise ValueError("band must be > 0 and max_steps >= 1")
    _reset(policy)
    state = CampaignState(toy_step(0.0, toy), goal, 0.0)
    for step in range(1, max_steps + 1):
        phi = float(UnitInterval(policy(state)))
        v = toy_step(phi, toy)
        state = CampaignState(v, goal, phi)
        if abs(v - goal) <= band:
            return True, step
    return False, max_steps


def check_stability_at_goal(policy: Callable, goal: float, steps: int = 10, delta: float = 0.05,
                            toy: ToyEnvConfig = ToyEnvConfig()) -> bool:
    """Start exactly at goal; True iff no step moves the threshold by more than ``delta``."""
    if delta <= 0:
        raise ValueError("delta must be > 0")
    _reset(policy)
    phi = toy.inverse(goal)
    state = CampaignState(goal, goal, phi)
    worst = 0.0
    for _ in range(steps):
        new_phi = float(UnitInterval(policy(state)))
        worst = max(worst, abs(new_phi - phi))
        phi = new_phi
        state = CampaignState(toy_step(phi, toy), goal, phi)
    return worst <= delta


def default_sweep_grid():
    vs = [i / 10 for i in range(2, 10)]
    goals = [0.6, 0.7, 0.8]
    phis = [i / 10 for i in range(2, 9)]
    return [CampaignState(v, g, p) for v in vs for g in goals for p in phis]


def direction_ok(state: CampaignState, action: float, delta: float = 0.05) -> bool:
    if state.viewability < state.goal and action < state.prev_threshold - delta:
        return False
    if state.viewability > state.goal and action > state.prev_threshold + delta:
        return False
    return True


@dataclass
class SweepReport:
    rows: list  # (v, goal, phi_prev, action, direction_ok)
    pass_fraction: float

    def write_csv(self, path) -> None:
        write_rows(path, SWEEP_HEADER, [
            [repr(v), repr(g), repr(p), format(a, ".17g"), int(ok)] for v, g, p, a, ok in self.rows
        ])


def rationality_sweep(policy: Callable, state_grid=None, delta: float = 0.05, strict: bool = False) -> SweepReport:
    """Tabulate the policy's action over a state grid and flag wrong-way moves.

    With ``strict=True`` a pass fraction below 0.95 raises ``AssertionError``.
    """
    grid = default_sweep_grid() if state_grid is None else list(state_grid)
    if not grid:
        raise ValueError("state grid is empty")
    _reset(policy)
    rows = []
    for s in grid:
        a = float(UnitInterval(policy(s)))
        rows.append((float(s.viewability), float(s.goal), float(s.prev_threshold), a, direction_ok(s, a, delta)))
    frac = float(np.mean([r[4] for r in rows]))
    if strict and frac < 0.95:
        raise AssertionError(f"rationality pass fraction {frac:.3f} < 0.95")
    return SweepReport(rows, frac)
