"""Offline replay auction simulator.

Sampled log rows are replayed as live auctions: rows whose predicted view
probability falls below the threshold get no bid, the rest are bid on with
the pricing model and won when ``bid >= recorded cost`` (second price, so the
recorded cost is what gets spent).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import CampaignState, RewardParams, UnitInterval, reward, safe_logit, sigmoid
from .csvio import ParseError, fmt_float, parse_bool01, parse_float, parse_int, read_rows, write_rows
from .dataset import LldTable
from .envmodel import ControlObservation
from .kernels import interval_stats
from .predictors import LinearModel, bid_prices, predict_proba

TRANSITION_HEADER = ("v", "goal", "phi_prev", "action", "reward", "v_next", "goal_next", "phi_prev_next", "terminal")
EPISODE_HEADER = ("interval", "threshold", "bids", "wins", "viewable_wins", "spend_micros", "viewability", "reward", "collapse")

Policy = Callable[[CampaignState], float]


class PolicyContractError(ValueError):
    """A policy produced a threshold outside [0, 1]."""


@dataclass(frozen=True)
class SimConfig:
    n_per_day: int = 12_000
    intervals_per_day: int = 24
    goal: float = 0.7
    initial_threshold: float = 0.1
    initial_viewability: float = 0.55
    reward_exponent: float = 2.0
    seed: int = 7
    # when set, each random-rollout episode draws its goal uniformly from this range
    rollout_goal_range: Optional[tuple] = None
    # std of logit-scale noise on the bid-time view prediction (0 = exact model output)
    bid_time_noise: float = 0.0

    def __post_init__(self):
        if self.intervals_per_day <= 0:
            raise ValueError("intervals_per_day must be positive")
        if self.n_per_day < self.intervals_per_day:
            raise ValueError("n_per_day must be >= intervals_per_day")
        for name in ("goal", "initial_threshold", "initial_viewability"):
            UnitInterval(getattr(self, name))
        if not self.reward_exponent > 0:
            raise ValueError("reward_exponent must be > 0")
        if not self.bid_time_noise >= 0:
            raise ValueError("bid_time_noise must be >= 0")
        if self.rollout_goal_range is not None:
            lo, hi = self.rollout_goal_range
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"bad rollout_goal_range {self.rollout_goal_range}")
            object.__setattr__(self, "rollout_goal_range", (float(lo), float(hi)))


@dataclass(frozen=True)
class IntervalReport:
    index: int
    threshold: float
    bids: int
    wins: int
    viewable_wins: int
    spend_micros: int
    measured_viewability: float
    reward: float
    delivery_collapse: bool
    goal: float = float("nan")


@dataclass(frozen=True)
class EpisodeReport:
    intervals: list
    day_viewability: float
    day_reward: float

    @property
    def rewards(self) -> np.ndarray:
        return np.array([iv.reward for iv in self.intervals])

    @property
    def viewabilities(self) -> np.ndarray:
        return np.array([iv.measured_viewability for iv in self.intervals])

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([iv.threshold for iv in self.intervals])


@dataclass(frozen=True)
class TransitionSample:
    state: CampaignState
    action: float
    reward: float
    next_state: CampaignState
    terminal: bool

    def __post_init__(self):
        object.__setattr__(self, "action", UnitInterval(self.action))
        if not 0.0 <= self.reward <= 1.0:
            raise ValueError(f"reward {self.reward} outside [0, 1]")


class Market:
    """An impression pool with model outputs precomputed for every row.

    ``bid_time_noise`` perturbs the view prediction used for the threshold
    test by a Gaussian in logit space, fixed per row and seeded by
    ``noise_seed``.  It models a bid-time estimate that is less sharp than
    the offline model and lowers the realized threshold sensitivity.
    """

    def __init__(self, table: LldTable, view_model: LinearModel, bid_model: LinearModel,
                 bid_time_noise: float = 0.0, noise_seed=0):
        if len(table) == 0:
            raise ValueError("market needs a nonempty impression table")
        if not bid_time_noise >= 0:
            raise ValueError("bid_time_noise must be >= 0")
        self.table = table
        self.bid_time_noise = float(bid_time_noise)
        pred = predict_proba(view_model, table)
        if bid_time_noise > 0:
            noise = np.random.default_rng(noise_seed).normal(0.0, bid_time_noise, len(table))
            pred = sigmoid(safe_logit(pred) + noise)
        self.pred = np.ascontiguousarray(pred)
        self.bid = np.ascontiguousarray(bid_prices(bid_model, table))
        self.cost = np.ascontiguousarray(table.cost_micros)
        self.viewed = np.ascontiguousarray(table.viewed)

    def __len__(self):
        return len(self.table)

    def sample_indices(self, n: int, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.choice(len(self), size=n, replace=n > len(self))

    def interval(self, threshold: float, idx: np.ndarray, index: int = 0,
                 reward_params: RewardParams | None = None, fallback_viewability: float = 0.0) -> IntervalReport:
        bids, wins, viewable, spend = interval_stats(
            self.pred[idx], self.bid[idx], self.cost[idx], self.viewed[idx], float(threshold)
        )
        return _make_report(index, threshold, bids, wins, viewable, spend, reward_params, fallback_viewability)


def _make_report(index, threshold, bids, wins, viewable, spend, reward_params, fallback_viewability):
    collapse = wins == 0
    v = fallback_viewability if collapse else viewable / wins
    if reward_params is None:
        r = float("nan")
        goal = float("nan")
    else:
        r = 0.0 if collapse else float(reward(v, reward_params))
        goal = reward_params.goal
    return IntervalReport(index, float(threshold), bids, wins, viewable, spend, float(v), r, collapse, goal)


def run_interval(threshold, impressions, view_model: LinearModel, bid_model: LinearModel,
                 reward_params: RewardParams | None = None, index: int = 0,
                 fallback_viewability: float = 0.0) -> IntervalReport:
    """Replay ``impressions`` against one threshold.

    ``fallback_viewability`` is reported as the measured viewability when
    nothing is won; the interval is then flagged as a delivery collapse.
    """
    table = impressions if isinstance(impressions, LldTable) else LldTable.from_records(impressions)
    if len(table) == 0:
        raise ValueError("run_interval needs at least one impression")
    threshold = UnitInterval(threshold)
    pred = np.ascontiguousarray(predict_proba(view_model, table))
    bid = np.ascontiguousarray(bid_prices(bid_model, table))
    bids, wins, viewable, spend = interval_stats(
        pred, bid, np.ascontiguousarray(table.cost_micros), np.ascontiguousarray(table.viewed), float(threshold)
    )
    return _make_report(index, threshold, bids, wins, viewable, spend, reward_params, fallback_viewability)


def interval_slices(n: int, k: int) -> list:
    """Split ``range(n)`` into ``k`` contiguous chunks; the remainder goes to the earliest."""
    base, extra = divmod(n, k)
    bounds = np.cumsum([0] + [base + (1 if i < extra else 0) for i in range(k)])
    return [slice(int(bounds[i]), int(bounds[i + 1])) for i in range(k)]


def _goal_at(i: int, config: SimConfig, goal_schedule) -> float:
    if goal_schedule is None:
        return config.goal
    if callable(goal_schedule):
        return float(goal_schedule(i))
    return float(goal_schedule[i])


def run_episode(policy: Policy, market: Market, config: SimConfig, seed=None,
                goal_schedule: Sequence[float] | Callable[[int], float] | None = None) -> EpisodeReport:
    """Simulate one day: the policy picks a threshold at every interval boundary.

    ``goal_schedule`` (sequence or callable of the interval index) overrides
    the constant goal; the day-level reward then compares day viewability to
    the wins-weighted goal.
    """
    if hasattr(policy, "reset"):
        policy.reset()
    seed = config.seed if seed is None else seed
    idx = market.sample_indices(config.n_per_day, seed)
    chunks = interval_slices(config.n_per_day, config.intervals_per_day)
    goal = _goal_at(0, config, goal_schedule)
    state = CampaignState(config.initial_viewability, goal, config.initial_threshold)
    reports = []
    for i, chunk in enumerate(chunks):
        goal = _goal_at(i, config, goal_schedule)
        if goal != state.goal:
            state = CampaignState(state.viewability, goal, state.prev_threshold)
        phi = policy(state)
        if not (0.0 <= phi <= 1.0) or phi != phi:
            raise PolicyContractError(f"policy {policy!r} returned threshold {phi!r} outside [0, 1]")
        rep = market.interval(phi, idx[chunk], i, RewardParams(goal, config.reward_exponent), state.viewability)
        reports.append(rep)
        state = CampaignState(rep.measured_viewability, goal, phi)
    return _summarise(reports, config)


def _summarise(reports, config: SimConfig) -> EpisodeReport:
    wins = sum(r.wins for r in reports)
    if wins == 0:
        return EpisodeReport(reports, float("nan"), 0.0)
    v_day = sum(r.viewable_wins for r in reports) / wins
    goal = sum(r.goal * r.wins for r in reports) / wins
    day_reward = float(reward(v_day, RewardParams(min(max(goal, 0.0), 1.0), config.reward_exponent)))
    return EpisodeReport(reports, v_day, day_reward)


class UniformRandomPolicy:
    """Thresholds drawn uniformly from [0, 1]; reseeded by ``reset``."""

    def __init__(self, seed=0):
        self.seed = seed
        self.reset()

    def reset(self):
        self._rng = np.random.default_rng(self.seed)

    def __call__(self, state: CampaignState) -> float:
        return float(self._rng.random())


class ConstantPolicy:
    def __init__(self, threshold: float):
        self.threshold = float(UnitInterval(threshold))

    def __call__(self, state: CampaignState) -> float:
        return self.threshold

    def __repr__(self):
        return f"ConstantPolicy({self.threshold:g})"


def episode_seed(base_seed: int, episode: int) -> int:
    return int(np.random.SeedSequence([int(base_seed) % 2**64, episode]).generate_state(1, np.uint64)[0])


def collect_random_rollouts(market: Market, config: SimConfig, episodes: int, seed=None,
                            reports: list | None = None) -> list:
    """Random-threshold episodes turned into transitions, one per interval.

    Each episode re-samples its day from the pool with its own seed.  If
    ``reports`` is a list, the episode reports are appended to it.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    base = config.seed if seed is None else seed
    out = []
    for e in range(episodes):
        ep_seed = episode_seed(base, e)
        rng = np.random.default_rng(ep_seed)
        goal = config.goal
        if config.rollout_goal_range is not None:
            goal = float(rng.uniform(*config.rollout_goal_range))
        actions = rng.random(config.intervals_per_day)
        policy = _ReplayActions(actions)
        ep_config = SimConfig(**{**config.__dict__, "goal": goal})
        rep = run_episode(policy, market, ep_config, seed=ep_seed)
        if reports is not None:
            reports.append(rep)
        out.extend(episode_transitions(rep, ep_config))
    return out


class _ReplayActions:
    def __init__(self, actions):
        self.actions = actions
        self.i = 0

    def reset(self):
        self.i = 0

    def __call__(self, state):
        a = float(self.actions[self.i])
        self.i += 1
        return a


def episode_transitions(report: EpisodeReport, config: SimConfig) -> list:
    ivs = report.intervals
    state = CampaignState(config.initial_viewability, ivs[0].goal, config.initial_threshold)
    out = []
    for i, iv in enumerate(ivs):
        next_goal = ivs[i + 1].goal if i + 1 < len(ivs) else iv.goal
        nxt = CampaignState(iv.measured_viewability, next_goal, iv.threshold)
        out.append(TransitionSample(state, iv.threshold, iv.reward, nxt, i == len(ivs) - 1))
        state = nxt
    return out


def control_observations(report: EpisodeReport) -> list:
    """Consecutive (v, phi) pairs where both intervals actually bought inventory."""
    out = []
    ivs = report.intervals
    for a, b in zip(ivs[:-1], ivs[1:]):
        if a.delivery_collapse or b.delivery_collapse:
            continue
        out.append(ControlObservation(a.measured_viewability, a.threshold, b.measured_viewability, b.threshold))
    return out


def transitions_to_arrays(samples: Sequence[TransitionSample]):
    """(states, actions, rewards, next_states, terminals) as float arrays."""
    s = np.array([t.state.as_array() for t in samples])
    a = np.array([t.action for t in samples], dtype=float)
    r = np.array([t.reward for t in samples], dtype=float)
    s2 = np.array([t.next_state.as_array() for t in samples])
    d = np.array([t.terminal for t in samples], dtype=float)
    return s, a, r, s2, d


def write_transitions(samples, path) -> None:
    rows = []
    for t in samples:
        rows.append([
            fmt_float(t.state.viewability), fmt_float(t.state.goal), fmt_float(t.state.prev_threshold),
            fmt_float(t.action), fmt_float(t.reward),
            fmt_float(t.next_state.viewability), fmt_float(t.next_state.goal), fmt_float(t.next_state.prev_threshold),
            "1" if t.terminal else "0",
        ])
    write_rows(path, TRANSITION_HEADER, rows)


def read_transitions(path) -> list:
    rows = read_rows(path, TRANSITION_HEADER, [parse_float] * 8 + [parse_bool01])
    out = []
    for lineno, row in enumerate(rows, start=2):
        v, g, p, a, r, v2, g2, p2, term = row
        try:
            out.append(TransitionSample(CampaignState(v, g, p), a, r, CampaignState(v2, g2, p2), term))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    return out


def write_episode_report(report: EpisodeReport, path) -> None:
    rows = [
        [iv.index, fmt_float(iv.threshold), iv.bids, iv.wins, iv.viewable_wins, iv.spend_micros,
         fmt_float(iv.measured_viewability), fmt_float(iv.reward), int(iv.delivery_collapse)]
        for iv in report.intervals
    ]
    write_rows(path, EPISODE_HEADER, rows)


def read_episode_report(path) -> list:
    return read_rows(path, EPISODE_HEADER, [parse_int, parse_float] + [parse_int] * 4 + [parse_float] * 2 + [parse_bool01])
