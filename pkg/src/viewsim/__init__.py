"""Offline laboratory for viewability-threshold control in RTB campaigns."""

from .core import CampaignState, RewardParams, reward, safe_logit, sigmoid
from .envmodel import GreedyPolicy, alpha_mean_positive, alpha_median, greedy_threshold
from .sim import Market, SimConfig, collect_random_rollouts, run_episode

__all__ = [
    "CampaignState", "RewardParams", "reward", "safe_logit", "sigmoid",
    "GreedyPolicy", "alpha_mean_positive", "alpha_median", "greedy_threshold",
    "Market", "SimConfig", "collect_random_rollouts", "run_episode",
]
__version__ = "0.1.0"
