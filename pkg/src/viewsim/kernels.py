"""Hot inner loops of the simulator and the greedy planner.

Each kernel has a loop form (compiled by numba when available) and a
vectorised numpy form.  The module-level names ``interval_stats`` and
``greedy_grid_argmax`` point at whichever implementation is active; both
forms stay importable so tests and the benchmark can compare them.
"""

import math

import numpy as np

from ._accel import HAS_NUMBA, njit


def _interval_stats_loop(pred, bid, cost, viewed, threshold):
    n_bids = 0
    n_wins = 0
    n_viewable = 0
    spend = 0
    for i in range(pred.shape[0]):
        if pred[i] < threshold:
            continue
        n_bids += 1
        if bid[i] >= cost[i]:
            n_wins += 1
            spend += cost[i]
            if viewed[i]:
                n_viewable += 1
    return n_bids, n_wins, n_viewable, spend


def interval_stats_numpy(pred, bid, cost, viewed, threshold):
    """Count bids, wins, viewable wins and integer spend for one threshold."""
    bidding = pred >= threshold
    won = bidding & (bid >= cost)
    return (
        int(np.count_nonzero(bidding)),
        int(np.count_nonzero(won)),
        int(np.count_nonzero(won & viewed)),
        int(cost[won].sum(dtype=np.int64)),
    )


def _greedy_grid_loop(logit_v, logit_phi, goal, alpha, exponent, logit_grid):
    best = -1.0
    best_i = 0
    for i in range(logit_grid.shape[0]):
        z = logit_v + alpha * (logit_grid[i] - logit_phi)
        if z >= 0:
            p = 1.0 / (1.0 + math.exp(-z))
        else:
            e = math.exp(z)
            p = e / (1.0 + e)
        r = (1.0 - abs(p - goal)) ** exponent
        # strict '>' keeps the lowest index on ties
        if r > best:
            best = r
            best_i = i
    return best_i


def greedy_grid_argmax_numpy(logit_v, logit_phi, goal, alpha, exponent, logit_grid):
    """Index of the grid threshold whose predicted reward is largest (lowest on ties)."""
    z = logit_v + alpha * (logit_grid - logit_phi)
    e = np.exp(-np.abs(z))
    p = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    r = (1.0 - np.abs(p - goal)) ** exponent
    return int(np.argmax(r))


if HAS_NUMBA:
    _interval_stats_jit = njit(_interval_stats_loop)
    _greedy_grid_jit = njit(_greedy_grid_loop)

    def interval_stats(pred, bid, cost, viewed, threshold):
        return tuple(int(x) for x in _interval_stats_jit(pred, bid, cost, viewed, float(threshold)))

    def greedy_grid_argmax(logit_v, logit_phi, goal, alpha, exponent, logit_grid):
        return int(_greedy_grid_jit(float(logit_v), float(logit_phi), float(goal),
                                    float(alpha), float(exponent), logit_grid))
else:
    interval_stats = interval_stats_numpy
    greedy_grid_argmax = greedy_grid_argmax_numpy

BACKEND = "numba" if HAS_NUMBA else "numpy"
