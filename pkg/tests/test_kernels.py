import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from viewsim import kernels
from viewsim.core import safe_logit
from viewsim.envmodel import threshold_grid


def stats_inputs(seed, n):
    rng = np.random.default_rng(seed)
    return (rng.random(n), rng.integers(0, 3000, n), rng.integers(0, 3000, n), rng.random(n) < 0.5)


class TestIntervalStats:
    @given(st.integers(0, 10_000), st.integers(1, 500), st.floats(0.0, 1.0))
    def test_backends_agree(self, seed, n, threshold):
        args = (*stats_inputs(seed, n), threshold)
        expected = kernels.interval_stats_numpy(*args)
        assert kernels._interval_stats_loop(*args) == expected
        assert kernels.interval_stats(*args) == expected

    def test_hand_example(self):
        pred = np.array([0.1, 0.5, 0.9, 0.7])
        bid = np.array([100, 100, 100, 50])
        cost = np.array([10, 200, 90, 50])
        viewed = np.array([True, True, False, True])
        # bids on rows 1..3; wins rows 2, 3; viewable win row 3
        assert kernels.interval_stats(pred, bid, cost, viewed, 0.5) == (3, 2, 1, 140)

    def test_spend_is_exact_integer(self):
        pred, bid, cost, viewed = stats_inputs(3, 10_000)
        cost = cost + 10**12
        bid = bid + 10**12
        _, _, _, spend = kernels.interval_stats(pred, bid, cost, viewed, 0.0)
        won = bid >= cost
        assert spend == int(sum(int(c) for c in cost[won]))


class TestGreedyKernel:
    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 0.99), st.floats(0.05, 3.0))
    def test_backends_agree(self, lv, lp, goal, alpha):
        grid = safe_logit(threshold_grid(201))
        expected = kernels.greedy_grid_argmax_numpy(lv, lp, goal, alpha, 2.0, grid)
        assert kernels._greedy_grid_loop(lv, lp, goal, alpha, 2.0, grid) == expected
        assert kernels.greedy_grid_argmax(lv, lp, goal, alpha, 2.0, grid) == expected

    def test_ties_pick_lowest_index(self):
        grid = np.zeros(5)
        assert kernels.greedy_grid_argmax(0.0, 0.0, 0.5, 1.0, 2.0, grid) == 0
        assert kernels._greedy_grid_loop(0.0, 0.0, 0.5, 1.0, 2.0, grid) == 0


class TestBackendSwitch:
    @pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("yes", "numpy")])
    def test_env_flag_selects_numpy(self, flag, expected):
        out = subprocess.run(
            [sys.executable, "-c", "from viewsim import kernels; print(kernels.BACKEND)"],
            env={"VIEWSIM_DISABLE_NUMBA": flag, "PATH": ""}, capture_output=True, text=True, check=True,
        )
        assert out.stdout.strip() == expected

    def test_default_backend_reported(self):
        assert kernels.BACKEND in ("numba", "numpy")
