import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from viewsim.dataset import GeneratorConfig, generate_lld, split_train_eval
from viewsim.predictors import train_bid_model, train_logistic
from viewsim.sim import Market

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def default_table():
    return generate_lld(GeneratorConfig())


@pytest.fixture(scope="session")
def default_split(default_table):
    return split_train_eval(default_table)


@pytest.fixture(scope="session")
def default_models(default_split):
    train, _ = default_split
    return train_logistic(train), train_bid_model(train)


@pytest.fixture(scope="session")
def eval_market(default_split, default_models):
    return Market(default_split[1], *default_models)


@pytest.fixture(scope="session")
def train_market(default_split, default_models):
    return Market(default_split[0], *default_models)


@pytest.fixture(scope="session")
def small_table():
    return generate_lld(GeneratorConfig(n_records=5000, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
