import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from deid.config import Config
from deid.corpus import LabelSet
from deid.synth import GenConfig, generate_splits

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


TINY = dict(token_dim=6, char_dim=4, char_lstm_dim=3, lstm_dim=6, hidden_dim=6)


@pytest.fixture
def tiny_config():
    return Config(**TINY)


@pytest.fixture(scope="session")
def labels():
    return LabelSet.default()


@pytest.fixture(scope="session")
def small_corpus():
    """(train, dev, test) synthetic splits of 30/8/8 short notes."""
    cfg = GenConfig(min_tokens=20, max_tokens=40, seed=3)
    return tuple(generate_splits(cfg, [30, 8, 8]))


def random_instance(rng, n, k, scale=1.0):
    return rng.normal(0, scale, (n, k)), rng.normal(0, scale, (k, k))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
