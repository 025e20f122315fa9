"""Shared fixtures: the 1,200-row datasets and their trained models are built once per session."""

import dataclasses
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from peginsert import pipeline  # noqa: E402
from peginsert.config import ExperimentConfig  # noqa: E402
from peginsert.contact import ContactConfig  # noqa: E402

DATA_SEED = 2024
TRAIN_SEED = 7

# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def noise_free(cfg: ExperimentConfig) -> ExperimentConfig:
    return cfg.replace(contact=dataclasses.replace(cfg.contact, wrench_noise_sigma=(0.0,) * 6))


@pytest.fixture(scope="session")
def cfg():
    return ExperimentConfig(seed=DATA_SEED)


@pytest.fixture(scope="session")
def clean_cfg(cfg):
    return noise_free(cfg)


@pytest.fixture(scope="session")
def setup(cfg):
    return pipeline.make_setup(cfg)


@pytest.fixture(scope="session")
def clean_setup(clean_cfg, setup):
    return pipeline.make_setup(clean_cfg, params=setup.dmp)


class Timed:
    """Value plus the wall time it took to produce."""

    def __init__(self, fn):
        start = time.perf_counter()
        self.value = fn()
        self.seconds = time.perf_counter() - start


@pytest.fixture(scope="session")
def noisy_run(cfg, setup):
    data = Timed(lambda: pipeline.collect_dataset(setup, 1200, DATA_SEED))
    models = Timed(lambda: pipeline.train_models(data.value, cfg, TRAIN_SEED, dmp=setup.dmp))
    return data, models


@pytest.fixture(scope="session")
def clean_run(clean_cfg, clean_setup):
    data = Timed(lambda: pipeline.collect_dataset(clean_setup, 1200, DATA_SEED))
    models = Timed(lambda: pipeline.train_models(data.value, clean_cfg, TRAIN_SEED, dmp=clean_setup.dmp))
    return data, models


@pytest.fixture
def contact():
    return ContactConfig()
