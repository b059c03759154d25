from pathlib import Path

import numpy as np
import pytest

from helpers.conic_solver import SolverSettings
from helpers.quantum_baseline import CHSH_SCENARIO, PUBLISHED, sample_quantum_box
from helpers.scenario import Box, Scenario, uniform_box


@pytest.fixture
def chsh_scenario() -> Scenario:
    return CHSH_SCENARIO


@pytest.fixture
def settings() -> SolverSettings:
    return SolverSettings()


@pytest.fixture
def pr() -> Box:
    table = np.zeros((2, 2, 2, 2))
    for x in range(2):
        for y in range(2):
            for a in range(2):
                table[x, y, a, a ^ (x & y)] = 0.5
    return Box(CHSH_SCENARIO, table)


@pytest.fixture
def published_box() -> Box:
    return PUBLISHED.box()


@pytest.fixture
def uniform(chsh_scenario) -> Box:
    return uniform_box(chsh_scenario)


@pytest.fixture
def quantum_boxes(chsh_scenario):
    return [sample_quantum_box(chsh_scenario, seed) for seed in range(5)]


@pytest.fixture
def data_dir() -> Path:
    return Path(__file__).resolve().parent.parent / 'data_files'


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(2014)
