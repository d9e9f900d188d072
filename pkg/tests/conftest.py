"""Shared fixtures for the gaseq test suite."""

from pathlib import Path

import pytest

import gaseq
from gaseq import fixtures

DATA_DIR = Path(gaseq.__file__).parent / "data"


@pytest.fixture
def data_dir():
    """Directory of the JSON files shipped with the package."""
    return DATA_DIR


@pytest.fixture
def monopoly_model():
    return fixtures.monopoly()


@pytest.fixture
def duopoly_model():
    return fixtures.duopoly()


@pytest.fixture
def two_node_model():
    return fixtures.two_node()


@pytest.fixture
def two_node_solution(two_node_model):
    """Equilibrium of the two-node market with storage and LNG."""
    return gaseq.solve_model(two_node_model).require_solved()
