import json
import pathlib

import numpy as np
import pytest

from irtcal.model import ModelKind, ModelSpec, Link, ParameterSet, \
    ResponseMatrix

FIXTURES = pathlib.Path(__file__).parent


@pytest.fixture(scope="session")
def recovery_fixtures():
    with open(FIXTURES / "recovery_fixtures.json") as fh:
        return json.load(fh)


@pytest.fixture
def small_matrix():
    """6x5 mixed matrix without extreme scores."""
    return ResponseMatrix([
        [1, 1, 0, 1, 0],
        [1, 0, 1, 0, 0],
        [0, 1, 1, 1, 0],
        [0, 0, 1, 0, 1],
        [1, 1, 0, 0, 1],
        [0, 1, 0, 1, 1],
    ])


def random_paramset(rng, n, m, d_spread=0.25):
    return ParameterSet(
        rng.normal(0, 1, n),
        rng.normal(0, 1, m),
        np.clip(np.sqrt(2) * np.exp(d_spread * rng.normal(0, 1, n)), 0.2, 5),
        np.clip(np.sqrt(2) * np.exp(d_spread * rng.normal(0, 1, m)), 0.2, 5),
    )


ALL_SPECS = [ModelSpec(kind, link) for kind in ModelKind for link in Link]
