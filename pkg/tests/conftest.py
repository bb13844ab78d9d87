import pathlib

import numpy as np
import pytest
from hypothesis import settings

from attrner.model.gradcheck import tiny_config
from attrner.synthetic import overfit_fixture

settings.register_profile("default", deadline=None)
settings.load_profile("default")

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(scope="session")
def fixture_corpus():
    return overfit_fixture()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny():
    return tiny_config()
