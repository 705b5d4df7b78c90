from pathlib import Path

import numpy as np
import pytest

from ovae.adequacy import Area, Line, NetworkModel
from ovae.data_processor import Normalizer
from ovae.ovae_model import OvaeModel

CONFIG_DIR = Path(__file__).resolve().parent.parent / 'configs'


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def single_area():
    return NetworkModel([Area('solo', 100)])


@pytest.fixture
def two_areas():
    def build(cap: float) -> NetworkModel:
        return NetworkModel([Area('a', 100), Area('b', 100)], [Line(0, 1, -cap, cap)])
    return build


@pytest.fixture
def zero_generation():
    return NetworkModel([Area('dark', 0, 0)])


@pytest.fixture
def oversized():
    return NetworkModel([Area('big', 1000, 0, availability=1.0)])


@pytest.fixture
def unit_normalizer():
    return Normalizer(np.zeros(3), np.ones(3))


@pytest.fixture
def tiny_model(unit_normalizer):
    return OvaeModel.build(unit_normalizer, latent_dim=2, hidden_sizes=(4,), seed=7)


@pytest.fixture(scope='session')
def config_dir():
    return CONFIG_DIR
