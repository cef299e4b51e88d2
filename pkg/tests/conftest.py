import numpy as np
import pytest

from qfan.data import split, synth_showers
from qfan.generation import ModelBundle
from qfan.training import TrainConfig, train


@pytest.fixture(scope="session")
def showers():
    return synth_showers(d=12, n=1500, seed=3)


@pytest.fixture(scope="session")
def small_run(showers):
    tr, _ = split(showers, 1200, 300, seed=0)
    cfg = TrainConfig(steps=8, batch_size=32, shots=128, seed=1, kmeans_restarts=2, gate_epochs=60)
    return train(cfg, tr.Y)


@pytest.fixture(scope="session")
def small_bundle(small_run):
    return ModelBundle.from_training(small_run)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
