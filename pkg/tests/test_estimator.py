import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from qfan import PrefixSketcher, QFANGenerator
from qfan._validation import DimensionError

FAST = dict(steps=4, batch_size=16, shots=64, seed=2)


@pytest.fixture(scope="module")
def fitted(showers):
    return QFANGenerator(**FAST).fit(showers.Y[:400])


def test_params_and_clone():
    est = QFANGenerator(n_qubits=4, block_size=5)
    params = est.get_params()
    assert params["n_qubits"] == 4 and params["block_size"] == 5
    assert clone(est).get_params() == params
    assert est.to_config().n_qubits == 4


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        QFANGenerator().sample(2)


def test_fit_sample_transform_predict(fitted, showers):
    X = showers.Y[:30]
    assert fitted.sample(5, seed=1).shape == (5, 12)
    F = fitted.transform(X)
    assert F.shape == (30, 2 * 12) and np.all(np.abs(F) <= 1)
    P = fitted.predict(X)
    assert P.shape == X.shape
    assert np.abs(P - X).mean() < np.abs(X - X.mean(axis=0)).mean() * 1.5
    assert fitted.total_circuits_ == 4 * 2 * 2 * 16
    assert fitted.score(showers.Y[400:500]) <= 0
    with pytest.raises(DimensionError):
        fitted.transform(np.ones((2, 5)))
    with pytest.raises(ValueError):
        fitted.fit(-np.ones((10, 12)))


def test_from_bundle(fitted):
    again = QFANGenerator.from_bundle(fitted.bundle_)
    assert np.array_equal(again.sample(3, seed=0), fitted.sample(3, seed=0))


def test_prefix_sketcher(showers):
    sk = PrefixSketcher(block_size=6, sketch_width=8).fit(showers.Y[:10])
    Z = sk.transform(showers.Y[:10])
    assert Z.shape == (10, 16)
    assert np.array_equal(Z[:, :8], np.zeros((10, 8)))
    assert np.array_equal(sk.fit_transform(showers.Y[:10]), Z)
