import numpy as np
import pytest

from qfan._validation import InsufficientDataError
from qfan.residual import ClusterBank, GateModel, fit_gate, fit_residual_bank, sample_residual, wcss


def test_one_point_per_cluster():
    X = np.arange(16.0).reshape(8, 2)
    bank = fit_residual_bank(X, 8, seed=0)
    assert bank.objective == 0.0
    assert sorted(len(m) for m in bank.members) == [1] * 8


def test_too_few_points():
    with pytest.raises(InsufficientDataError):
        fit_residual_bank(np.zeros((3, 2)), 4)


def test_recovers_separated_blobs():
    rng = np.random.default_rng(0)
    sigma, n = 0.3, 400
    mus = np.array([[-5.0, 0.0], [5.0, 1.0]])
    X = np.vstack([mus[0] + sigma * rng.normal(size=(n // 2, 2)), mus[1] + sigma * rng.normal(size=(n // 2, 2))])
    C = fit_residual_bank(X, 2, seed=1).centroids
    C = C[np.argsort(C[:, 0])]
    assert np.all(np.abs(C - mus) < 3 * sigma / np.sqrt(n / 2))


def test_beats_random_assignment():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(300, 3))
    bank = fit_residual_bank(X, 8, seed=0)
    for s in range(20):
        lab = np.random.default_rng(s).integers(0, 8, 300)
        C = np.array([X[lab == k].mean(axis=0) for k in range(8)])
        assert bank.objective <= wcss(X, lab, C)
    assert all(b >= a - 1e-9 for a, b in zip(bank.objective_history[1:], bank.objective_history))


def test_single_cluster_gate_is_certain():
    gate = fit_gate(np.random.default_rng(0).normal(size=(50, 4)), np.zeros(50, int), 1, epochs=10)
    assert np.allclose(gate.proba(np.ones(4)), 1.0)


def test_separable_gate_accuracy():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(400, 5))
    labels = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    gate = fit_gate(X, labels, 2, epochs=200, step=0.5)
    assert np.mean(gate.proba(X).argmax(axis=1) == labels) >= 0.95


def test_gate_without_signal_learns_prior():
    labels = np.array([0, 1] * 50)
    gate = fit_gate(np.ones((100, 3)), labels, 2, epochs=300)
    assert np.allclose(gate.proba(np.ones(3)), [0.5, 0.5], atol=1e-6)


def test_gate_rejects_bad_labels():
    with pytest.raises(IndexError):
        fit_gate(np.ones((4, 2)), np.array([0, 1, 2, 3]), 2)


def _bank(members):
    C = np.array([m.mean(axis=0) if len(m) else np.zeros(members[0].shape[1]) for m in members])
    return ClusterBank(C, members, np.zeros(0, int))


def test_single_stored_residual_always_returned(rng):
    r = np.array([[0.3, -0.1]])
    gate = GateModel(np.zeros((4, 1)), np.zeros(1))
    for _ in range(5):
        assert np.array_equal(sample_residual(_bank([r]), gate, np.zeros(4), rng), r[0])


def test_one_hot_gate_picks_cluster_zero(rng):
    bank = _bank([np.zeros((3, 2)), np.ones((3, 2))])
    gate = GateModel(np.zeros((4, 2)), np.array([0.0, -1e4]))
    assert all(np.array_equal(sample_residual(bank, gate, np.zeros(4), rng), [0, 0]) for _ in range(50))


def test_empty_cluster_falls_back_to_centroid(rng, caplog):
    bank = ClusterBank(np.array([[9.0, 9.0], [0.0, 0.0]]), [np.zeros((0, 2)), np.zeros((2, 2))], np.zeros(0, int))
    gate = GateModel(np.zeros((1, 2)), np.array([0.0, -1e4]))
    assert np.array_equal(sample_residual(bank, gate, np.zeros(1), rng), [9.0, 9.0])


def test_cluster_frequencies_follow_gate():
    M, n = 4, 100_000
    bank = _bank([np.full((1, 1), float(k)) for k in range(M)])
    gate = GateModel(np.array([[0.3, -0.2, 0.5, 0.0]]), np.array([0.1, 0.4, -0.3, 0.0]))
    s = np.array([0.7])
    rng = np.random.default_rng(9)
    draws = np.array([sample_residual(bank, gate, s, rng)[0] for _ in range(n)]).astype(int)
    p = gate.proba(s)
    freq = np.bincount(draws, minlength=M)
    assert np.all(np.abs(freq - n * p) < 3.5 * np.sqrt(n * p * (1 - p)))
