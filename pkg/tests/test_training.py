import json

import numpy as np
import pytest

from qfan._validation import ConfigError, InvariantViolation
from qfan.quantum import ShotCounter
from qfan.sketch import MixingLayer, SketchPlan, mix, sketch_apply
from qfan.training import (TrainConfig, TrainingProblem, block_bounds, build_cache, make_feature_map,
                           make_sketch, mmd2, objective_bootstrap, spsa_gains, spsa_step, step_circuit_count,
                           step_shot_count, total_circuit_count, train, training_objective)


def _problem(Y, **kw):
    cfg = TrainConfig(**{"batch_size": 24, "steps": 5, "shots": 64, **kw})
    plan, mixer, proj = make_sketch(cfg, Y.shape[1])
    cache = build_cache(Y, plan, mixer, cfg.block_size)
    return TrainingProblem(cfg, Y, cache, block_bounds(Y.shape[1], cfg.block_size), make_feature_map(cfg, proj))


def test_block_bounds():
    assert block_bounds(12, 6) == [(0, 6), (6, 12)]
    assert block_bounds(25, 5)[-1] == (20, 25)
    assert block_bounds(12, 5) == [(0, 5), (5, 10), (10, 12)]


def test_cache_matches_prefix_recomputation(showers):
    Y = showers.Y[:40]
    plan, mixer = SketchPlan(12, 16, 4), MixingLayer.near_identity(16, 4)
    cache = build_cache(Y, plan, mixer, 4)
    assert cache.shape == (3, 40, 16)
    assert np.array_equal(cache[0], np.zeros((40, 16)))
    for beta in range(3):
        prefix = Y.copy()
        prefix[:, 4 * beta:] = 0
        assert np.allclose(cache[beta], mix(mixer, sketch_apply(plan, prefix)), atol=1e-14)
    assert build_cache(Y, plan, mixer, 12).shape[0] == 1


def test_mmd_trivia():
    X = np.random.default_rng(0).random((20, 3))
    assert mmd2(X, X, 0.7) == 0.0
    x, y = np.array([[0.0, 0.0]]), np.array([[1.0, 1.0]])
    assert mmd2(x, y, 1.0) == pytest.approx(2 * (1 - np.exp(-1.0)))
    with pytest.raises(ConfigError):
        mmd2(x, y, 0.0)


def test_mmd_matches_double_loop():
    rng = np.random.default_rng(1)
    X, Y, h = rng.random((15, 2)), rng.random((11, 2)), 0.4
    k = lambda a, b: np.exp(-np.sum((a - b) ** 2) / (2 * h * h))  # noqa: E731
    kxx = sum(k(a, b) for a in X for b in X) / 225
    kyy = sum(k(a, b) for a in Y for b in Y) / 121
    kxy = sum(k(a, b) for a in X for b in Y) / 165
    assert abs(mmd2(X, Y, h) - (kxx + kyy - 2 * kxy)) < 1e-12


def test_gains_follow_schedule():
    cfg = TrainConfig(steps=120)
    a, c = spsa_gains(0, cfg)
    assert a == pytest.approx(0.15 / 13 ** 0.602)
    assert c == pytest.approx(0.1)


def test_circuit_and_shot_counts():
    assert step_circuit_count(128) == 512 and step_circuit_count(24) == 96
    assert total_circuit_count(120, 128) == 61_440 and total_circuit_count(20, 24) == 1_920
    assert step_shot_count(128, 512) == 262_144


def test_step_counts_do_not_depend_on_image_size():
    from qfan.data import synth_showers
    seen = set()
    for d in (12, 25, 48):
        Y = synth_showers(d=d, n=80, seed=0).Y
        p = _problem(Y, block_size=(d + 1) // 2)
        *_, rec = spsa_step(np.zeros(12), 0, p, np.random.default_rng(0))
        seen.add((rec.circuits, rec.shots))
    assert seen == {(96, 96 * 64)}


def test_zero_perturbation_leaves_theta(showers):
    p = _problem(showers.Y[:100], shots=None, c0=1e-12)
    th = np.full(12, 0.05)
    new, lp, lm, _ = spsa_step(th, 0, p, np.random.default_rng(1))
    assert lp == pytest.approx(lm, abs=1e-12)
    assert np.max(np.abs(new - th)) < 1e-9


def test_step_is_deterministic(showers):
    p = _problem(showers.Y[:100])
    a = spsa_step(np.zeros(12), 0, p, np.random.default_rng(5))
    b = spsa_step(np.zeros(12), 0, p, np.random.default_rng(5))
    assert np.array_equal(a[0], b[0]) and a[3].theta_hash == b[3].theta_hash


def test_miscounted_step_is_flagged(showers, monkeypatch):
    p = _problem(showers.Y[:100])
    monkeypatch.setattr(ShotCounter, "add", lambda self, n, g, s: setattr(self, "circuits", self.circuits + 1))
    with pytest.raises(InvariantViolation):
        spsa_step(np.zeros(12), 0, p, np.random.default_rng(0))


def test_config_text_round_trip_and_errors():
    cfg = TrainConfig(steps=7, shots=None, features="weight1")
    assert TrainConfig.from_text(cfg.to_text()) == cfg
    assert TrainConfig.from_text("schema = qfan-config/1\nsteps = 3  # short\nfeatures = rff\n").features == "rff"
    for bad in ("stepz = 3", "steps = 3\nsteps = 4", "schema = other/2", "steps 3", "shots = 0"):
        with pytest.raises(ConfigError):
            TrainConfig.from_text(bad)


def test_train_bookkeeping(small_run):
    cfg = small_run.config
    assert small_run.total_circuits == total_circuit_count(cfg.steps, cfg.batch_size)
    assert len(small_run.history) == cfg.steps
    assert all(r.circuits == step_circuit_count(cfg.batch_size) for r in small_run.history)
    json.loads(small_run.history[0].to_json())
    value, half = objective_bootstrap(small_run.problem, small_run.theta, small_run.eval_rows,
                                      small_run.eval_seed, n_boot=200)
    assert value == pytest.approx(small_run.final_objective, rel=1e-12) and half > 0


def test_training_is_reproducible(showers):
    cfg = TrainConfig(steps=3, batch_size=16, shots=32, kmeans_restarts=1, gate_epochs=5, eval_size=100)
    a, b = train(cfg, showers.Y[:300]), train(cfg, showers.Y[:300])
    assert np.array_equal(a.theta, b.theta)
    assert [r.theta_hash for r in a.history] == [r.theta_hash for r in b.history]


@pytest.mark.slow
def test_exact_mode_training_usually_lowers_objective(showers):
    wins = 0
    for seed in range(10):
        cfg = TrainConfig(steps=30, batch_size=64, shots=None, seed=seed, kmeans_restarts=1, gate_epochs=5,
                          eval_size=500)
        res = train(cfg, showers.Y[:1000])
        wins += res.final_objective < res.initial_objective
    assert wins >= 9, wins


def test_objective_is_mean_of_block_losses(small_run):
    p = small_run.problem
    v = training_objective(p, small_run.theta, small_run.eval_rows, small_run.eval_seed)
    assert v == pytest.approx(small_run.final_objective)
