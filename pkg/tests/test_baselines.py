import numpy as np
import pytest

from qfan.baselines import ablation_csv, median_rows, rff_features, run_ablation_suite, suite_cells, weight1_feature_mask
from qfan.features import RFFFeatureMap, weight1_indices
from qfan.training import TrainConfig


def test_rff_trivia():
    assert np.array_equal(rff_features(np.ones(3), np.zeros((5, 3)), np.zeros(5)), np.ones(5))
    rng = np.random.default_rng(0)
    W, b, s = rng.normal(size=(7, 4)), rng.uniform(0, 2 * np.pi, 7), rng.normal(size=(10, 4))
    f = rff_features(s, W, b)
    assert np.all(np.abs(f) <= 1)
    oracle = [[np.cos(sum(W[i, k] * s[n, k] for k in range(4)) + b[i]) for i in range(7)] for n in range(10)]
    assert np.allclose(f, oracle, atol=1e-13)
    with pytest.raises(ValueError):
        rff_features(np.ones(3), np.zeros((5, 4)), np.zeros(5))


def test_rff_map_is_frozen_by_seed():
    a, b = RFFFeatureMap.random(12, 8, seed=3), RFFFeatureMap.random(12, 8, seed=3)
    assert np.array_equal(a.W, b.W) and np.all((a.b >= 0) & (a.b < 2 * np.pi))


def test_weight1_mask():
    f = np.arange(12.0)
    out = weight1_feature_mask(f, 3)
    assert out.tolist() == [0, 1, 2, 6, 7, 8]
    embedded = np.zeros(12)
    embedded[weight1_indices(3)] = out
    assert np.array_equal(weight1_feature_mask(embedded, 3), out)
    with pytest.raises(ValueError):
        weight1_feature_mask(np.ones(10), 3)


def test_suite_cells_share_budget():
    base = TrainConfig()
    for suite in ("weight2", "blocksize", "rff"):
        for cell in suite_cells(suite, base):
            cfg = cell.config(base, 3)
            assert (cfg.steps, cfg.batch_size, cfg.shots, cfg.seed) == (base.steps, base.batch_size, base.shots, 3)
    assert [c.label for c in suite_cells("blocksize", base)] == ["b=3", "b=4", "b=6", "b=12"]
    with pytest.raises(ValueError):
        suite_cells("nope", base)


def test_small_suite_runs(showers):
    base = TrainConfig(steps=2, batch_size=16, shots=32, kmeans_restarts=1, gate_epochs=5, eval_size=100)
    rows = run_ablation_suite(showers.Y[:300], showers.Y[300:400], base, suites=("weight2",), seeds=(0, 1))
    med = median_rows(rows)
    assert set(med) == {("weight2", "weight-1 only"), ("weight2", "weight-1 + weight-2")}
    assert med[("weight2", "weight-1 only")]["p_f"] == 6
    text = ablation_csv(rows)
    assert text.splitlines()[0].startswith("suite,cell,seed") and len(text.splitlines()) == 7
