import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from qfan.evaluation import (boundary_error_profile, corr_error, energy_metrics, evaluate, fidelity_estimate,
                             iqr_scale, noise_accumulation_check, pearson_corr_matrix, per_pixel_w1,
                             scaling_table, shot_noise_bound, shot_requirement, wasserstein1_1d,
                             write_plot_tables)


def lp_w1(u, v):
    """Transport LP between two uniform empirical measures."""
    n, m = len(u), len(v)
    cost = np.abs(np.subtract.outer(u, v)).ravel()
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1
    for j in range(m):
        A_eq[n + j, j::m] = 1
    b_eq = np.r_[np.full(n, 1 / n), np.full(m, 1 / m)]
    return linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs").fun


def test_w1_trivia():
    assert wasserstein1_1d([1.0, 2.0], [2.0, 1.0]) == 0
    assert wasserstein1_1d([0.0], [1.0]) == 1


def test_w1_matches_transport_lp():
    rng = np.random.default_rng(0)
    u, v = rng.gamma(2, size=1000), rng.normal(1, 1, size=1000)
    su, sv = rng.choice(u, 50, replace=False), rng.choice(v, 50, replace=False)
    assert abs(wasserstein1_1d(su, sv) - lp_w1(su, sv)) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 1000))
def test_w1_unequal_sizes_match_lp(n, m, seed):
    rng = np.random.default_rng(seed)
    u, v = rng.random(n), rng.random(m) * 2
    assert abs(wasserstein1_1d(u, v) - lp_w1(u, v)) < 1e-7


def test_independent_columns_are_uncorrelated():
    C, const = pearson_corr_matrix(np.random.default_rng(1).random((100_000, 5)))
    assert not const
    assert np.max(np.abs(C - np.eye(5))) < 0.02


def test_duplicate_and_constant_columns():
    x = np.random.default_rng(2).random(50)
    C, const = pearson_corr_matrix(np.c_[x, x, np.ones(50)])
    assert C[0, 1] == pytest.approx(1.0)
    assert const == [2] and C[2, 2] == 1 and C[0, 2] == 0
    assert corr_error(C, C) == 0


def test_energy_metrics():
    Y = np.random.default_rng(3).random((200, 4))
    assert energy_metrics(Y, Y)["w1"] == 0
    pt = np.ones((10, 4))
    assert energy_metrics(pt, pt + 0.25)["w1"] == pytest.approx(4 * 0.25)


def test_boundary_profile():
    C = np.eye(6)
    assert boundary_error_profile(C, C, 3, 2) == [0.0, 0.0]
    D = C.copy()
    D[1, 2] = D[2, 1] = 0.4
    assert boundary_error_profile(C, D, 2, 3) == [0.0]
    assert boundary_error_profile(C, D, 3, 2) == [pytest.approx(0.4), 0.0]


def test_evaluate_identical_is_zero(showers):
    rep = evaluate(showers.Y[:300], showers.Y[:300], block_size=6)
    assert rep.w1_mean == rep.w1_max == rep.corr_error == rep.energy_w1 == rep.mmd2 == 0
    assert rep.boundary_profile == [0.0]
    assert evaluate(showers.Y[:100], showers.Y[:100]).boundary_profile == []


def test_iqr_scale():
    Y = np.c_[np.arange(101.0), 2 * np.arange(101.0)]
    assert iqr_scale(Y) == pytest.approx((50 + 100) / 2)


def test_shot_requirement():
    assert shot_requirement(12, 1, 12, 0.1, 1) == 18  # 12^2 * 12 / 100 = 17.28
    assert shot_requirement(24, 1, 12, 0.1, 1) == 70  # ceil(4 * 17.28)
    assert shot_requirement(12, 1, 12, 10, 1) == 172_800
    reqs = [shot_requirement(12, 1.3, 12, t, 0.7) for t in (0.5, 1, 2, 8, 64)]
    assert reqs == sorted(reqs) and reqs[-1] > 1e6


@pytest.mark.parametrize("nq,F", [(3, 0.94), (5, 0.90), (8, 0.85), (10, 0.82)])
def test_fidelity(nq, F):
    assert round(fidelity_estimate(nq), 2) == F


def test_fidelity_perfect_gates():
    assert fidelity_estimate(7, 0.0, 0.0) == 1.0


def test_scaling_rows():
    rows = scaling_table([368, 40500, 12], [5, 10, 3])
    assert [(r["p_f"], r["b_max"], r["B_min"]) for r in rows] == [(30, 20, 19), (110, 73, 553), (12, 8, 2)]


def test_bound_plug_in():
    assert shot_noise_bound(12, 1.0, 12, 512) == pytest.approx(12 * np.sqrt(12 / 512))
    assert np.sqrt(12 / 512) == pytest.approx(0.1531, abs=1e-4)


def test_noise_check_holds_and_is_zero_in_exact_mode(small_bundle):
    rows = noise_accumulation_check(small_bundle, shots_list=(64, 1024), repetitions=20)
    assert all(r["holds"] for r in rows)
    assert rows[0]["empirical_max_mean_abs_ds"] > rows[1]["empirical_max_mean_abs_ds"]
    from qfan.generation import generate_one
    a, b = [], []
    generate_one(small_bundle, None, np.random.default_rng(0), trace=a)
    generate_one(small_bundle, None, np.random.default_rng(0), trace=b)
    assert np.array_equal(a[-1], b[-1])


def test_plot_tables(tmp_path, showers):
    paths = write_plot_tables(showers.Y[:200], showers.Y[200:400], tmp_path)
    assert {p.name for p in paths} == {"marginals.csv", "corr_truth.csv", "corr_gen.csv", "corr_diff.csv",
                                       "energy_sum.csv"}
    assert np.loadtxt(tmp_path / "corr_diff.csv", delimiter=",").shape == (12, 12)


def test_per_pixel_shape_check():
    with pytest.raises(ValueError):
        per_pixel_w1(np.ones((3, 2)), np.ones((3, 3)))
