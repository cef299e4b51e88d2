import numpy as np
import pytest
from scipy.stats import skew

from qfan._validation import ConfigError, DatasetFormatError
from qfan.data import (ShowerRecipe, load_csv, load_dataset, longitudinal_profile, save_csv, save_dataset,
                       split, synth_showers)


def test_no_fluctuation_gives_profile_shaped_rows():
    r = ShowerRecipe(fluctuation=0.0)
    Y = synth_showers(r, d=12, n=20, seed=0).Y
    prof = longitudinal_profile(12, r)
    ratio = Y / prof
    assert np.allclose(ratio, ratio[:, :1])


def test_default_recipe_shape_statistics():
    Y = synth_showers(d=12, n=10_000, seed=1).Y
    assert np.all(skew(Y, axis=0) > 0)
    C = np.corrcoef(Y.T)
    assert C[:6, 6:].min() < -0.3
    assert min(C[i, i + 1] for i in range(5)) > 0.5 and min(C[i, i + 1] for i in range(6, 11)) > 0.5


def test_recipe_validation():
    with pytest.raises(ConfigError):
        ShowerRecipe.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        ShowerRecipe(profile_peak=1.5)


def test_binary_round_trip(tmp_path, showers):
    p = save_dataset(showers, tmp_path / "x.qfd")
    back = load_dataset(p)
    assert np.array_equal(back.Y, showers.Y) and back.metadata["seed"] == 3


def test_truncated_and_corrupted_files(tmp_path, showers):
    p = save_dataset(showers, tmp_path / "x.qfd")
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(DatasetFormatError):
        load_dataset(p)
    p.write_bytes(raw[:-1] + bytes([raw[-1] ^ 1]))
    with pytest.raises(DatasetFormatError):
        load_dataset(p)
    p.write_bytes(b"garbage")
    with pytest.raises(DatasetFormatError):
        load_dataset(p)


def test_csv_matches_binary(tmp_path, showers):
    save_csv(showers, tmp_path / "x.csv")
    assert np.array_equal(load_dataset(tmp_path / "x.csv").Y, showers.Y)
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n3\n")
    with pytest.raises(DatasetFormatError):
        load_csv(tmp_path / "bad.csv")


def test_split():
    ds = synth_showers(d=12, n=7000, seed=0)
    tr, te = split(ds, 6000, 1000, seed=0)
    assert (tr.n, te.n) == (6000, 1000)
    rows = {tuple(r) for r in tr.Y}
    assert not any(tuple(r) in rows for r in te.Y)
    assert split(ds, 10, 0)[1].n == 0
    with pytest.raises(ConfigError):
        split(ds, 7000, 1)


def test_generation_is_seeded():
    assert np.array_equal(synth_showers(n=50, seed=5).Y, synth_showers(n=50, seed=5).Y)
