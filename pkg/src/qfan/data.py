"""Synthetic calorimeter-style showers and dataset file I/O.

The generator is a stand-in for a real downsampled shower dataset. A skewed
total energy is split between the two halves of the image with a random share
(which anti-correlates the halves), laid out along a smooth longitudinal
profile, and jittered by log-normal noise that is correlated within each half.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._validation import ConfigError, DatasetFormatError

MAGIC = "QFANDS"
FORMAT_VERSION = 1
RECIPE_VERSION = 1


@dataclass(frozen=True)
class ShowerRecipe:
    energy_mean: float = 2.45
    energy_spread: float = 0.30
    energy_skew: float = 0.6
    profile_peak: float = 0.5       # fractional depth of the profile maximum
    profile_width: float = 0.22     # gaussian width of the profile, in fractional depth
    fluctuation: float = 0.15       # per-pixel log-normal scale
    correlation_length: float = 3.0  # pixels, for the within-half noise kernel
    coupling: float = 5.0           # share jitter, in units of `fluctuation`
    normalization: float = 1.0      # divide intensities by this reference
    version: int = RECIPE_VERSION

    def __post_init__(self):
        for name in ("energy_mean", "energy_spread", "energy_skew", "profile_width",
                     "correlation_length", "normalization"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"recipe field {name} must be > 0, got {getattr(self, name)}")
        if self.fluctuation < 0 or self.coupling < 0:
            raise ConfigError("recipe fluctuation and coupling must be >= 0")
        if not 0 < self.profile_peak < 1:
            raise ConfigError("recipe profile_peak must lie in (0, 1)")

    @classmethod
    def from_dict(cls, rec: dict) -> "ShowerRecipe":
        unknown = set(rec) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown recipe keys: {sorted(unknown)}")
        return cls(**rec)


@dataclass
class Dataset:
    Y: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def d(self) -> int:
        return self.Y.shape[1]


def longitudinal_profile(d: int, recipe: ShowerRecipe) -> np.ndarray:
    x = (np.arange(d) + 0.5) / d
    p = np.exp(-0.5 * ((x - recipe.profile_peak) / recipe.profile_width) ** 2)
    return p / p.sum()


def _half_noise_chol(size: int, length: float) -> np.ndarray:
    i = np.arange(size)
    K = np.exp(-0.5 * ((i[:, None] - i[None, :]) / length) ** 2)
    return np.linalg.cholesky(K + 1e-9 * np.eye(size))


def synth_showers(recipe: ShowerRecipe | None = None, d: int = 12, n: int = 7000, seed: int = 0) -> Dataset:
    recipe = recipe or ShowerRecipe()
    if d < 2 or n < 0:
        raise ConfigError(f"need d >= 2 and n >= 0, got d={d}, n={n}")
    rng = np.random.default_rng(seed)
    half = math.ceil(d / 2)

    # shifted gamma: skew 2/sqrt(k) fixes the shape, spread fixes the scale
    k = (2.0 / recipe.energy_skew) ** 2
    scale = recipe.energy_spread / math.sqrt(k)
    energy = recipe.energy_mean - k * scale + rng.gamma(k, scale, size=n)
    energy = np.clip(energy, 0.0, None)

    profile = longitudinal_profile(d, recipe)
    base_share = profile[:half].sum()
    logit = math.log(base_share / (1 - base_share))
    share = 1.0 / (1.0 + np.exp(-(logit + recipe.coupling * recipe.fluctuation * rng.standard_normal(n))))

    noise = np.empty((n, d))
    for lo, hi in ((0, half), (half, d)):
        L = _half_noise_chol(hi - lo, recipe.correlation_length)
        noise[:, lo:hi] = rng.standard_normal((n, hi - lo)) @ L.T
    jitter = np.exp(recipe.fluctuation * noise - 0.5 * recipe.fluctuation ** 2)

    first = profile[:half] / profile[:half].sum()
    second = profile[half:] / profile[half:].sum()
    Y = np.empty((n, d))
    Y[:, :half] = (energy * share)[:, None] * first[None, :] * jitter[:, :half]
    Y[:, half:] = (energy * (1 - share))[:, None] * second[None, :] * jitter[:, half:]
    Y = np.clip(Y / recipe.normalization, 0.0, None)
    meta = {"d": d, "N": n, "seed": seed, "generator": "synth_showers", "recipe": asdict(recipe)}
    return Dataset(Y, meta)


def split(ds: Dataset, n_train: int, n_test: int, seed: int = 0) -> tuple[Dataset, Dataset]:
    if n_train < 0 or n_test < 0 or n_train + n_test > ds.n:
        raise ConfigError(f"cannot split {ds.n} rows into {n_train} + {n_test}")
    perm = np.random.default_rng(seed).permutation(ds.n)
    tr, te = perm[:n_train], perm[n_train:n_train + n_test]
    meta = dict(ds.metadata)
    return (Dataset(ds.Y[tr], {**meta, "N": n_train, "rows": "train", "split_seed": seed}),
            Dataset(ds.Y[te], {**meta, "N": n_test, "rows": "test", "split_seed": seed}))


def split_indices(n: int, n_train: int, n_test: int, seed: int = 0):
    perm = np.random.default_rng(seed).permutation(n)
    return perm[:n_train], perm[n_train:n_train + n_test]


# ---------------------------------------------------------------- file I/O

def _header(Y: np.ndarray, payload: bytes) -> bytes:
    digest = hashlib.sha256(payload).hexdigest()
    rec = {"magic": MAGIC, "version": FORMAT_VERSION, "N": int(Y.shape[0]), "d": int(Y.shape[1]),
           "dtype": "<f8", "sha256": digest}
    return (json.dumps(rec, sort_keys=True) + "\n").encode()


def save_dataset(ds: Dataset, path) -> Path:
    """Write ``{header json}\\n`` followed by row-major little-endian float64."""
    path = Path(path)
    Y = np.ascontiguousarray(ds.Y, dtype="<f8")
    payload = Y.tobytes()
    path.write_bytes(_header(Y, payload) + payload)
    meta_path = path.with_suffix(path.suffix + ".json")
    meta_path.write_text(json.dumps(ds.metadata, sort_keys=True, indent=2) + "\n")
    return path


def load_dataset(path) -> Dataset:
    """Read a binary dataset, or any plain N x d CSV (detected by extension)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return load_csv(path)
    raw = path.read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise DatasetFormatError(f"{path}: missing header line")
    try:
        rec = json.loads(raw[:nl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"{path}: unreadable header ({exc})") from None
    if rec.get("magic") != MAGIC or rec.get("version") != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: not a {MAGIC} v{FORMAT_VERSION} file")
    n, d = int(rec["N"]), int(rec["d"])
    payload = raw[nl + 1:]
    if len(payload) != 8 * n * d:
        raise DatasetFormatError(f"{path}: expected {8 * n * d} data bytes, found {len(payload)}")
    if hashlib.sha256(payload).hexdigest() != rec["sha256"]:
        raise DatasetFormatError(f"{path}: checksum mismatch")
    Y = np.frombuffer(payload, dtype="<f8").reshape(n, d).astype(np.float64)
    meta_path = path.with_suffix(path.suffix + ".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {"d": d, "N": n}
    return Dataset(Y, meta)


def save_csv(ds: Dataset, path) -> Path:
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"pixel_{j}" for j in range(ds.d)])
    for row in ds.Y:
        w.writerow(["%.17g" % v for v in row])
    path.write_text(buf.getvalue())
    return path


def load_csv(path) -> Dataset:
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if i == 0:
                    continue  # header
                raise DatasetFormatError(f"{path}: non-numeric value on line {i + 1}") from None
    if not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    if len({len(r) for r in rows}) != 1:
        raise DatasetFormatError(f"{path}: ragged rows")
    Y = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(Y)):
        raise DatasetFormatError(f"{path}: non-finite values")
    return Dataset(Y, {"d": Y.shape[1], "N": Y.shape[0], "source": str(path)})
