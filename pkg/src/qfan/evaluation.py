"""Sample-quality metrics, analytic resource calculators and the shot-noise accumulation check."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._validation import DimensionError, QFANError
from .decoder import B_min, DEFAULT_RHO_MIN, b_max, decoder_gain
from .quantum import feature_count
from .sketch import default_sketch_width


# ------------------------------------------------------------ distances

def wasserstein1_1d(u, v) -> float:
    """Exact W1 between two empirical distributions on the line."""
    u = np.sort(np.asarray(u, dtype=float).ravel())
    v = np.sort(np.asarray(v, dtype=float).ravel())
    if u.size == 0 or v.size == 0:
        raise QFANError("W1 needs two non-empty sample sets")
    if u.size == v.size:
        return float(np.mean(np.abs(u - v)))
    grid = np.concatenate([u, v])
    grid.sort(kind="mergesort")
    widths = np.diff(grid)
    cu = np.searchsorted(u, grid[:-1], side="right") / u.size
    cv = np.searchsorted(v, grid[:-1], side="right") / v.size
    return float(np.sum(np.abs(cu - cv) * widths))


def per_pixel_w1(Y_truth, Y_gen) -> np.ndarray:
    Y_truth, Y_gen = np.asarray(Y_truth, float), np.asarray(Y_gen, float)
    if Y_truth.shape[1] != Y_gen.shape[1]:
        raise DimensionError("truth and generated sets differ in pixel count")
    return np.array([wasserstein1_1d(Y_truth[:, j], Y_gen[:, j]) for j in range(Y_truth.shape[1])])


def pearson_corr_matrix(Y) -> tuple[np.ndarray, list[int]]:
    """Correlation matrix plus the list of constant columns.

    Constant columns get 0 off-diagonal and 1 on the diagonal instead of NaN.
    """
    Y = np.asarray(Y, dtype=float)
    Z = Y - Y.mean(axis=0)
    sd = np.sqrt((Z ** 2).sum(axis=0))
    constant = [int(j) for j in np.flatnonzero(sd <= 1e-12 * max(1.0, np.abs(Y).max(initial=0.0)))]
    sd_safe = np.where(sd > 0, sd, 1.0)
    Zn = Z / sd_safe
    C = Zn.T @ Zn
    C[constant, :] = 0.0
    C[:, constant] = 0.0
    np.fill_diagonal(C, 1.0)
    return np.clip(C, -1.0, 1.0), constant


def corr_error(C1, C2) -> float:
    C1, C2 = np.asarray(C1), np.asarray(C2)
    return float(np.linalg.norm(C1 - C2) / C1.shape[0])


def energy_metrics(Y_truth, Y_gen, bins: int = 50) -> dict:
    """W1 between total-energy distributions and the histogram peak of each."""
    e_t = np.asarray(Y_truth, float).sum(axis=1)
    e_g = np.asarray(Y_gen, float).sum(axis=1)
    lo, hi = min(e_t.min(), e_g.min()), max(e_t.max(), e_g.max())
    edges = np.linspace(lo, hi if hi > lo else lo + 1.0, bins + 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    peak_t = float(centers[np.argmax(np.histogram(e_t, edges)[0])])
    peak_g = float(centers[np.argmax(np.histogram(e_g, edges)[0])])
    return {"w1": wasserstein1_1d(e_t, e_g), "peak_truth": peak_t, "peak_gen": peak_g}


def boundary_error_profile(C_truth, C_gen, n_blocks: int, block_size: int, band: int = 1) -> list[float]:
    """Max |dC| over entries coupling the last ``band`` pixels of each block to the first of the next."""
    dC = np.abs(np.asarray(C_gen) - np.asarray(C_truth))
    d = dC.shape[0]
    out = []
    for beta in range(1, n_blocks):
        edge = beta * block_size
        left = slice(max(edge - band, 0), edge)
        right = slice(edge, min(edge + band, d))
        out.append(float(dC[left, right].max()))
    return out


def iqr_scale(Y) -> float:
    q75, q25 = np.percentile(np.asarray(Y, float), [75, 25], axis=0)
    return float(np.mean(q75 - q25))


def mmd2_images(Y_truth, Y_gen, max_rows: int = 2000, seed: int = 0) -> float:
    from .training import median_bandwidth, mmd2

    rng = np.random.default_rng(seed)
    A = np.asarray(Y_truth, float)
    B = np.asarray(Y_gen, float)
    if A.shape[0] > max_rows:
        A = A[np.sort(rng.choice(A.shape[0], max_rows, replace=False))]
    if B.shape[0] > max_rows:
        B = B[np.sort(rng.choice(B.shape[0], max_rows, replace=False))]
    return mmd2(A, B, median_bandwidth(A))


# ------------------------------------------------------------ report

@dataclass
class MetricsReport:
    w1_per_pixel: list[float]
    w1_mean: float
    w1_median: float
    w1_max: float
    corr_truth: list[list[float]]
    corr_gen: list[list[float]]
    corr_error: float
    energy_w1: float
    energy_peak_truth: float
    energy_peak_gen: float
    mmd2: float
    boundary_profile: list[float]
    iqr_scale: float
    constant_columns: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n")
        return path


def evaluate(Y_truth, Y_gen, block_size: int | None = None, config: dict | None = None) -> MetricsReport:
    Y_truth = np.asarray(Y_truth, float)
    Y_gen = np.asarray(Y_gen, float)
    w1 = per_pixel_w1(Y_truth, Y_gen)
    Ct, const_t = pearson_corr_matrix(Y_truth)
    Cg, const_g = pearson_corr_matrix(Y_gen)
    en = energy_metrics(Y_truth, Y_gen)
    d = Y_truth.shape[1]
    profile = []
    if block_size:
        n_blocks = math.ceil(d / block_size)
        profile = boundary_error_profile(Ct, Cg, n_blocks, block_size)
    return MetricsReport(
        w1_per_pixel=[float(x) for x in w1], w1_mean=float(w1.mean()), w1_median=float(np.median(w1)),
        w1_max=float(w1.max()), corr_truth=Ct.tolist(), corr_gen=Cg.tolist(),
        corr_error=corr_error(Ct, Cg), energy_w1=en["w1"], energy_peak_truth=en["peak_truth"],
        energy_peak_gen=en["peak_gen"], mmd2=mmd2_images(Y_truth, Y_gen), boundary_profile=profile,
        iqr_scale=iqr_scale(Y_truth), constant_columns={"truth": const_t, "gen": const_g},
        config=config or {})


def write_plot_tables(Y_truth, Y_gen, out_dir, bins: int = 40) -> list[Path]:
    """CSV tables behind the marginal, correlation and energy figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    Y_truth, Y_gen = np.asarray(Y_truth, float), np.asarray(Y_gen, float)
    paths = []

    p = out / "marginals.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pixel", "bin_lo", "bin_hi", "truth_density", "gen_density"])
        for j in range(Y_truth.shape[1]):
            lo = min(Y_truth[:, j].min(), Y_gen[:, j].min())
            hi = max(Y_truth[:, j].max(), Y_gen[:, j].max())
            edges = np.linspace(lo, hi if hi > lo else lo + 1.0, bins + 1)
            ht, _ = np.histogram(Y_truth[:, j], edges, density=True)
            hg, _ = np.histogram(Y_gen[:, j], edges, density=True)
            for k in range(bins):
                w.writerow([j, "%.10g" % edges[k], "%.10g" % edges[k + 1], "%.10g" % ht[k], "%.10g" % hg[k]])
    paths.append(p)

    Ct, _ = pearson_corr_matrix(Y_truth)
    Cg, _ = pearson_corr_matrix(Y_gen)
    for name, M in (("corr_truth", Ct), ("corr_gen", Cg), ("corr_diff", Ct - Cg)):
        p = out / f"{name}.csv"
        np.savetxt(p, M, delimiter=",", fmt="%.10g")
        paths.append(p)

    e_t, e_g = Y_truth.sum(axis=1), Y_gen.sum(axis=1)
    lo, hi = min(e_t.min(), e_g.min()), max(e_t.max(), e_g.max())
    edges = np.linspace(lo, hi if hi > lo else lo + 1.0, bins + 1)
    ht, _ = np.histogram(e_t, edges, density=True)
    hg, _ = np.histogram(e_g, edges, density=True)
    p = out / "energy_sum.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "truth_density", "gen_density"])
        for k in range(bins):
            w.writerow(["%.10g" % edges[k], "%.10g" % edges[k + 1], "%.10g" % ht[k], "%.10g" % hg[k]])
    paths.append(p)
    return paths


# ------------------------------------------------------------ analytic calculators

def shot_noise_bound(d: int, gain: float, n_features: int, shots: float) -> float:
    """Worst-case expected sketch perturbation ``d * gain * sqrt(p_f / N_s)``."""
    return d * gain * math.sqrt(n_features / shots)


def shot_requirement(d: int, gain: float, n_features: int, tau_min: float, s_inf: float) -> int:
    """Smallest ``N_s`` with ``|s|_inf / (d gain sqrt(p_f / N_s)) >= tau_min``.

    Solving for ``N_s`` gives ``tau^2 d^2 gain^2 p_f / |s|_inf^2``; a stricter
    SNR target needs more shots.
    """
    raw = (tau_min * tau_min * d * d * gain * gain * n_features) / (s_inf * s_inf)
    # strip float fuzz before rounding up (17.28000000000001 must give 18, 18.0 must give 18)
    return int(math.ceil(round(raw, 9)))


def fidelity_estimate(n_qubits: int, eps_cz: float = 5e-3, eps_ro: float = 1e-2) -> float:
    return (1.0 - eps_cz) ** (2 * n_qubits) * (1.0 - eps_ro) ** n_qubits


def scaling_table(d_list, n_qubits_list, rho_min: float = DEFAULT_RHO_MIN, n_train: int = 6000,
                  sketch_width: int | list | None = None, bytes_per_value: int = 8) -> list[dict]:
    """One row per ``(d, n_q)`` pair (zipped when the lists have equal length, else the product)."""
    d_list, nq_list = list(d_list), list(n_qubits_list)
    pairs = list(zip(d_list, nq_list)) if len(d_list) == len(nq_list) else \
        [(d, n) for d in d_list for n in nq_list]
    rows = []
    for i, (d, nq) in enumerate(pairs):
        B = B_min(d, nq, rho_min)
        m = sketch_width[i] if isinstance(sketch_width, (list, tuple)) else (sketch_width or default_sketch_width(d))
        rows.append({"d": d, "n_qubits": nq, "p_f": feature_count(nq), "b_max": b_max(nq, rho_min),
                     "B_min": B, "fidelity": round(fidelity_estimate(nq), 4),
                     "sketch_cache_bytes": B * n_train * m * bytes_per_value})
    return rows


# ------------------------------------------------------------ shot-noise accumulation

def noise_accumulation_check(bundle, shots_list=(64, 256, 1024), repetitions: int = 200, seed: int = 0,
                             residuals_enabled: bool = True) -> list[dict]:
    """Compare sketch perturbations from finite-shot rollouts with the worst-case bound.

    Each repetition runs a finite-shot rollout and an exact rollout from the same
    seed, so the two share every residual draw and differ only by measurement noise.
    """
    from .generation import generate_one

    gain = max(decoder_gain(dec) for dec in bundle.decoders)
    p_f = bundle.feature_map.n_features
    children = np.random.SeedSequence(seed).spawn(repetitions)
    exact_traces = []
    for c in children:
        tr: list = []
        generate_one(bundle, None, np.random.default_rng(c), residuals_enabled, trace=tr)
        exact_traces.append(tr[-1])
    rows = []
    for ns in shots_list:
        deltas = []
        for c, s_exact in zip(children, exact_traces):
            tr = []
            generate_one(bundle, int(ns), np.random.default_rng(c), residuals_enabled, trace=tr)
            deltas.append(np.abs(tr[-1] - s_exact))
        mean_abs = np.mean(deltas, axis=0)
        bound = shot_noise_bound(bundle.d, gain, p_f, ns)
        rows.append({"shots": int(ns), "empirical_max_mean_abs_ds": float(mean_abs.max()),
                     "bound": bound, "ratio": float(mean_abs.max() / bound), "gain": gain,
                     "holds": bool(mean_abs.max() <= bound)})
    return rows
