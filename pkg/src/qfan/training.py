"""SPSA training of the shared circuit parameters under a blockwise MMD^2 loss.

Each step draws one block and a minibatch, looks up the teacher-forced mixed
sketches for that block, and evaluates the loss at ``theta +/- c_t * delta`` with
identical block, minibatch, kernel bandwidth and shot-noise seed. The decoder
inside the loss is a fresh ridge fit on the minibatch, so the loss is a
well-defined function of ``theta`` alone.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from ._validation import ConfigError, DimensionError, InvariantViolation, check_images
from .decoder import RidgeWeights, fit_ridge, predict
from .features import QuantumFeatureMap, RFFFeatureMap
from .quantum import N_GROUPS, CircuitSpec, ShotCounter
from .residual import ClusterBank, GateModel, fit_gate, fit_residual_bank
from .sketch import (AngleProjector, MixingLayer, SketchPlan, calibrate_projector, default_sketch_width, mix,
                     sketch_apply)

logger = logging.getLogger(__name__)

CONFIG_SCHEMA = "qfan-config/1"
_TIE_RTOL = 1e-12


@dataclass
class TrainConfig:
    n_qubits: int = 3
    n_layers: int = 2
    block_size: int = 6
    sketch_width: int | None = None  # None: chosen from d, see default_sketch_width
    steps: int = 120
    batch_size: int = 128
    shots: int | None = 512          # None: exact expectations
    a0: float = 0.15
    c0: float = 0.1
    stability: float | None = None   # None: 0.1 * steps
    alpha_exp: float = 0.602
    gamma_exp: float = 0.101
    seed: int = 0
    sketch_seed: int | None = None   # None: same as seed
    ridge_alpha: float = 1e-3
    bandwidth_mode: str = "median"   # "median" or a positive float given as text
    n_clusters: int = 8
    kmeans_restarts: int = 5
    kmeans_max_iter: int = 100
    gate_epochs: int = 500
    gate_step: float = 0.1
    features: str = "quantum"        # "quantum", "weight1" or "rff"
    rff_features: int = 12
    eval_size: int = 1000            # rows used for the initial/final objective
    theta_init_scale: float = 0.1
    angle_init: str = "random"       # "random" or "calibrated" (data-standardized projector)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (MMD needs pairs)")
        if self.shots is not None and self.shots < 1:
            raise ConfigError("shots must be >= 1 (or null for exact mode)")
        if self.block_size < 1 or (self.sketch_width is not None and self.sketch_width < 1):
            raise ConfigError("block_size and sketch_width must be >= 1")
        if self.ridge_alpha <= 0:
            raise ConfigError("ridge_alpha must be > 0")
        if self.features not in ("quantum", "weight1", "rff"):
            raise ConfigError(f"unknown feature stage {self.features!r}")
        if self.angle_init not in ("calibrated", "random"):
            raise ConfigError(f"unknown angle_init {self.angle_init!r}")
        if self.n_clusters < 1 or self.n_clusters & (self.n_clusters - 1):
            raise ConfigError("n_clusters must be a power of two")
        if self.bandwidth_mode != "median":
            try:
                if float(self.bandwidth_mode) <= 0:
                    raise ValueError
            except ValueError:
                raise ConfigError("bandwidth_mode must be 'median' or a positive number") from None
        CircuitSpec(self.n_qubits, self.n_layers)

    @property
    def spec(self) -> CircuitSpec:
        return CircuitSpec(self.n_qubits, self.n_layers)

    @property
    def resolved_sketch_seed(self) -> int:
        return self.seed if self.sketch_seed is None else self.sketch_seed

    def resolved_sketch_width(self, d: int) -> int:
        return default_sketch_width(d) if self.sketch_width is None else self.sketch_width

    @property
    def resolved_stability(self) -> float:
        return 0.1 * self.steps if self.stability is None else self.stability

    def to_dict(self) -> dict:
        return {"schema": CONFIG_SCHEMA, **dataclasses.asdict(self)}

    @classmethod
    def from_dict(cls, rec: dict) -> "TrainConfig":
        rec = dict(rec)
        schema = rec.pop("schema", CONFIG_SCHEMA)
        if schema != CONFIG_SCHEMA:
            raise ConfigError(f"unsupported config schema {schema!r}")
        unknown = set(rec) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**rec)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        """Flat ``key = value`` text, values as JSON literals."""
        return "".join(f"{k} = {json.dumps(v)}\n" for k, v in self.to_dict().items())

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        rec = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if not sep or not key:
                raise ConfigError(f"config line {n}: expected 'key = value'")
            if key in rec:
                raise ConfigError(f"config line {n}: duplicate key {key!r}")
            try:
                rec[key] = json.loads(raw)
            except json.JSONDecodeError:
                rec[key] = raw  # bare words such as quantum or median
        return cls.from_dict(rec)


# ------------------------------------------------------------ block layout

def block_bounds(d: int, block_size: int) -> list[tuple[int, int]]:
    """Contiguous ``[lo, hi)`` pixel ranges; the last block may be short."""
    if block_size < 1 or d < 1:
        raise DimensionError(f"invalid partition d={d}, b={block_size}")
    return [(lo, min(lo + block_size, d)) for lo in range(0, d, block_size)]


def build_cache(Y, plan: SketchPlan, mixer: MixingLayer, block_size: int) -> np.ndarray:
    """Teacher-forced mixed sketches, shape ``(B, N, m)``; row ``beta`` sees pixels ``[0, beta*b)``."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != plan.d:
        raise DimensionError(f"dataset must be N x {plan.d}, got {Y.shape}")
    bounds = block_bounds(plan.d, block_size)
    cache = np.empty((len(bounds), Y.shape[0], plan.m))
    prefix = np.zeros_like(Y)
    for beta, (lo, hi) in enumerate(bounds):
        cache[beta] = mix(mixer, sketch_apply(plan, prefix))
        prefix[:, lo:hi] = Y[:, lo:hi]
    return cache


# ------------------------------------------------------------ kernel loss

def median_bandwidth(Y) -> float:
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] < 2:
        return 1.0
    dist = pdist(Y)
    dist = dist[dist > 0]
    return float(np.median(dist)) if dist.size else 1.0


def mmd2(X, Y, bandwidth: float) -> float:
    """Biased (V-statistic) MMD^2 with kernel ``exp(-|x-y|^2 / (2 h^2))``."""
    if not bandwidth > 0:
        raise ConfigError(f"bandwidth must be > 0, got {bandwidth}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1] or X.shape[0] < 1 or Y.shape[0] < 1:
        raise DimensionError(f"incompatible sample sets {X.shape} and {Y.shape}")
    g = -0.5 / bandwidth ** 2
    kxx = np.exp(g * cdist(X, X, "sqeuclidean")).mean()
    kyy = np.exp(g * cdist(Y, Y, "sqeuclidean")).mean()
    kxy = np.exp(g * cdist(X, Y, "sqeuclidean")).mean()
    return float(max(kxx + kyy - 2.0 * kxy, 0.0))


def _bandwidth(config: TrainConfig, Y_block) -> float:
    if config.bandwidth_mode == "median":
        return median_bandwidth(Y_block)
    return float(config.bandwidth_mode)


# ------------------------------------------------------------ SPSA

def spsa_gains(t: int, config: TrainConfig) -> tuple[float, float]:
    a_t = config.a0 / (t + 1 + config.resolved_stability) ** config.alpha_exp
    c_t = config.c0 / (t + 1) ** config.gamma_exp
    return a_t, c_t


def step_circuit_count(batch_size: int, n_groups: int = N_GROUPS) -> int:
    return 2 * n_groups * batch_size


def total_circuit_count(steps: int, batch_size: int, n_groups: int = N_GROUPS) -> int:
    return steps * step_circuit_count(batch_size, n_groups)


def step_shot_count(batch_size: int, shots: int, n_groups: int = N_GROUPS) -> int:
    return step_circuit_count(batch_size, n_groups) * shots


@dataclass
class StepRecord:
    step: int
    block: int
    loss_plus: float
    loss_minus: float
    circuits: int
    shots: int
    theta_hash: str
    wall_time: float = 0.0

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def theta_hash(theta) -> str:
    return hashlib.sha256(np.ascontiguousarray(theta, dtype="<f8").tobytes()).hexdigest()[:16]


def block_loss(feature_map, theta, s_mixed, Y_block, alpha, bandwidth, shot_seed, counter=None) -> float:
    rng = np.random.default_rng(shot_seed)
    F = feature_map(s_mixed, theta, rng, counter)
    W = fit_ridge(F, Y_block, alpha)
    return mmd2(Y_block, predict(F, W), bandwidth)


@dataclass
class TrainingProblem:
    """Everything a step needs besides ``theta``: data, cache and feature stage."""

    config: TrainConfig
    Y: np.ndarray
    cache: np.ndarray
    bounds: list[tuple[int, int]]
    feature_map: object


def spsa_step(theta, t: int, problem: TrainingProblem, rng: np.random.Generator):
    """One SPSA update; returns ``(theta_new, loss_plus, loss_minus, record)``."""
    config = problem.config
    if not 0 <= t < config.steps:
        raise ConfigError(f"step {t} outside [0, {config.steps})")
    n = problem.Y.shape[0]
    beta = int(rng.integers(len(problem.bounds)))
    idx = rng.choice(n, size=min(config.batch_size, n), replace=False)
    delta = rng.choice(np.array([-1.0, 1.0]), size=theta.shape[0])
    shot_seed = int(rng.integers(2 ** 63))
    a_t, c_t = spsa_gains(t, config)

    lo, hi = problem.bounds[beta]
    Yb = problem.Y[idx, lo:hi]
    S = problem.cache[beta, idx]
    h = _bandwidth(config, Yb)
    counter = ShotCounter()
    t0 = time.perf_counter()
    loss_p = block_loss(problem.feature_map, theta + c_t * delta, S, Yb, config.ridge_alpha, h, shot_seed, counter)
    loss_m = block_loss(problem.feature_map, theta - c_t * delta, S, Yb, config.ridge_alpha, h, shot_seed, counter)
    diff = loss_p - loss_m
    if abs(diff) <= _TIE_RTOL * max(abs(loss_p), abs(loss_m)):
        diff = 0.0  # a rounding-level gap divided by a tiny c_t would be pure noise
    ghat = diff / (2.0 * c_t) * delta
    new_theta = theta - a_t * ghat

    if getattr(problem.feature_map, "uses_theta", True):
        expected = step_circuit_count(len(idx))
        if counter.circuits != expected:
            raise InvariantViolation(f"step {t} ran {counter.circuits} circuits, expected {expected}")
    rec = StepRecord(t, beta, loss_p, loss_m, counter.circuits, counter.shots, theta_hash(new_theta),
                     time.perf_counter() - t0)
    return new_theta, loss_p, loss_m, rec


# ------------------------------------------------------------ full training

def make_feature_map(config: TrainConfig, projector: AngleProjector | None = None):
    m = projector.A.shape[1] if projector is not None else config.resolved_sketch_width(1)
    if config.features == "rff":
        return RFFFeatureMap.random(config.rff_features, m, config.resolved_sketch_seed)
    spec = config.spec
    projector = projector or AngleProjector.random(spec.n_angles, m, config.resolved_sketch_seed)
    return QuantumFeatureMap(spec, projector, config.shots, weight1_only=config.features == "weight1")


def make_sketch(config: TrainConfig, d: int):
    seed = config.resolved_sketch_seed
    m = config.resolved_sketch_width(d)
    plan = SketchPlan(d, m, seed)
    mixer = MixingLayer.near_identity(m, seed)
    projector = AngleProjector.random(config.spec.n_angles, m, seed)
    return plan, mixer, projector


def training_objective(problem: TrainingProblem, theta, rows, shot_seed: int) -> float:
    """Mean over blocks of MMD^2 between truth and ridge predictions on fixed rows."""
    losses = []
    for beta, (lo, hi) in enumerate(problem.bounds):
        Yb = problem.Y[rows, lo:hi]
        losses.append(block_loss(problem.feature_map, theta, problem.cache[beta, rows], Yb,
                                 problem.config.ridge_alpha, _bandwidth(problem.config, Yb), shot_seed + beta))
    return float(np.mean(losses))


def objective_bootstrap(problem: TrainingProblem, theta, rows, shot_seed: int, n_boot: int = 1000,
                        seed: int = 0, level: float = 0.95) -> tuple[float, float]:
    """Objective on ``rows`` and the half-width of its percentile bootstrap interval.

    Rows are resampled with truth and prediction kept paired; each resample
    reweights precomputed kernel matrices instead of recomputing distances.
    """
    rows = np.asarray(rows)
    n = rows.size
    counts = np.random.default_rng(seed).multinomial(n, np.full(n, 1.0 / n), size=n_boot) / n
    boot = np.zeros(n_boot)
    point = 0.0
    for beta, (lo, hi) in enumerate(problem.bounds):
        Yb = problem.Y[rows, lo:hi]
        F = problem.feature_map(problem.cache[beta, rows], theta, np.random.default_rng(shot_seed + beta))
        P = predict(F, fit_ridge(F, Yb, problem.config.ridge_alpha))
        g = -0.5 / _bandwidth(problem.config, Yb) ** 2
        K = (np.exp(g * cdist(Yb, Yb, "sqeuclidean")) + np.exp(g * cdist(P, P, "sqeuclidean"))
             - 2.0 * np.exp(g * cdist(Yb, P, "sqeuclidean")))
        point += max(K.mean(), 0.0)
        boot += np.maximum(((counts @ K) * counts).sum(axis=1), 0.0)
    k = len(problem.bounds)
    lo_q, hi_q = np.quantile(boot / k, [(1 - level) / 2, (1 + level) / 2])
    return point / k, float((hi_q - lo_q) / 2)


@dataclass
class TrainResult:
    theta: np.ndarray
    theta_init: np.ndarray
    history: list[StepRecord]
    decoders: list[RidgeWeights]
    banks: list[ClusterBank]
    gates: list[GateModel]
    initial_objective: float
    final_objective: float
    plan: SketchPlan
    mixer: MixingLayer
    projector: AngleProjector
    feature_map: object
    bounds: list[tuple[int, int]]
    config: TrainConfig
    total_circuits: int = 0
    cache: np.ndarray | None = field(default=None, repr=False)
    eval_rows: np.ndarray | None = field(default=None, repr=False)
    eval_seed: int = 0
    Y: np.ndarray | None = field(default=None, repr=False)

    @property
    def problem(self) -> TrainingProblem:
        return TrainingProblem(self.config, self.Y, self.cache, self.bounds, self.feature_map)


def fit_posthoc(problem: TrainingProblem, theta, rng_seed) -> tuple[list, list, list]:
    """Refit decoders on the full set, then the residual bank and gate with ``theta`` frozen."""
    config = problem.config
    ss = rng_seed if isinstance(rng_seed, np.random.SeedSequence) else np.random.SeedSequence(rng_seed)
    refit_ss, bank_ss = ss.spawn(2)
    shot_seeds = refit_ss.generate_state(len(problem.bounds), dtype=np.uint64)
    decoders, banks, gates = [], [], []
    for beta, (lo, hi) in enumerate(problem.bounds):
        S = problem.cache[beta]
        F = problem.feature_map(S, theta, np.random.default_rng(int(shot_seeds[beta])))
        Yb = problem.Y[:, lo:hi]
        W = fit_ridge(F, Yb, config.ridge_alpha, block_index=beta)
        R = Yb - predict(F, W)
        bank = fit_residual_bank(R, config.n_clusters, seed=int(bank_ss.generate_state(1)[0]) + beta,
                                 max_iters=config.kmeans_max_iter, restarts=config.kmeans_restarts)
        gate = fit_gate(S, bank.labels, config.n_clusters, config.gate_epochs, config.gate_step)
        decoders.append(W)
        banks.append(bank)
        gates.append(gate)
    return decoders, banks, gates


def train(config: TrainConfig, Y, callback=None) -> TrainResult:
    """Run ``config.steps`` SPSA steps, then fit final decoders, residual banks and gates."""
    Y = check_images(Y, name="Y")
    d = Y.shape[1]
    plan, mixer, projector = make_sketch(config, d)
    bounds = block_bounds(d, config.block_size)
    cache = build_cache(Y, plan, mixer, config.block_size)
    if config.angle_init == "calibrated":
        # block 0 always sees the empty prefix, so only later blocks carry spread
        rows = (cache[1:] if cache.shape[0] > 1 else cache).reshape(-1, plan.m)
        projector = calibrate_projector(projector, rows)
        feature_map = make_feature_map(config, projector)
        if isinstance(feature_map, RFFFeatureMap):
            feature_map = feature_map.calibrated(rows)
    else:
        feature_map = make_feature_map(config, projector)
    problem = TrainingProblem(config, Y, cache, bounds, feature_map)

    init_ss, loop_ss, post_ss, eval_ss = np.random.SeedSequence(config.seed).spawn(4)
    theta = np.random.default_rng(init_ss).uniform(-config.theta_init_scale, config.theta_init_scale,
                                                   config.spec.n_params)
    theta_init = theta.copy()
    eval_rng = np.random.default_rng(eval_ss)
    rows = np.sort(eval_rng.choice(Y.shape[0], size=min(config.eval_size, Y.shape[0]), replace=False))
    eval_seed = int(eval_rng.integers(2 ** 62))
    initial = training_objective(problem, theta, rows, eval_seed)

    rng = np.random.default_rng(loop_ss)
    history = []
    for t in range(config.steps):
        theta, lp, lm, rec = spsa_step(theta, t, problem, rng)
        history.append(rec)
        if callback is not None:
            callback(rec)
    final = training_objective(problem, theta, rows, eval_seed)
    logger.info("objective %.5g -> %.5g over %d steps", initial, final, config.steps)

    decoders, banks, gates = fit_posthoc(problem, theta, post_ss)
    return TrainResult(theta, theta_init, history, decoders, banks, gates, initial, final, plan, mixer,
                       projector, feature_map, bounds, config,
                       total_circuits=sum(r.circuits for r in history), cache=cache,
                       eval_rows=rows, eval_seed=eval_seed, Y=Y)
