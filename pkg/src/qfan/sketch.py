"""Streaming count-sketch of generated pixels and the maps that turn it into circuit angles.

The raw sketch ``s`` stays additive across blocks; the tanh mixing layer and the
sigmoid angle projection are applied only when the sketch is read.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ._validation import DimensionError

MIX_EPS = 0.01
_EPS = np.finfo(float).eps
_TINY = np.finfo(float).tiny

# stream tags so every derived object has its own independent generator
_TAG_HASH = 0
_TAG_SIGN = 1
_TAG_MIX = 2
_TAG_PROJ = 3


# widths tabulated against image size; larger images get the next tabulated width
_SKETCH_WIDTHS = ((12, 32), (368, 64), (533, 80), (6480, 256))


def default_sketch_width(d: int) -> int:
    for limit, m in _SKETCH_WIDTHS:
        if d <= limit:
            return m
    return 512


def _stream(seed: int, tag: int) -> np.random.Generator:
    # Philox is counter based: the stream is a pure function of (seed, tag)
    key = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, tag]).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SketchPlan:
    """Fixed hash ``h: [d] -> [m]`` and sign ``sgn: [d] -> {+1, -1}`` maps.

    Only ``(d, m, seed)`` is stored; the maps are regenerated from the seed.
    """

    d: int
    m: int
    seed: int = 0
    h: np.ndarray = field(init=False, repr=False, compare=False)
    sgn: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.d) < 1 or int(self.m) < 1:
            raise DimensionError(f"sketch needs d >= 1 and m >= 1, got d={self.d}, m={self.m}")
        h = _stream(self.seed, _TAG_HASH).integers(0, self.m, size=self.d)
        sgn = np.where(_stream(self.seed, _TAG_SIGN).integers(0, 2, size=self.d) == 1, 1.0, -1.0)
        h.setflags(write=False)
        sgn.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "sgn", sgn)

    def matrix(self) -> np.ndarray:
        """Dense ``m x d`` count-sketch matrix S (one signed nonzero per column)."""
        S = np.zeros((self.m, self.d))
        S[self.h, np.arange(self.d)] = self.sgn
        return S

    def to_json(self) -> str:
        return json.dumps({"d": int(self.d), "m": int(self.m), "seed": int(self.seed)}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SketchPlan":
        rec = json.loads(text)
        return cls(int(rec["d"]), int(rec["m"]), int(rec["seed"]))


def new_sketch_plan(d: int, m: int, seed: int = 0) -> SketchPlan:
    return SketchPlan(int(d), int(m), int(seed))


@dataclass
class SketchState:
    s: np.ndarray
    blocks_absorbed: int = 0
    touched: int = 0  # buckets written by the last update

    @classmethod
    def zeros(cls, m: int) -> "SketchState":
        return cls(np.zeros(m))


def sketch_update(state: SketchState, plan: SketchPlan, block_pixels) -> SketchState:
    """Absorb one block of ``(index, value)`` pairs into a new state.

    Only the buckets ``h(k)`` of the block's indices are written.
    """
    pairs = list(block_pixels)
    if state.s.shape != (plan.m,):
        raise DimensionError(f"state has length {state.s.shape}, plan expects {plan.m}")
    s = state.s.copy()
    if not pairs:
        return SketchState(s, state.blocks_absorbed, 0)
    idx = np.fromiter((int(k) for k, _ in pairs), dtype=np.int64, count=len(pairs))
    vals = np.fromiter((float(v) for _, v in pairs), dtype=float, count=len(pairs))
    if idx.min() < 0 or idx.max() >= plan.d:
        raise IndexError(f"pixel index out of range [0, {plan.d})")
    if np.unique(idx).size != idx.size:
        raise IndexError("pixel index repeated within one block")
    buckets = plan.h[idx]
    np.add.at(s, buckets, plan.sgn[idx] * vals)
    return SketchState(s, state.blocks_absorbed + 1, int(np.unique(buckets).size))


def sketch_apply(plan: SketchPlan, y) -> np.ndarray:
    """Return ``S @ y``; ``y`` may also be a batch of shape ``(n, d)``."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != plan.d:
        raise DimensionError(f"expected last axis of length {plan.d}, got {y.shape[-1]}")
    out = np.zeros(y.shape[:-1] + (plan.m,))
    signed = y * plan.sgn
    for j in range(plan.m):
        cols = plan.h == j
        if cols.any():
            out[..., j] = signed[..., cols].sum(axis=-1)
    return out


def inner_product_estimate(plan: SketchPlan, y, y_other) -> float:
    y = np.asarray(y, dtype=float)
    y_other = np.asarray(y_other, dtype=float)
    if y.shape != y_other.shape:
        raise DimensionError(f"shape mismatch {y.shape} vs {y_other.shape}")
    return float(sketch_apply(plan, y) @ sketch_apply(plan, y_other))


@dataclass(frozen=True)
class MixingLayer:
    M: np.ndarray

    @classmethod
    def near_identity(cls, m: int, seed: int = 0, eps: float = MIX_EPS) -> "MixingLayer":
        G = _stream(seed, _TAG_MIX).standard_normal((m, m))
        return cls(np.eye(m) + eps * G)


def mix(layer: MixingLayer, s) -> np.ndarray:
    """``tanh(s M^T)``, row-wise for batches."""
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != layer.M.shape[1]:
        raise DimensionError(f"sketch length {s.shape[-1]} does not match mixing layer {layer.M.shape[1]}")
    return np.tanh(s @ layer.M.T)


@dataclass(frozen=True)
class AngleProjector:
    A: np.ndarray
    b: np.ndarray

    @property
    def n_angles(self) -> int:
        return self.A.shape[0]

    @classmethod
    def random(cls, n_angles: int, m: int, seed: int = 0) -> "AngleProjector":
        A = _stream(seed, _TAG_PROJ).standard_normal((n_angles, m)) / np.sqrt(m)
        return cls(A, np.zeros(n_angles))


def calibrate_projector(proj: AngleProjector, s_mixed_samples) -> AngleProjector:
    """Rescale rows of ``A`` and set ``b`` so each pre-sigmoid activation is standardized.

    Statistics come from ``s_mixed_samples`` (rows of mixed sketches); the result is frozen.
    """
    Z = np.asarray(s_mixed_samples, dtype=float) @ proj.A.T
    mu = Z.mean(axis=0)
    sd = Z.std(axis=0)
    scale = np.where(sd > 1e-12, 1.0 / np.where(sd > 1e-12, sd, 1.0), 1.0)
    return AngleProjector(proj.A * scale[:, None], -mu * scale)


def project_angles(proj: AngleProjector, s_mixed) -> np.ndarray:
    s_mixed = np.asarray(s_mixed, dtype=float)
    if s_mixed.shape[-1] != proj.A.shape[1]:
        raise DimensionError(f"mixed sketch length {s_mixed.shape[-1]} does not match projector {proj.A.shape[1]}")
    a = expit(s_mixed @ proj.A.T + proj.b)
    # keep the open interval even where float64 saturates
    return np.clip(a, _TINY, 1.0 - _EPS)
