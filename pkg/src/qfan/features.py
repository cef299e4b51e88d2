"""Feature stages that turn a mixed sketch into a decoder input vector.

The quantum stage is the model proper; the weight-1 mask and random Fourier
features exist for ablations and share the same call signature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import DimensionError
from .quantum import CircuitSpec, ShotCounter, circuit_features
from .sketch import AngleProjector, _stream, project_angles

_TAG_RFF = 4


def weight1_feature_mask(f, n_qubits: int) -> np.ndarray:
    """Keep only the single-qubit ``Z_i`` and ``X_i`` entries of a feature vector."""
    f = np.asarray(f, dtype=float)
    half = n_qubits + n_qubits * (n_qubits - 1) // 2
    if f.shape[-1] != 2 * half:
        raise DimensionError(f"expected {2 * half} features for {n_qubits} qubits, got {f.shape[-1]}")
    return np.concatenate([f[..., :n_qubits], f[..., half:half + n_qubits]], axis=-1)


def weight1_indices(n_qubits: int) -> np.ndarray:
    half = n_qubits + n_qubits * (n_qubits - 1) // 2
    return np.r_[0:n_qubits, half:half + n_qubits]


def rff_features(s_mixed, W_rff, b_rff) -> np.ndarray:
    """``cos(W_rff s + b_rff)``; batches along the leading axis."""
    s_mixed = np.asarray(s_mixed, dtype=float)
    W_rff = np.asarray(W_rff, dtype=float)
    if s_mixed.shape[-1] != W_rff.shape[1] or W_rff.shape[0] != np.shape(b_rff)[0]:
        raise DimensionError(f"RFF shapes W{W_rff.shape}, b{np.shape(b_rff)} do not fit input {s_mixed.shape}")
    return np.cos(s_mixed @ W_rff.T + b_rff)


@dataclass
class QuantumFeatureMap:
    spec: CircuitSpec
    projector: AngleProjector
    shots: int | None = 512
    weight1_only: bool = False
    uses_theta = True

    @property
    def n_features(self) -> int:
        return 2 * self.spec.n_qubits if self.weight1_only else self.spec.n_features

    def __call__(self, s_mixed, theta, rng=None, counter: ShotCounter | None = None, shots="default"):
        shots = self.shots if shots == "default" else shots
        angles = project_angles(self.projector, s_mixed)
        f = circuit_features(self.spec, angles, theta, shots, rng, counter)
        return weight1_feature_mask(f, self.spec.n_qubits) if self.weight1_only else f


@dataclass
class RFFFeatureMap:
    W: np.ndarray  # (p_f, m)
    b: np.ndarray  # (p_f,)
    uses_theta = False

    @classmethod
    def random(cls, n_features: int, m: int, seed: int = 0) -> "RFFFeatureMap":
        rng = _stream(seed, _TAG_RFF)
        return cls(rng.standard_normal((n_features, m)), rng.uniform(0.0, 2 * np.pi, n_features))

    @property
    def n_features(self) -> int:
        return self.W.shape[0]

    def calibrated(self, s_mixed_samples) -> "RFFFeatureMap":
        """Rescale rows of ``W`` so each projection ``W s`` has unit spread on the samples."""
        sd = (np.asarray(s_mixed_samples, dtype=float) @ self.W.T).std(axis=0)
        scale = np.where(sd > 1e-12, 1.0 / np.where(sd > 1e-12, sd, 1.0), 1.0)
        return RFFFeatureMap(self.W * scale[:, None], self.b)

    def __call__(self, s_mixed, theta=None, rng=None, counter=None, shots="default"):
        return rff_features(s_mixed, self.W, self.b)
