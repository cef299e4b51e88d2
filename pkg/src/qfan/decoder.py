"""Closed-form ridge decoding from Pauli features to block pixels, plus capacity calculators."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import linalg

from ._validation import ConfigError, DimensionError, check_matrix

DEFAULT_ALPHA = 1e-3
DEFAULT_RHO_MIN = 1.5


@dataclass
class RidgeWeights:
    W: np.ndarray  # (p_f, b)
    alpha: float
    block_index: int = 0

    @property
    def gain(self) -> float:
        return decoder_gain(self.W)


def fit_ridge(F, Y, alpha: float = DEFAULT_ALPHA, block_index: int = 0) -> RidgeWeights:
    """Solve ``(F^T F + alpha I) W = F^T Y`` with a Cholesky-backed SPD solve."""
    if not alpha > 0:
        raise ConfigError(f"ridge alpha must be > 0, got {alpha}")
    F = check_matrix(F, name="F")
    Y = check_matrix(Y, name="Y")
    if F.shape[0] != Y.shape[0] or F.shape[0] < 1:
        raise DimensionError(f"F has {F.shape[0]} rows but Y has {Y.shape[0]}")
    G = F.T @ F
    G[np.diag_indices_from(G)] += alpha
    W = linalg.solve(G, F.T @ Y, assume_a="pos")
    return RidgeWeights(W, float(alpha), block_index)


def predict(F, W) -> np.ndarray:
    W = W.W if isinstance(W, RidgeWeights) else np.asarray(W, dtype=float)
    F = np.asarray(F, dtype=float)
    if F.shape[-1] != W.shape[0]:
        raise DimensionError(f"F has {F.shape[-1]} features, W expects {W.shape[0]}")
    return F @ W


def decoder_gain(W) -> float:
    """Largest absolute column sum of ``W`` (worst-case feature-to-pixel amplification)."""
    W = W.W if isinstance(W, RidgeWeights) else np.asarray(W, dtype=float)
    if W.size == 0:
        return 0.0
    return float(np.abs(W).sum(axis=0).max())


def weight_norm_bound_check(F, Y, alpha: float = DEFAULT_ALPHA) -> tuple[float, float, bool]:
    """``(||W||_F, ||Y||_F / (2 sqrt(alpha)), lhs <= rhs)``."""
    W = fit_ridge(F, Y, alpha).W
    lhs = float(np.linalg.norm(W))
    rhs = float(np.linalg.norm(Y) / (2.0 * math.sqrt(alpha)))
    # 1e-12 relative slack absorbs the solve's rounding at the equality case
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-12))


def feature_to_target_ratio(n_qubits: int, block_size: int) -> Fraction:
    return Fraction(n_qubits * n_qubits + n_qubits, block_size)


def _rho(rho_min) -> Fraction:
    rho = Fraction(str(rho_min))
    if rho <= 0:
        raise ConfigError(f"rho_min must be > 0, got {rho_min}")
    return rho


def b_max(n_qubits: int, rho_min: float = DEFAULT_RHO_MIN) -> int:
    return math.floor(Fraction(n_qubits * n_qubits + n_qubits) / _rho(rho_min))


def B_min(d: int, n_qubits: int, rho_min: float = DEFAULT_RHO_MIN) -> int:
    return math.ceil(d * _rho(rho_min) / (n_qubits * n_qubits + n_qubits))
