"""Post-hoc residual sampler: per-block K-means bank plus a softmax gate on the mixed sketch."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from ._validation import DimensionError, InsufficientDataError, check_matrix

logger = logging.getLogger(__name__)


@dataclass
class ClusterBank:
    """K-means clusters of one block's residuals."""

    centroids: np.ndarray           # (M, b)
    members: list[np.ndarray]       # M arrays of shape (n_k, b)
    labels: np.ndarray              # (N,) cluster of each training residual
    objective_history: list[float] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]

    @property
    def objective(self) -> float:
        return self.objective_history[-1] if self.objective_history else 0.0


def _assign(X, C):
    d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    return labels, float(d2[np.arange(len(X)), labels].sum())


def _lloyd(X, init, max_iters):
    C = init.copy()
    labels, obj = _assign(X, C)
    history = [obj]
    for _ in range(max_iters):
        for k in range(C.shape[0]):
            sel = labels == k
            if sel.any():
                C[k] = X[sel].mean(axis=0)
        new_labels, obj = _assign(X, C)
        history.append(obj)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return C, labels, history


def wcss(X, labels, centroids) -> float:
    return float(((np.asarray(X) - np.asarray(centroids)[labels]) ** 2).sum())


def fit_residual_bank(residuals, n_clusters: int = 8, seed: int = 0, max_iters: int = 100,
                      restarts: int = 5) -> ClusterBank:
    """Lloyd's iterations from ``restarts`` seeded inits of distinct residuals; best objective wins."""
    X = check_matrix(residuals, name="residuals")
    if X.shape[0] < n_clusters:
        raise InsufficientDataError(f"{X.shape[0]} residuals cannot fill {n_clusters} clusters")
    rng = np.random.default_rng(seed)
    distinct = np.unique(X, axis=0)
    pool = distinct if distinct.shape[0] >= n_clusters else X
    best = None
    for _ in range(max(1, restarts)):
        init = pool[rng.choice(pool.shape[0], n_clusters, replace=False)]
        C, labels, history = _lloyd(X, init, max_iters)
        if best is None or history[-1] < best[2][-1]:
            best = (C, labels, history)
    C, labels, history = best
    members = [X[labels == k] for k in range(n_clusters)]
    return ClusterBank(C, members, labels, history)


@dataclass
class GateModel:
    """Linear map ``m -> M`` followed by softmax."""

    weights: np.ndarray   # (m, M)
    bias: np.ndarray      # (M,)
    loss_history: list[float] = field(default_factory=list)

    def proba(self, s_mixed) -> np.ndarray:
        s_mixed = np.asarray(s_mixed, dtype=float)
        if s_mixed.shape[-1] != self.weights.shape[0]:
            raise DimensionError(f"gate expects {self.weights.shape[0]} inputs, got {s_mixed.shape[-1]}")
        p = softmax(s_mixed @ self.weights + self.bias, axis=-1)
        return p / p.sum(axis=-1, keepdims=True)


def cross_entropy(Z, labels, weights, bias) -> float:
    logp = log_softmax(Z @ weights + bias, axis=1)
    return float(-logp[np.arange(len(labels)), labels].mean())


def fit_gate(s_mixed, labels, n_clusters: int | None = None, epochs: int = 500,
             step: float = 0.1) -> GateModel:
    """Full-batch gradient descent on multinomial cross-entropy.

    Inputs are standardized for conditioning; the affine standardization is
    folded back so the returned model acts on raw mixed sketches.
    """
    X = check_matrix(s_mixed, name="s_mixed")
    labels = np.asarray(labels, dtype=int)
    M = int(n_clusters if n_clusters is not None else labels.max() + 1)
    if labels.size != X.shape[0]:
        raise DimensionError("one label per sketch row required")
    if labels.min() < 0 or labels.max() >= M:
        raise IndexError(f"labels must lie in [0, {M})")
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 1e-12, sd, 1.0)
    Z = (X - mu) / sd
    onehot = np.eye(M)[labels]
    n = X.shape[0]
    Wz = np.zeros((X.shape[1], M))
    bz = np.zeros(M)
    history = [cross_entropy(Z, labels, Wz, bz)]
    for _ in range(epochs):
        G = softmax(Z @ Wz + bz, axis=1) - onehot
        Wz -= step * (Z.T @ G) / n
        bz -= step * G.mean(axis=0)
        history.append(cross_entropy(Z, labels, Wz, bz))
    weights = Wz / sd[:, None]
    bias = bz - mu @ weights
    return GateModel(weights, bias, history)


def sample_residual(bank: ClusterBank, gate: GateModel, s_mixed, rng: np.random.Generator) -> np.ndarray:
    """Draw a cluster from the gate, then one of its stored residuals uniformly."""
    p = gate.proba(s_mixed)
    k = int(rng.choice(bank.n_clusters, p=p))
    members = bank.members[k]
    if len(members) == 0:
        logger.warning("cluster %d is empty; emitting its centroid", k)
        return bank.centroids[k].copy()
    return members[int(rng.integers(len(members)))].copy()
