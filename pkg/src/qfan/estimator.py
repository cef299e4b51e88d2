"""scikit-learn style wrappers around training, teacher-forced features and rollout."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DimensionError, check_images
from .decoder import predict as ridge_predict
from .evaluation import mmd2_images
from .generation import ModelBundle, generate_batch
from .sketch import MixingLayer, SketchPlan, default_sketch_width
from .training import TrainConfig, block_bounds, build_cache, train


class PrefixSketcher(TransformerMixin, BaseEstimator):
    """Mixed sketch of every block prefix, flattened to ``(N, B * m)``.

    Column group ``beta`` holds the sketch seen before block ``beta``; the first
    group is always the sketch of an empty prefix.
    """

    def __init__(self, block_size=6, sketch_width=None, seed=0):
        self.block_size = block_size
        self.sketch_width = sketch_width
        self.seed = seed

    def fit(self, X, y=None):
        X = check_images(X)
        self.n_features_in_ = X.shape[1]
        m = default_sketch_width(X.shape[1]) if self.sketch_width is None else self.sketch_width
        self.plan_ = SketchPlan(X.shape[1], m, self.seed)
        self.mixer_ = MixingLayer.near_identity(m, self.seed)
        return self

    def transform(self, X):
        check_is_fitted(self, "plan_")
        X = check_images(X)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(f"expected {self.n_features_in_} pixels, got {X.shape[1]}")
        cache = build_cache(X, self.plan_, self.mixer_, self.block_size)
        return np.transpose(cache, (1, 0, 2)).reshape(X.shape[0], -1)


class QFANGenerator(BaseEstimator):
    """Blockwise autoregressive generator with a parameterized-circuit feature stage.

    ``fit`` trains on nonnegative images, ``sample`` draws free-running
    rollouts, ``transform`` returns teacher-forced circuit features per block,
    and ``predict`` returns the teacher-forced decoder mean of every pixel.
    """

    def __init__(self, n_qubits=3, n_layers=2, block_size=6, sketch_width=None, steps=120,
                 batch_size=128, shots=512, a0=0.15, c0=0.1, ridge_alpha=1e-3, n_clusters=8,
                 features="quantum", rff_features=12, angle_init="random", seed=0):
        self.n_qubits = n_qubits
        self.n_layers = n_layers
        self.block_size = block_size
        self.sketch_width = sketch_width
        self.steps = steps
        self.batch_size = batch_size
        self.shots = shots
        self.a0 = a0
        self.c0 = c0
        self.ridge_alpha = ridge_alpha
        self.n_clusters = n_clusters
        self.features = features
        self.rff_features = rff_features
        self.angle_init = angle_init
        self.seed = seed

    def to_config(self) -> TrainConfig:
        return TrainConfig(**self.get_params())

    def fit(self, X, y=None, callback=None):
        X = check_images(X)
        result = train(self.to_config(), X, callback=callback)
        self.n_features_in_ = X.shape[1]
        self.bundle_ = ModelBundle.from_training(result)
        self.history_ = result.history
        self.objective_ = (result.initial_objective, result.final_objective)
        self.total_circuits_ = result.total_circuits
        return self

    @classmethod
    def from_bundle(cls, bundle: ModelBundle) -> "QFANGenerator":
        params = {k: v for k, v in bundle.config.to_dict().items() if k in cls._get_param_names()}
        est = cls(**params)
        est.bundle_ = bundle
        est.n_features_in_ = bundle.d
        return est

    def _check_X(self, X):
        check_is_fitted(self, "bundle_")
        X = check_images(X)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(f"expected {self.n_features_in_} pixels, got {X.shape[1]}")
        return X

    def sample(self, n_samples=1, seed=0, shots="default", residuals=True):
        check_is_fitted(self, "bundle_")
        return generate_batch(self.bundle_, n_samples, shots=shots, seed=seed, residuals_enabled=residuals)

    def transform(self, X, shots=None, seed=0):
        """Teacher-forced features, ``(N, B * p_f)``; exact expectations unless ``shots`` is given."""
        X = self._check_X(X)
        b = self.bundle_
        cache = build_cache(X, b.plan, b.mixer, b.config.block_size)
        rng = np.random.default_rng(seed)
        blocks = [b.feature_map(cache[beta], b.theta, rng, shots=shots) for beta in range(len(b.bounds))]
        return np.concatenate(blocks, axis=1)

    def predict(self, X, shots=None, seed=0):
        X = self._check_X(X)
        b = self.bundle_
        F = self.transform(X, shots=shots, seed=seed)
        p = b.feature_map.n_features
        out = np.empty_like(X)
        for beta, (lo, hi) in enumerate(b.bounds):
            out[:, lo:hi] = ridge_predict(F[:, beta * p:(beta + 1) * p], b.decoders[beta])
        return out

    def score(self, X, y=None, seed=0):
        """Negative image-level MMD^2 between ``X`` and as many free-running samples."""
        X = self._check_X(X)
        return -mmd2_images(X, self.sample(X.shape[0], seed=seed))

    @property
    def n_blocks_(self) -> int:
        check_is_fitted(self, "bundle_")
        return len(block_bounds(self.n_features_in_, self.block_size))
