"""Free-running autoregressive rollout and the on-disk model bundle."""
from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import DimensionError
from .decoder import RidgeWeights, predict
from .features import QuantumFeatureMap, RFFFeatureMap
from .quantum import theta_from_text, theta_to_text
from .residual import ClusterBank, GateModel, sample_residual
from .sketch import AngleProjector, MixingLayer, SketchPlan, SketchState, mix, sketch_update
from .training import TrainConfig, TrainResult, block_bounds, make_feature_map, make_sketch


@dataclass
class ModelBundle:
    config: TrainConfig
    theta: np.ndarray
    plan: SketchPlan
    mixer: MixingLayer
    projector: AngleProjector
    feature_map: object
    decoders: list[RidgeWeights]
    banks: list[ClusterBank]
    gates: list[GateModel]
    bounds: list[tuple[int, int]]

    def __post_init__(self):
        n_blocks = len(self.bounds)
        if not (len(self.decoders) == len(self.banks) == len(self.gates) == n_blocks):
            raise DimensionError("one decoder, bank and gate per block required")
        if self.bounds[-1][1] != self.plan.d:
            raise DimensionError("block partition does not cover the image")
        for (lo, hi), dec in zip(self.bounds, self.decoders):
            if dec.W.shape != (self.feature_map.n_features, hi - lo):
                raise DimensionError(f"decoder shape {dec.W.shape} does not match block [{lo}, {hi})")

    @property
    def d(self) -> int:
        return self.plan.d

    @classmethod
    def from_training(cls, res: TrainResult) -> "ModelBundle":
        return cls(res.config, res.theta, res.plan, res.mixer, res.projector, res.feature_map,
                   res.decoders, res.banks, res.gates, res.bounds)

    def with_decoders(self, decoders) -> "ModelBundle":
        return ModelBundle(self.config, self.theta, self.plan, self.mixer, self.projector,
                           self.feature_map, decoders, self.banks, self.gates, self.bounds)

    # ------------------------------------------------------------ persistence

    def save(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(self.config.to_dict(), indent=2, sort_keys=True) + "\n")
        (out / "sketch.json").write_text(self.plan.to_json() + "\n")
        (out / "theta.txt").write_text(theta_to_text(self.config.spec, self.theta))
        arrays = {"proj_A": self.projector.A, "proj_b": self.projector.b}
        if isinstance(self.feature_map, RFFFeatureMap):
            arrays.update(rff_W=self.feature_map.W, rff_b=self.feature_map.b)
        for beta, (dec, bank, gate) in enumerate(zip(self.decoders, self.banks, self.gates)):
            arrays[f"W_{beta}"] = dec.W
            arrays[f"centroids_{beta}"] = bank.centroids
            arrays[f"labels_{beta}"] = bank.labels
            arrays[f"residuals_{beta}"] = np.concatenate(bank.members) if bank.members else np.zeros((0, 0))
            arrays[f"gate_w_{beta}"] = gate.weights
            arrays[f"gate_b_{beta}"] = gate.bias
        (out / "arrays.npz").write_bytes(_npz_bytes(arrays))
        return out

    @classmethod
    def load(cls, directory) -> "ModelBundle":
        src = Path(directory)
        config = TrainConfig.from_dict(json.loads((src / "config.json").read_text()))
        plan = SketchPlan.from_json((src / "sketch.json").read_text())
        spec, theta = theta_from_text((src / "theta.txt").read_text())
        if spec != config.spec:
            raise DimensionError("theta header disagrees with config")
        _, mixer, _ = make_sketch(config, plan.d)
        bounds = block_bounds(plan.d, config.block_size)
        decoders, banks, gates = [], [], []
        with np.load(src / "arrays.npz") as z:
            projector = AngleProjector(z["proj_A"], z["proj_b"])
            feature_map = make_feature_map(config, projector)
            if "rff_W" in z.files:
                feature_map = RFFFeatureMap(z["rff_W"], z["rff_b"])
            for beta in range(len(bounds)):
                decoders.append(RidgeWeights(z[f"W_{beta}"], config.ridge_alpha, beta))
                labels = z[f"labels_{beta}"]
                stacked = z[f"residuals_{beta}"]
                # residuals are stored grouped by cluster, in label order
                order = np.cumsum([np.sum(labels == k) for k in range(config.n_clusters)])[:-1]
                members = np.split(stacked, order)
                banks.append(ClusterBank(z[f"centroids_{beta}"], members, labels))
                gates.append(GateModel(z[f"gate_w_{beta}"], z[f"gate_b_{beta}"]))
        return cls(config, theta, plan, mixer, projector, feature_map, decoders, banks, gates, bounds)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.config.to_dict(), sort_keys=True).encode())
        h.update(self.plan.to_json().encode())
        h.update(np.ascontiguousarray(self.theta, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.projector.A, dtype="<f8").tobytes())
        if isinstance(self.feature_map, RFFFeatureMap):
            h.update(np.ascontiguousarray(self.feature_map.W, dtype="<f8").tobytes())
        for dec, gate in zip(self.decoders, self.gates):
            h.update(np.ascontiguousarray(dec.W, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(gate.weights, dtype="<f8").tobytes())
        return h.hexdigest()


def _npz_bytes(arrays: dict) -> bytes:
    # zip entries carry no timestamps beyond numpy's fixed default, so output is reproducible
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    return buf.getvalue()


def generate_one(bundle: ModelBundle, shots, rng: np.random.Generator, residuals_enabled: bool = True,
                 trace: list | None = None) -> np.ndarray:
    """Roll out one image block by block, feeding each emitted block back into the sketch.

    ``shots`` of ``None`` uses exact expectations. Shot noise and residual draws
    come from separate child streams of ``rng``, so an exact-mode rollout with
    the same ``rng`` seed shares every residual draw. If ``trace`` is a list, the
    raw sketch after each block is appended to it.
    """
    shot_rng, resid_rng = rng.spawn(2)
    state = SketchState.zeros(bundle.plan.m)
    out = np.empty(bundle.d)
    for beta, (lo, hi) in enumerate(bundle.bounds):
        s_mixed = mix(bundle.mixer, state.s)
        f = bundle.feature_map(s_mixed[None, :], bundle.theta, shot_rng, shots=shots)[0]
        y = predict(f, bundle.decoders[beta])
        if residuals_enabled:
            y = y + sample_residual(bundle.banks[beta], bundle.gates[beta], s_mixed, resid_rng)
        y = np.maximum(y, 0.0)
        out[lo:hi] = y
        state = sketch_update(state, bundle.plan, zip(range(lo, hi), y))
        if trace is not None:
            trace.append(state.s.copy())
    return out


def generate_batch(bundle: ModelBundle, n_samples: int, shots="default", seed: int = 0,
                   residuals_enabled: bool = True) -> np.ndarray:
    """``n_samples`` independent rollouts, one child seed per row."""
    if shots == "default":
        shots = bundle.config.shots
    if n_samples == 0:
        return np.zeros((0, bundle.d))
    children = np.random.SeedSequence(seed).spawn(n_samples)
    return np.stack([generate_one(bundle, shots, np.random.default_rng(c), residuals_enabled)
                     for c in children])


def provenance(bundle: ModelBundle, seed: int, shots, residuals_enabled: bool, n_samples: int) -> dict:
    return {"bundle_sha256": bundle.digest(), "seed": seed, "shots": shots,
            "residuals": residuals_enabled, "n_samples": n_samples}
