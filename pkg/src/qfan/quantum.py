"""Dense statevector simulation of the shared re-uploading circuit and its Pauli features.

Qubit 0 is the most significant bit of the computational-basis index. All
routines take a leading batch axis so one call simulates a whole minibatch.

Per layer and qubit the gate order is: encode ``RY(pi*a)``, ``RZ(pi*a)``, then
trainable ``RZ(theta)``, ``RY(theta)``, then the CZ ring over neighbouring qubits.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ._validation import ConfigError, DimensionError, StateError

N_GROUPS = 2  # all-Z and all-X tensor-product settings
MAX_QUBITS = 12
NORM_TOL = 1e-6


@dataclass(frozen=True)
class CircuitSpec:
    n_qubits: int = 3
    n_layers: int = 2

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ConfigError(f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}")
        if self.n_layers < 1:
            raise ConfigError(f"n_layers must be >= 1, got {self.n_layers}")

    @property
    def n_params(self) -> int:
        return 2 * self.n_layers * self.n_qubits

    @property
    def n_angles(self) -> int:
        return 2 * self.n_layers * self.n_qubits

    @property
    def n_features(self) -> int:
        return feature_count(self.n_qubits)

    @property
    def dim(self) -> int:
        return 2 ** self.n_qubits

    def cz_pairs(self) -> list[tuple[int, int]]:
        n = self.n_qubits
        if n == 1:
            return []
        if n == 2:
            return [(0, 1)]
        return [(q, (q + 1) % n) for q in range(n)]


def feature_count(n_qubits: int) -> int:
    n = int(n_qubits)
    return 2 * n + 2 * (n * (n - 1) // 2)


def measurement_groups(spec: CircuitSpec | None = None) -> int:
    return N_GROUPS


def feature_labels(n_qubits: int) -> list[str]:
    pairs = list(combinations(range(n_qubits), 2))
    labels = [f"Z{i}" for i in range(n_qubits)] + [f"Z{i}Z{j}" for i, j in pairs]
    labels += [f"X{i}" for i in range(n_qubits)] + [f"X{i}X{j}" for i, j in pairs]
    return labels


def _ry(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    out = np.empty(np.shape(t) + (2, 2), dtype=complex)
    out[..., 0, 0], out[..., 0, 1] = c, -s
    out[..., 1, 0], out[..., 1, 1] = s, c
    return out


def _rz(t):
    out = np.zeros(np.shape(t) + (2, 2), dtype=complex)
    out[..., 0, 0] = np.exp(-0.5j * t)
    out[..., 1, 1] = np.exp(0.5j * t)
    return out


_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def _apply_1q(psi: np.ndarray, mats: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    """Apply per-sample 2x2 ``mats`` (shape ``(n, 2, 2)`` or ``(2, 2)``) on ``qubit``."""
    n = psi.shape[0]
    view = psi.reshape(n, 2 ** qubit, 2, 2 ** (n_qubits - qubit - 1))
    if mats.ndim == 2:
        out = np.einsum("ab,nibj->niaj", mats, view)
    else:
        out = np.einsum("nab,nibj->niaj", mats, view)
    return out.reshape(n, -1)


def _bits(n_qubits: int) -> np.ndarray:
    """``(2**n, n)`` array of bit values, qubit 0 most significant."""
    idx = np.arange(2 ** n_qubits)
    return (idx[:, None] >> (n_qubits - 1 - np.arange(n_qubits))[None, :]) & 1


def _cz_ring_phase(spec: CircuitSpec) -> np.ndarray:
    bits = _bits(spec.n_qubits)
    phase = np.ones(spec.dim)
    for i, j in spec.cz_pairs():
        phase = phase * np.where(bits[:, i] & bits[:, j], -1.0, 1.0)
    return phase


def _check_inputs(spec: CircuitSpec, a, theta):
    a = np.asarray(a, dtype=float)
    theta = np.asarray(theta, dtype=float)
    single = a.ndim == 1
    a2 = np.atleast_2d(a)
    if a2.shape[1] != spec.n_angles:
        raise DimensionError(f"expected {spec.n_angles} angles, got {a2.shape[1]}")
    if theta.shape != (spec.n_params,):
        raise DimensionError(f"expected theta of length {spec.n_params}, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ConfigError("theta has non-finite entries")
    return a2, theta, single


def build_state(spec: CircuitSpec, a, theta, angle_scale: float = np.pi) -> np.ndarray:
    """Statevector(s) ``U(a, theta)|0...0>``.

    ``a`` is a vector of ``n_angles`` values in (0, 1) or a batch of them; the
    returned array matches (``(2**n_q,)`` or ``(n, 2**n_q)``). Angle slot
    ``(layer, qubit, 0)`` feeds the encoding RY, slot ``(layer, qubit, 1)`` the
    encoding RZ; ``theta`` uses the same layout for the trainable RZ and RY.
    """
    a2, theta, single = _check_inputs(spec, a, theta)
    n, nq = a2.shape[0], spec.n_qubits
    enc = angle_scale * a2.reshape(n, spec.n_layers, nq, 2)
    th = theta.reshape(spec.n_layers, nq, 2)
    phase = _cz_ring_phase(spec)
    psi = np.zeros((n, spec.dim), dtype=complex)
    psi[:, 0] = 1.0
    for layer in range(spec.n_layers):
        for q in range(nq):
            # fold the four rotations on this qubit into one 2x2 per sample
            u = _rz(enc[:, layer, q, 1]) @ _ry(enc[:, layer, q, 0])
            u = _ry(th[layer, q, 1]) @ _rz(th[layer, q, 0]) @ u
            psi = _apply_1q(psi, u, q, nq)
        psi = psi * phase
    return psi[0] if single else psi


def _sign_table(n_qubits: int) -> np.ndarray:
    """``(2**n, n + C(n,2))`` table of (-1)^bit_i and (-1)^(bit_i xor bit_j)."""
    z = 1.0 - 2.0 * _bits(n_qubits)
    cols = [z[:, i] for i in range(n_qubits)]
    cols += [z[:, i] * z[:, j] for i, j in combinations(range(n_qubits), 2)]
    return np.stack(cols, axis=1)


def _basis_probs(spec: CircuitSpec, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    psi2 = np.atleast_2d(psi)
    norms = np.linalg.norm(psi2, axis=1)
    if np.any(np.abs(norms - 1.0) > NORM_TOL):
        raise StateError(f"state not normalized (max deviation {np.max(np.abs(norms - 1.0)):.2e})")
    pz = np.abs(psi2) ** 2
    phi = psi2
    for q in range(spec.n_qubits):
        phi = _apply_1q(phi, _H, q, spec.n_qubits)
    px = np.abs(phi) ** 2
    return pz, px


def exact_features(spec: CircuitSpec, psi: np.ndarray) -> np.ndarray:
    """Exact ``[Z_i, Z_iZ_j, X_i, X_iX_j]`` expectations."""
    pz, px = _basis_probs(spec, psi)
    table = _sign_table(spec.n_qubits)
    f = np.concatenate([pz @ table, px @ table], axis=1)
    f = np.clip(f, -1.0, 1.0)
    return f[0] if np.ndim(psi) == 1 else f


class ShotCounter:
    """Tallies circuit executions and shots consumed by sampled feature extraction."""

    def __init__(self):
        self.circuits = 0
        self.shots = 0
        self.settings_calls = 0

    def add(self, n_samples: int, n_settings: int, shots: int):
        self.circuits += n_samples * n_settings
        self.shots += n_samples * n_settings * shots
        self.settings_calls += n_settings

    def reset(self):
        self.circuits = self.shots = self.settings_calls = 0


def _counts(rng: np.random.Generator, shots: int, probs: np.ndarray) -> np.ndarray:
    p = np.clip(probs, 0.0, None)
    p = p / p.sum(axis=1, keepdims=True)
    return rng.multinomial(shots, p)


def sampled_features(spec: CircuitSpec, psi: np.ndarray, shots: int, rng: np.random.Generator,
                     counter: ShotCounter | None = None) -> np.ndarray:
    """Shot estimates of the Pauli features from one Z-basis and one X-basis setting.

    Each setting draws ``shots`` bitstrings per sample; single-qubit terms are
    the mean of ``(-1)^bit`` and pair terms the mean of ``(-1)^(bit_i xor bit_j)``.
    """
    if int(shots) < 1:
        raise ConfigError(f"shots must be >= 1, got {shots}")
    pz, px = _basis_probs(spec, psi)
    table = _sign_table(spec.n_qubits)
    cz = _counts(rng, shots, pz)
    cx = _counts(rng, shots, px)
    f = np.concatenate([cz @ table, cx @ table], axis=1) / shots
    if counter is not None:
        counter.add(pz.shape[0], N_GROUPS, int(shots))
    return f[0] if np.ndim(psi) == 1 else f


def circuit_features(spec: CircuitSpec, angles, theta, shots: int | None, rng=None,
                     counter: ShotCounter | None = None) -> np.ndarray:
    """Angles to features in one call; ``shots=None`` selects exact expectations."""
    psi = build_state(spec, angles, theta)
    if shots is None:
        if counter is not None:
            counter.add(np.atleast_2d(psi).shape[0], N_GROUPS, 0)
        return exact_features(spec, psi)
    return sampled_features(spec, psi, shots, rng, counter)


def theta_to_text(spec: CircuitSpec, theta) -> str:
    theta = np.asarray(theta, dtype=float)
    header = f"# n_qubits={spec.n_qubits} n_layers={spec.n_layers}\n"
    return header + "\n".join(repr(float(t)) for t in theta) + "\n"


def theta_from_text(text: str) -> tuple[CircuitSpec, np.ndarray]:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError("theta file missing '# n_qubits=.. n_layers=..' header")
    fields = dict(tok.split("=") for tok in lines[0][1:].split())
    spec = CircuitSpec(int(fields["n_qubits"]), int(fields["n_layers"]))
    theta = np.array([float(v) for v in lines[1:]])
    if theta.shape != (spec.n_params,):
        raise DimensionError(f"theta file has {theta.size} values, header implies {spec.n_params}")
    return spec, theta
