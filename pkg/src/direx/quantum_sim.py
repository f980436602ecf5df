"""Two-qubit real-amplitude statevectors and single-qubit projective measurements.

A measurement angle ``theta`` selects the basis
``{cos θ|0> + sin θ|1>,  sin θ|0> - cos θ|1>}``; the first vector is outcome 0.
For the EPR pair the two outcomes agree with probability ``cos²(θA - θB)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-12
_SNAP = 1e-12


class StateError(ValueError):
    """Raised for an unnormalized or malformed state."""


@dataclass(frozen=True)
class TwoQubitState:
    """Amplitudes over the basis 00, 01, 10, 11 (first qubit is Alice's)."""

    amplitudes: tuple[float, float, float, float]

    def __post_init__(self):
        amps = tuple(float(a) for a in self.amplitudes)
        if len(amps) != 4:
            raise StateError("a two-qubit state needs exactly 4 amplitudes")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return math.sqrt(sum(a * a for a in self.amplitudes))

    def is_normalized(self) -> bool:
        return abs(sum(a * a for a in self.amplitudes) - 1.0) <= NORM_TOL

    def matrix(self) -> np.ndarray:
        # row index = Alice's qubit, column = Bob's
        return np.array(self.amplitudes, dtype=float).reshape(2, 2)


def normalize_angle(theta: float) -> float:
    """Map an angle into (-π, π]."""
    t = math.remainder(float(theta), 2 * math.pi)
    if t == -math.pi:
        t = math.pi
    return t


def basis(theta: float) -> np.ndarray:
    """Rows are the outcome-0 and outcome-1 vectors of the basis at ``theta``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [s, -c]])


def epr_pair() -> TwoQubitState:
    r = 1 / math.sqrt(2)
    return TwoQubitState((r, 0.0, 0.0, r))


def _require_normalized(state: TwoQubitState) -> None:
    if not state.is_normalized():
        raise StateError(f"state is not normalized (norm={state.norm!r})")


def joint_outcome_distribution(state: TwoQubitState, theta_a: float, theta_b: float) -> np.ndarray:
    """``P[a, b]`` for measuring Alice's qubit at ``theta_a`` and Bob's at ``theta_b``.

    Computed by projecting the statevector onto each product basis vector.
    """
    _require_normalized(state)
    amp = basis(theta_a) @ state.matrix() @ basis(theta_b).T
    probs = amp**2
    return probs / probs.sum()


def epr_joint_distribution(theta_a: float, theta_b: float) -> np.ndarray:
    """Closed form of :func:`joint_outcome_distribution` for the EPR pair."""
    agree = math.cos(theta_a - theta_b) ** 2
    return np.array([[agree / 2, (1 - agree) / 2], [(1 - agree) / 2, agree / 2]])


def agreement_probability(theta_a: float, theta_b: float) -> float:
    return math.cos(theta_a - theta_b) ** 2


def _snap(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, 1.0)
    p = np.where(p < _SNAP, 0.0, p)
    return np.where(p > 1.0 - _SNAP, 1.0, p)


def measure_first(state: TwoQubitState, theta: float, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Measure Alice's qubit of ``len(u)`` fresh copies of ``state``.

    ``u`` holds one uniform in [0, 1) per copy.  Returns the outcomes and the
    two possible normalized post-measurement states of Bob's qubit (row o is
    Bob's state after Alice sees outcome o).
    """
    _require_normalized(state)
    residual = basis(theta) @ state.matrix()
    weights = (residual**2).sum(axis=1)
    p0 = float(_snap(np.array(weights[0] / weights.sum())))
    outcomes = (np.asarray(u) >= p0).astype(np.uint8)
    safe = np.where(weights > 0, np.sqrt(weights), 1.0)
    return outcomes, residual / safe[:, None]


def measure_collapsed(post_states: np.ndarray, which: np.ndarray, theta: float, u: np.ndarray) -> np.ndarray:
    """Measure Bob's qubits, copy ``i`` being in state ``post_states[which[i]]``."""
    p0 = _snap((np.asarray(post_states) @ basis(theta)[0]) ** 2)
    return (np.asarray(u) >= p0[np.asarray(which)]).astype(np.uint8)


def measure_qubits(qubits: np.ndarray, theta: float, u: np.ndarray) -> np.ndarray:
    """Measure a batch of single-qubit real states (shape (n, 2)) at ``theta``."""
    p0 = _snap((np.asarray(qubits) @ basis(theta)[0]) ** 2)
    return (np.asarray(u) >= p0).astype(np.uint8)


def sample_joint(state: TwoQubitState, theta_a: float, theta_b: float, rng: np.random.Generator) -> tuple[int, int]:
    """One ``(a, b)`` pair drawn from the joint distribution with a single uniform."""
    probs = joint_outcome_distribution(state, theta_a, theta_b).ravel()
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    idx = min(idx, 3)
    return idx >> 1, idx & 1


def sample_joint_many(
    state: TwoQubitState, theta_a: float, theta_b: float, rng: np.random.Generator, n: int
) -> tuple[np.ndarray, np.ndarray]:
    probs = joint_outcome_distribution(state, theta_a, theta_b).ravel()
    idx = np.searchsorted(np.cumsum(probs), rng.random(n), side="right")
    idx = np.minimum(idx, 3)
    return (idx >> 1).astype(np.uint8), (idx & 1).astype(np.uint8)
