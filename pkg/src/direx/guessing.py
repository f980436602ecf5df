"""The guessing game: Alice tries to learn Bob's secret bit through the boxes.

Bob feeds his secret ``y`` to box B; Alice feeds a random ``x`` to box A and
claims ``y = 0`` exactly when her output block is within relative Hamming
distance ``decision_radius`` of ``b0``, the block B most often emits on input 0.
Any success rate noticeably above 1/2 means the boxes signal.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .analysis import wilson_interval
from .devices import DevicePair, GameKind, GameKindError
from .rng import random_bits


@dataclass(frozen=True)
class GuessingGameConfig:
    k: int
    trials: int
    b0: tuple[int, ...] | None = None
    calibration_samples: int = 1000
    decision_radius: float = 0.2

    def __post_init__(self):
        if self.k < 1 or self.trials < 1:
            raise ValueError("k and trials must be positive")
        if not 0.16 < self.decision_radius < 0.34:
            raise ValueError(f"decision_radius must lie in (0.16, 0.34), got {self.decision_radius}")
        if self.b0 is not None and len(self.b0) != self.k:
            raise ValueError("b0 must have length k")
        if self.b0 is None and self.calibration_samples < 1:
            raise ValueError("calibration needs at least one sample")


@dataclass
class GuessingGameResult:
    trials: int
    successes: int
    estimate: float
    wilson_ci: tuple[float, float]
    b0: list[int] = field(repr=False)
    bound: float | None = None


def lemma3_bound(gamma: float, beta: float) -> float:
    """Guaranteed success when ``Pr(B = b0 | y=0) >= 1 - gamma`` and a block
    breaks the CHSH condition with probability at most ``beta``."""
    if gamma < 0 or beta < 0:
        raise ValueError("gamma and beta must be nonnegative")
    return 0.5 + (0.25 - 2 * beta - gamma)


def relative_distance(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.count_nonzero(np.asarray(u) != np.asarray(v))) / len(u)


def triangle_core_holds(a0: np.ndarray, a1: np.ndarray, b: np.ndarray) -> bool:
    """If ``a0`` is 0.16-close to ``b`` and ``a1`` is 0.84-far from it, then
    ``a0`` and ``a1`` are at least 0.68 apart.  Vacuously true otherwise."""
    # integer form avoids float rounding at the shell boundaries
    k = len(b)
    n0 = int(np.count_nonzero(a0 != b))
    n1 = int(np.count_nonzero(a1 != b))
    if 100 * n0 <= 16 * k and 100 * n1 >= 84 * k:
        return 100 * int(np.count_nonzero(a0 != a1)) >= 68 * k
    return True


def calibrate_b0(pair: DevicePair, k: int, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Most frequent B block on input 0 over ``samples`` fresh runs (ties: smallest)."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    counts: Counter[bytes] = Counter()
    for _ in range(samples):
        _, b = pair.play_block(0, 0, k, rng)
        counts[b.astype(np.uint8).tobytes()] += 1
    best = max(counts.values())
    winner = min(key for key, c in counts.items() if c == best)
    return np.frombuffer(winner, dtype=np.uint8).copy()


def run_guessing_game(
    pair: DevicePair,
    config: GuessingGameConfig,
    rng: np.random.Generator,
    bound: float | None = None,
) -> GuessingGameResult:
    if pair.kind is not GameKind.CHSH:
        raise GameKindError("the guessing game needs a CHSH device pair")
    k = config.k
    if config.b0 is None:
        b0 = calibrate_b0(pair, k, config.calibration_samples, rng)
    else:
        b0 = np.asarray(config.b0, dtype=np.uint8)
    limit = config.decision_radius * k
    successes = 0
    for _ in range(config.trials):
        y, x = (int(v) for v in random_bits(rng, 2))
        a, _ = pair.play_block(x, y, k, rng)
        claim = 0 if np.count_nonzero(a != b0) < limit else 1
        successes += claim == y
    return GuessingGameResult(
        trials=config.trials,
        successes=successes,
        estimate=successes / config.trials,
        wilson_ci=wilson_interval(successes, config.trials),
        b0=[int(v) for v in b0],
        bound=bound,
    )
