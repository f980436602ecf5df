"""Black-box device pairs and the built-in strategies.

A :class:`DevicePair` is played one block at a time: the referee hands each
endpoint a single input symbol, repeated for ``k`` rounds, and collects one
output bit per round from each side.  In a non-signaling pair the endpoints
never see each other's inputs or outputs; the only thing they share is the
hidden state prepared for the block (fresh EPR pairs, a shared random
string, or nothing).  Alice's endpoint always acts on that state first.

Pairs flagged ``signaling=True`` break this on purpose.  They exist to drive
the guessing-game attack and are never physical.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Callable, Mapping

import numpy as np

from . import quantum_sim as qs
from .rng import random_bits, substream


class GameKind(str, Enum):
    CHSH = "chsh"
    EXTENDED = "extended"


class Ext(Enum):
    """Inputs of the extended CHSH game."""

    A0 = ("A", 0)
    A1 = ("A", 1)
    B0 = ("B", 0)
    B1 = ("B", 1)

    @property
    def label(self) -> str:
        return f"({self.value[0]},{self.value[1]})"

    @classmethod
    def parse(cls, text) -> "Ext":
        if isinstance(text, Ext):
            return text
        cleaned = str(text).strip().strip("()").replace(",", "").replace(" ", "").upper()
        for member in cls:
            if member.name == cleaned:
                return member
        raise ValueError(f"unknown extended-game input {text!r}")


class GameKindError(TypeError):
    """An input symbol does not belong to the pair's game."""


def check_symbol(kind: GameKind, symbol):
    if kind is GameKind.CHSH:
        if isinstance(symbol, Ext) or isinstance(symbol, bool) or symbol not in (0, 1):
            raise GameKindError(f"CHSH devices take a bit, got {symbol!r}")
        return int(symbol)
    if not isinstance(symbol, Ext):
        raise GameKindError(f"extended-game devices take an Ext symbol, got {symbol!r}")
    return symbol


# Honest measurement angles.  Bob's CHSH y=1 angle is -π/8: under the basis
# convention in quantum_sim this gives cos²(π/8) success on input (1, 1).
HONEST_CHSH_ANGLES_A = {0: 0.0, 1: math.pi / 4}
HONEST_CHSH_ANGLES_B = {0: math.pi / 8, 1: -math.pi / 8}
HONEST_EXTENDED_ANGLES = {
    Ext.A0: 0.0,
    Ext.A1: math.pi / 4,
    Ext.B0: math.pi / 8,
    Ext.B1: -math.pi / 8,
}

P_CHSH = math.cos(math.pi / 8) ** 2


class EprRegister:
    """``k`` fresh EPR pairs; Alice measures first and collapses Bob's halves."""

    def __init__(self, k: int):
        self.k = k
        self.state = qs.epr_pair()
        self._alice: np.ndarray | None = None
        self._post: np.ndarray | None = None

    def measure_alice(self, theta: float, u: np.ndarray) -> np.ndarray:
        if self._alice is not None:
            raise RuntimeError("Alice's qubits were already measured")
        self._alice, self._post = qs.measure_first(self.state, theta, u)
        return self._alice

    def measure_bob(self, theta: float, u: np.ndarray) -> np.ndarray:
        # Bob's halves are known only through the collapsed states, not Alice's input
        if self._alice is None:
            raise RuntimeError("Alice must measure before Bob in this simulation")
        return qs.measure_collapsed(self._post, self._alice, theta, u)


class Endpoint:
    """One box.  ``respond_block`` sees only its own input and the shared state."""

    def respond_block(self, symbol, k: int, shared, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def respond(self, symbol, shared, rng: np.random.Generator) -> int:
        return int(self.respond_block(symbol, 1, shared, rng)[0])


class QuantumEndpoint(Endpoint):
    def __init__(self, angles: Mapping, side: str):
        self.angles = dict(angles)
        self.side = side

    def respond_block(self, symbol, k, shared: EprRegister, rng):
        theta = self.angles[symbol]
        u = rng.random(k)
        if self.side == "A":
            return shared.measure_alice(theta, u)
        return shared.measure_bob(theta, u)


class FunctionEndpoint(Endpoint):
    def __init__(self, f: Callable):
        self.f = f

    def respond_block(self, symbol, k, shared, rng):
        return np.full(k, int(self.f(symbol)) & 1, dtype=np.uint8)


class SharedBitEndpoint(Endpoint):
    """Outputs the shared random string, ignoring its input."""

    def respond_block(self, symbol, k, shared: np.ndarray, rng):
        return shared.copy()


class DevicePair:
    def __init__(
        self,
        endpoint_a: Endpoint,
        endpoint_b: Endpoint,
        kind: GameKind,
        name: str,
        prepare: Callable[[int, np.random.Generator], object] | None = None,
        signaling: bool = False,
    ):
        self.endpoint_a = endpoint_a
        self.endpoint_b = endpoint_b
        self.kind = GameKind(kind)
        self.name = name
        self._prepare = prepare
        self.signaling = signaling

    def __repr__(self):
        return f"DevicePair({self.name!r}, kind={self.kind.value}, signaling={self.signaling})"

    def prepare(self, k: int, rng: np.random.Generator):
        return None if self._prepare is None else self._prepare(k, rng)

    def play_block(self, x, y, k: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Feed ``x`` to A and ``y`` to B for ``k`` lockstep rounds."""
        x = check_symbol(self.kind, x)
        y = check_symbol(self.kind, y)
        shared = self.prepare(k, rng)
        a = self.endpoint_a.respond_block(x, k, shared, rng)
        b = self.endpoint_b.respond_block(y, k, shared, rng)
        return a, b

    def play_round(self, x, y, rng: np.random.Generator) -> tuple[int, int]:
        a, b = self.play_block(x, y, 1, rng)
        return int(a[0]), int(b[0])


def honest_chsh_pair() -> DevicePair:
    return DevicePair(
        QuantumEndpoint(HONEST_CHSH_ANGLES_A, "A"),
        QuantumEndpoint(HONEST_CHSH_ANGLES_B, "B"),
        GameKind.CHSH,
        "honest-chsh",
        prepare=lambda k, rng: EprRegister(k),
    )


def honest_extended_pair() -> DevicePair:
    return DevicePair(
        QuantumEndpoint(HONEST_EXTENDED_ANGLES, "A"),
        QuantumEndpoint(HONEST_EXTENDED_ANGLES, "B"),
        GameKind.EXTENDED,
        "honest-extended",
        prepare=lambda k, rng: EprRegister(k),
    )


def classical_deterministic_pair(f_a: Callable, f_b: Callable, kind: GameKind = GameKind.CHSH) -> DevicePair:
    return DevicePair(FunctionEndpoint(f_a), FunctionEndpoint(f_b), kind, "deterministic")


def all_zeros_pair(kind: GameKind = GameKind.CHSH) -> DevicePair:
    pair = classical_deterministic_pair(lambda s: 0, lambda s: 0, kind)
    pair.name = "all-zeros"
    return pair


def shared_random_pair(kind: GameKind = GameKind.CHSH) -> DevicePair:
    """Both boxes output the same shared uniform bit in every round."""
    return DevicePair(
        SharedBitEndpoint(),
        SharedBitEndpoint(),
        kind,
        "shared-random",
        prepare=lambda k, rng: random_bits(rng, k),
    )


class CheatingPair(DevicePair):
    """Low-entropy, openly signaling pair used to exercise the guessing game.

    On input 0, B emits the fixed block ``b0`` with probability ``1 - gamma``
    and a uniformly random block otherwise; on input 1 it always emits a
    uniformly random block.  A reads ``(y, b)`` and answers ``b xor (x and y)``,
    so every block meets the CHSH condition exactly.
    """

    def __init__(self, gamma: float, b0_seed: int):
        if not 0.0 <= gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
        super().__init__(None, None, GameKind.CHSH, "cheating", signaling=True)
        self.gamma = float(gamma)
        self.b0_seed = int(b0_seed)

    def b0(self, k: int) -> np.ndarray:
        return random_bits(substream(self.b0_seed, "cheating-b0", k), k)

    def play_block(self, x, y, k, rng):
        x = check_symbol(self.kind, x)
        y = check_symbol(self.kind, y)
        perturb = rng.random() < self.gamma
        noise = random_bits(rng, k)
        b = self.b0(k) if (y == 0 and not perturb) else noise
        a = b ^ np.uint8(x & y)
        return a.astype(np.uint8), b.astype(np.uint8)


def cheating_low_entropy_pair(gamma: float, b0_seed: int) -> CheatingPair:
    return CheatingPair(gamma, b0_seed)


def _table_function(table, kind: GameKind) -> Callable:
    if callable(table):
        return table
    if isinstance(table, (int, np.integer)) and not isinstance(table, bool):
        value = int(table)
        return lambda s: value
    if kind is GameKind.CHSH:
        values = [int(v) for v in table]
        if len(values) != 2:
            raise ValueError("a CHSH response table needs 2 entries")
        return lambda s: values[s]
    if isinstance(table, Mapping):
        mapping = {Ext.parse(key): int(v) for key, v in table.items()}
    else:
        mapping = dict(zip(Ext, (int(v) for v in table)))
    missing = set(Ext) - set(mapping)
    if missing:
        raise ValueError(f"response table misses inputs {sorted(m.label for m in missing)}")
    return lambda s: mapping[s]


STRATEGIES = ("honest", "all-zeros", "deterministic", "shared-random", "cheating")


def make_pair(name: str, params: Mapping | None = None, kind: GameKind = GameKind.CHSH) -> DevicePair:
    """Build a pair from a strategy name and parameter record (CLI configs)."""
    params = dict(params or {})
    kind = GameKind(kind)
    if name == "honest":
        return honest_chsh_pair() if kind is GameKind.CHSH else honest_extended_pair()
    if name == "honest-chsh":
        return honest_chsh_pair()
    if name == "honest-extended":
        return honest_extended_pair()
    if name == "all-zeros":
        return all_zeros_pair(kind)
    if name == "deterministic":
        return classical_deterministic_pair(
            _table_function(params.get("a", 0), kind), _table_function(params.get("b", 0), kind), kind
        )
    if name == "shared-random":
        return shared_random_pair(kind)
    if name == "cheating":
        if kind is not GameKind.CHSH:
            raise ValueError("the cheating pair only plays the CHSH game")
        return cheating_low_entropy_pair(float(params.get("gamma", 0.0)), int(params.get("b0_seed", 0)))
    raise ValueError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGIES)}")
