"""The referee: runs the two block-structured certification protocols.

Protocol A plays the CHSH game.  Protocol B plays the extended game, where
equal inputs must produce equal output blocks.  Both split the run into ``m``
blocks of ``k`` identical rounds, mark a random subset of blocks as Bell
blocks, and abort at the first block that fails its check.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .devices import DevicePair, Ext, GameKind, GameKindError
from .rng import bernoulli_bits, check_seed, random_bits, substream


class ParameterError(ValueError):
    pass


def block_length(ell: int) -> int:
    """``ceil(10 * log2(ell)**2)``."""
    return math.ceil(10 * math.log2(ell) ** 2)


def _exact(x: float) -> Fraction:
    # decimal literal semantics: 0.16 means 16/100, not its binary neighbour
    return Fraction(repr(float(x)))


def _check_fraction(name: str, value: float) -> None:
    if not 0.0 < value < 0.25:
        raise ParameterError(f"{name} must lie in (0, 1/4), got {value}")


@dataclass(frozen=True)
class ProtocolAParams:
    ell: int
    delta: int
    k_override: int | None = None
    bell_probability: float | None = None
    mismatch_threshold_fraction: float = 0.16
    seed: int = 0

    def __post_init__(self):
        if self.ell < 2 and self.k_override is None:
            raise ParameterError("ell must be >= 2 unless k_override is given")
        if self.ell < 1:
            raise ParameterError("ell must be positive")
        if self.delta < 1:
            raise ParameterError("delta must be a positive integer")
        if self.k_override is not None and self.k_override < 1:
            raise ParameterError("k_override must be positive")
        p = self.p
        if not 0.0 <= p <= 1.0:
            raise ParameterError(f"bell_probability out of range: {p}")
        _check_fraction("mismatch_threshold_fraction", self.mismatch_threshold_fraction)
        check_seed(self.seed)

    @property
    def k(self) -> int:
        return self.k_override if self.k_override is not None else block_length(self.ell)

    @property
    def m(self) -> int:
        return self.delta * self.ell

    @property
    def p(self) -> float:
        return 1.0 / self.ell if self.bell_probability is None else float(self.bell_probability)

    @property
    def threshold(self) -> int:
        """Maximum tolerated number of CHSH losses in a block."""
        return math.ceil(_exact(self.mismatch_threshold_fraction) * self.k)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(protocol="A", k=self.k, m=self.m, bell_probability=self.p, threshold=self.threshold)
        return d


@dataclass(frozen=True)
class ProtocolBParams:
    ell: int
    C: int = 1
    k_override: int | None = None
    m_override: int | None = None
    window_low: float = 0.49
    window_high: float = 0.51
    mismatch_threshold: float = 0.16
    bell_probability: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.ell < 2 and (self.k_override is None or self.m_override is None):
            raise ParameterError("ell must be >= 2 unless k_override and m_override are given")
        if self.ell < 1 or self.C < 1:
            raise ParameterError("ell and C must be positive")
        for name in ("k_override", "m_override"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ParameterError(f"{name} must be positive")
        if not (0.0 <= self.window_low < 0.5 < self.window_high <= 1.0):
            raise ParameterError(
                f"window must satisfy 0 <= low < 0.5 < high <= 1, got [{self.window_low}, {self.window_high}]"
            )
        _check_fraction("mismatch_threshold", self.mismatch_threshold)
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"bell_probability out of range: {self.p}")
        check_seed(self.seed)

    @property
    def k(self) -> int:
        return self.k_override if self.k_override is not None else block_length(self.ell)

    @property
    def m(self) -> int:
        if self.m_override is not None:
            return self.m_override
        return math.ceil(self.C * self.ell * math.log2(self.ell) ** 2)

    @property
    def p(self) -> float:
        return 1.0 / self.ell if self.bell_probability is None else float(self.bell_probability)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(protocol="B", k=self.k, m=self.m, bell_probability=self.p)
        return d


def params_for_output_a(n: int, eps: float, C: float = 2.0, seed: int = 0, **overrides) -> ProtocolAParams:
    """Protocol A parameters for ``n`` bits of min-entropy at security ``eps``.

    ``delta = 1000 * ceil(log2(1/eps))`` and ``ell = ceil(C * n)``; the
    constant ``C`` has no fixed value and is left to the caller.
    """
    if not 0 < eps < 1:
        raise ParameterError("eps must lie in (0, 1)")
    delta = 1000 * math.ceil(math.log2(1 / eps))
    return ProtocolAParams(ell=math.ceil(C * n), delta=delta, seed=seed, **overrides)


def params_for_output_b(n: int, alpha: float, gamma: float, seed: int = 0, **overrides) -> ProtocolBParams:
    """Protocol B parameters: ``C = ceil(100 alpha)``, ``ell = ceil(n ** (1/gamma))``."""
    if gamma <= 0 or gamma > 1 / (10 + 8 * alpha):
        raise ParameterError("gamma must lie in (0, 1/(10 + 8 alpha)]")
    return ProtocolBParams(ell=math.ceil(n ** (1 / gamma)), C=math.ceil(100 * alpha), seed=seed, **overrides)


# Desk-scale presets: the asymptotic constants reject honest boxes at small ell.
DESK_A = dict(ell=100, delta=5, k_override=10_000)
DESK_B = dict(ell=100, C=1, k_override=100_000, m_override=200)


@dataclass
class BlockRecord:
    index: int
    is_bell: bool
    x: object
    y: object
    a: np.ndarray
    b: np.ndarray
    mismatch_count: int
    passed: bool


@dataclass
class RandomnessCost:
    shannon_bits: float
    raw_bits_drawn: int


@dataclass
class Transcript:
    protocol: str
    params: dict
    pair_name: str
    bell_set: list[int]
    blocks: list[BlockRecord] = field(default_factory=list)
    accepted: bool = False
    first_failure: int | None = None
    randomness_cost: RandomnessCost | None = None
    selection_bits_drawn: int = 0

    @property
    def k(self) -> int:
        return self.params["k"]

    @property
    def m(self) -> int:
        return self.params["m"]

    @property
    def box_uses(self) -> int:
        return len(self.blocks) * self.k

    def output_bits(self, side: str = "B") -> np.ndarray:
        """Concatenated output blocks of one box, in block order."""
        attr = "b" if side == "B" else "a"
        if not self.blocks:
            return np.zeros(0, dtype=np.uint8)
        return np.concatenate([getattr(rec, attr) for rec in self.blocks])


def select_bell_blocks(m: int, p: float, rng: np.random.Generator) -> tuple[list[int], int]:
    """Bell-block indices (each of ``range(m)`` kept with probability ``p``) and bits consumed."""
    flags, consumed = bernoulli_bits(rng, p, m)
    return [int(i) for i in np.flatnonzero(flags)], consumed


def check_block_a(x: int, y: int, a: np.ndarray, b: np.ndarray, threshold: int) -> tuple[int, bool]:
    """Count rounds with ``a xor b != x and y``; fail above ``threshold``."""
    target = np.uint8(x & y)
    count = int(np.count_nonzero((a ^ b) != target))
    return count, count <= threshold


def check_block_b(
    x: Ext, y: Ext, a: np.ndarray, b: np.ndarray, mismatch_threshold: float, low: float, high: float
) -> tuple[int, bool]:
    """Count rounds with ``a != b`` and apply the extended-game acceptance rules."""
    k = len(a)
    count = int(np.count_nonzero(a != b))
    d = Fraction(count, k) if k else Fraction(0)
    if x == y and count == 0:
        return count, True
    if y is Ext.B0 and d <= _exact(mismatch_threshold):
        return count, True
    if x is Ext.A1 and y is Ext.A0 and _exact(low) <= d <= _exact(high):
        return count, True
    return count, False


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def randomness_accounting(transcript: Transcript) -> RandomnessCost:
    """Ideal (Shannon) and actual randomness spent by the referee.

    Bell-block selection costs ``m * h(p)`` bits ideally; every Bell block
    that was played costs 2 more bits for its inputs.
    """
    n_bell_played = sum(1 for rec in transcript.blocks if rec.is_bell)
    p = transcript.params["bell_probability"]
    shannon = transcript.m * binary_entropy(p) + 2 * n_bell_played
    raw = transcript.selection_bits_drawn + 2 * n_bell_played
    return RandomnessCost(shannon_bits=shannon, raw_bits_drawn=raw)


def _streams(seed: int, trial: int, referee_rng, device_rng):
    if referee_rng is None:
        referee_rng = substream(seed, "referee", trial)
    if device_rng is None:
        device_rng = substream(seed, "devices", trial)
    return referee_rng, device_rng


def run_protocol_a(
    params: ProtocolAParams,
    pair: DevicePair,
    trial: int = 0,
    referee_rng: np.random.Generator | None = None,
    device_rng: np.random.Generator | None = None,
) -> Transcript:
    if pair.kind is not GameKind.CHSH:
        raise GameKindError(f"Protocol A needs a CHSH device pair, got {pair.kind.value}")
    ref, dev = _streams(params.seed, trial, referee_rng, device_rng)
    k, m, threshold = params.k, params.m, params.threshold
    bell, consumed = select_bell_blocks(m, params.p, ref)
    bell_lookup = set(bell)
    t = Transcript("A", params.to_dict(), pair.name, bell, selection_bits_drawn=consumed)
    for i in range(m):
        is_bell = i in bell_lookup
        if is_bell:
            xy = random_bits(ref, 2)
            x, y = int(xy[0]), int(xy[1])
        else:
            x = y = 0
        a, b = pair.play_block(x, y, k, dev)
        count, passed = check_block_a(x, y, a, b, threshold)
        t.blocks.append(BlockRecord(i, is_bell, x, y, a, b, count, passed))
        if not passed:
            t.first_failure = i
            break
    t.accepted = t.first_failure is None
    t.randomness_cost = randomness_accounting(t)
    return t


def run_protocol_b(
    params: ProtocolBParams,
    pair: DevicePair,
    trial: int = 0,
    referee_rng: np.random.Generator | None = None,
    device_rng: np.random.Generator | None = None,
) -> Transcript:
    if pair.kind is not GameKind.EXTENDED:
        raise GameKindError(f"Protocol B needs an extended-game device pair, got {pair.kind.value}")
    ref, dev = _streams(params.seed, trial, referee_rng, device_rng)
    k, m = params.k, params.m
    bell, consumed = select_bell_blocks(m, params.p, ref)
    bell_lookup = set(bell)
    t = Transcript("B", params.to_dict(), pair.name, bell, selection_bits_drawn=consumed)
    for i in range(m):
        is_bell = i in bell_lookup
        if is_bell:
            xy = random_bits(ref, 2)
            x = Ext.A1 if xy[0] else Ext.A0
            y = Ext.B0 if xy[1] else Ext.A0
        else:
            x = y = Ext.A0
        a, b = pair.play_block(x, y, k, dev)
        count, passed = check_block_b(
            x, y, a, b, params.mismatch_threshold, params.window_low, params.window_high
        )
        t.blocks.append(BlockRecord(i, is_bell, x, y, a, b, count, passed))
        if not passed:
            t.first_failure = i
            break
    t.accepted = t.first_failure is None
    t.randomness_cost = randomness_accounting(t)
    return t


def run_protocol(params, pair: DevicePair, trial: int = 0) -> Transcript:
    if isinstance(params, ProtocolAParams):
        return run_protocol_a(params, pair, trial)
    return run_protocol_b(params, pair, trial)


def verify_transcript(t: Transcript) -> list[str]:
    """Recheck a transcript from its stored vectors; returns a list of problems."""
    problems = []
    params = t.params
    k = params["k"]
    bell = set(t.bell_set)
    if any(i < 0 or i >= params["m"] for i in bell):
        problems.append("bell_set holds out-of-range indices")
    for pos, rec in enumerate(t.blocks):
        if rec.index != pos:
            problems.append(f"block {pos}: index {rec.index} out of order")
        if rec.is_bell != (rec.index in bell):
            problems.append(f"block {rec.index}: is_bell flag disagrees with bell_set")
        if len(rec.a) != k or len(rec.b) != k:
            problems.append(f"block {rec.index}: output length differs from k={k}")
            continue
        if t.protocol == "A":
            if not rec.is_bell and (rec.x, rec.y) != (0, 0):
                problems.append(f"block {rec.index}: non-Bell block with inputs ({rec.x},{rec.y})")
            threshold = math.ceil(_exact(params["mismatch_threshold_fraction"]) * k)
            count, passed = check_block_a(rec.x, rec.y, rec.a, rec.b, threshold)
        else:
            if not rec.is_bell and (rec.x, rec.y) != (Ext.A0, Ext.A0):
                problems.append(f"block {rec.index}: non-Bell block with inputs ({rec.x.label},{rec.y.label})")
            count, passed = check_block_b(
                rec.x, rec.y, rec.a, rec.b, params["mismatch_threshold"], params["window_low"], params["window_high"]
            )
        if count != rec.mismatch_count:
            problems.append(f"block {rec.index}: stored mismatch_count {rec.mismatch_count} != {count}")
        if passed != rec.passed:
            problems.append(f"block {rec.index}: stored passed={rec.passed} but recomputed {passed}")
    failures = [rec.index for rec in t.blocks if not rec.passed]
    if failures and failures != [t.blocks[-1].index]:
        problems.append("blocks recorded after the first failure")
    expected_first = failures[0] if failures else None
    if t.first_failure != expected_first:
        problems.append(f"first_failure {t.first_failure} != {expected_first}")
    complete = len(t.blocks) == params["m"]
    if t.accepted != (not failures and complete):
        problems.append("accepted flag inconsistent with block results")
    return problems
