"""Entropy measures over explicit distributions, the classical CHSH optimum,
and summary statistics for protocol transcripts."""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from .devices import Ext
from .referee import Transcript

PROB_TOL = 1e-12


class DistributionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Distribution:
    """A finite distribution over equal-length bit-strings."""

    support: tuple[str, ...]
    probabilities: np.ndarray

    def __init__(self, support, probabilities):
        support = tuple(str(s) for s in support)
        probs = np.asarray(probabilities, dtype=float)
        if len(support) == 0:
            raise DistributionError("empty support")
        if probs.shape != (len(support),):
            raise DistributionError("support and probabilities differ in length")
        if len(set(support)) != len(support):
            raise DistributionError("support entries must be distinct")
        if len({len(s) for s in support}) != 1 or any(set(s) - {"0", "1"} for s in support):
            raise DistributionError("support must hold bit-strings of one length")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise DistributionError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "Distribution":
        return cls(list(mapping), list(mapping.values()))

    @classmethod
    def uniform(cls, n_bits: int) -> "Distribution":
        support = [format(i, f"0{n_bits}b") for i in range(2**n_bits)]
        return cls(support, np.full(len(support), 1.0 / len(support)))

    @classmethod
    def empirical(cls, samples) -> "Distribution":
        counts: dict[str, int] = defaultdict(int)
        for s in samples:
            counts[str(s)] += 1
        total = sum(counts.values())
        keys = sorted(counts)
        return cls(keys, [counts[key] / total for key in keys])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.support, self.probabilities.tolist()))

    def __len__(self):
        return len(self.support)


def min_entropy(d: Distribution) -> float:
    return -math.log2(float(d.probabilities.max()))


def statistical_distance(p: Distribution, q: Distribution) -> float:
    pd, qd = p.as_dict(), q.as_dict()
    keys = set(pd) | set(qd)
    return 0.5 * math.fsum(abs(pd.get(x, 0.0) - qd.get(x, 0.0)) for x in keys)


def smoothing_cap(d: Distribution, eps: float) -> float:
    """Smallest cap ``lam`` with ``sum(max(p - lam, 0)) <= eps``.

    The excess above a cap is ``max_j (S_j - j * lam)`` over prefix sums ``S_j``
    of the sorted probabilities, so the cap is ``max_j (S_j - eps) / j``.
    """
    if not 0.0 <= eps < 1.0:
        raise DistributionError(f"eps must lie in [0, 1), got {eps}")
    p = np.sort(d.probabilities)[::-1]
    prefix = np.cumsum(p)
    j = np.arange(1, len(p) + 1)
    return float(max(0.0, np.max((prefix - eps) / j)))


def smooth_min_entropy(d: Distribution, eps: float) -> float:
    """Classical smooth min-entropy.

    Mass above the cap is moved onto fresh outcomes below it, so the
    smoothed distribution stays within statistical distance ``eps``.
    """
    if eps == 0:
        return min_entropy(d)
    return -math.log2(smoothing_cap(d, eps))


def smoothcap_witness(d: Distribution, eps: float, alpha: float) -> tuple[list[str], float] | None:
    """Heavy set ``{x : p(x) >= 2**-alpha}`` and its mass, when the smooth
    min-entropy is at most ``alpha``; ``None`` otherwise."""
    if smooth_min_entropy(d, eps) > alpha:
        return None
    floor = 2.0 ** (-alpha)
    heavy = [x for x, px in zip(d.support, d.probabilities) if px >= floor]
    mass = math.fsum(px for px in d.probabilities if px >= floor)
    return heavy, mass


def chsh_success(f_a, f_b) -> float:
    """Success of a deterministic strategy under uniform CHSH inputs."""
    wins = sum(((f_a(x) ^ f_b(y)) == (x & y)) for x in (0, 1) for y in (0, 1))
    return wins / 4


def deterministic_strategies():
    """All 16 deterministic pairs, as ``((fa(0), fa(1)), (fb(0), fb(1)))`` tables."""
    tables = list(itertools.product((0, 1), repeat=2))
    return [(ta, tb) for ta in tables for tb in tables]


def strategy_success_table() -> np.ndarray:
    return np.array([chsh_success(lambda x, ta=ta: ta[x], lambda y, tb=tb: tb[y]) for ta, tb in deterministic_strategies()])


def classical_chsh_optimum() -> float:
    return float(strategy_success_table().max())


def wilson_interval(successes: int, trials: int, alpha: float = 0.05) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    low, high = proportion_confint(successes, trials, alpha=alpha, method="wilson")
    return float(low), float(high)


def _symbol_label(s) -> str:
    return s.label if isinstance(s, Ext) else str(s)


def transcript_stats(t: Transcript) -> dict:
    """Mismatch rates per input pair with 95% Wilson intervals, and pass rates.

    A mismatch is a round counted against the block: ``a xor b != x and y``
    in Protocol A, ``a != b`` in Protocol B.
    """
    groups: dict[tuple[bool, str, str], list] = defaultdict(list)
    for rec in t.blocks:
        groups[(rec.is_bell, _symbol_label(rec.x), _symbol_label(rec.y))].append(rec)
    rows = []
    for (is_bell, x, y), recs in sorted(groups.items()):
        mismatches = sum(r.mismatch_count for r in recs)
        rounds = sum(len(r.a) for r in recs)
        low, high = wilson_interval(mismatches, rounds)
        rows.append(
            {
                "bell": is_bell,
                "x": x,
                "y": y,
                "blocks": len(recs),
                "blocks_passed": sum(r.passed for r in recs),
                "rounds": rounds,
                "mismatches": mismatches,
                "mismatch_rate": mismatches / rounds if rounds else 0.0,
                "wilson_low": low,
                "wilson_high": high,
            }
        )
    bell = [r for r in t.blocks if r.is_bell]
    plain = [r for r in t.blocks if not r.is_bell]

    def _pass_rate(recs):
        return sum(r.passed for r in recs) / len(recs) if recs else None

    return {
        "protocol": t.protocol,
        "accepted": t.accepted,
        "blocks_played": len(t.blocks),
        "blocks_total": t.m,
        "bell_blocks_played": len(bell),
        "non_bell_blocks_played": len(plain),
        "bell_pass_rate": _pass_rate(bell),
        "non_bell_pass_rate": _pass_rate(plain),
        "pass_rate": _pass_rate(t.blocks),
        "per_input_pair": rows,
    }
