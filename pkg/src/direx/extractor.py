"""The t-XOR extractor.

Output bit ``i`` is the parity of ``t`` positions of the input, where the
positions are read off the seed bits selected by set ``S_i`` of a weak design.
Brute-force helpers (exact strong-extractor distance, XOR-code list
decoding) only work at desk scale and guard their input sizes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .analysis import Distribution

DEFAULT_RHO = 1.25
MAX_ENUMERATION = 50_000_000


class DesignError(ValueError):
    """No design meeting the overlap bound fits the seed budget."""

    def __init__(self, message: str, j: int | None = None):
        super().__init__(message)
        self.j = j


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class WeakDesign:
    s: int
    set_size: int
    r: int
    rho: float
    sets: tuple[tuple[int, ...], ...]

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "set_size": self.set_size,
            "r": self.r,
            "rho": self.rho,
            "sets": [list(S) for S in self.sets],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "WeakDesign":
        return cls(
            s=int(d["s"]),
            set_size=int(d["set_size"]),
            r=int(d["r"]),
            rho=float(d["rho"]),
            sets=tuple(tuple(sorted(int(i) for i in S)) for S in d["sets"]),
        )


def overlap_weights(sets: Sequence[Sequence[int]]) -> list[int]:
    """``sum_{i<j} 2**|S_i & S_j|`` for every ``j``."""
    frozen = [frozenset(S) for S in sets]
    return [sum(2 ** len(frozen[i] & frozen[j]) for i in range(j)) for j in range(len(frozen))]


def design_violations(design: WeakDesign) -> list[str]:
    problems = []
    if len(design.sets) != design.r:
        problems.append(f"expected {design.r} sets, found {len(design.sets)}")
    for j, S in enumerate(design.sets):
        if len(set(S)) != design.set_size or len(S) != design.set_size:
            problems.append(f"set {j} has {len(set(S))} distinct elements, expected {design.set_size}")
        if any(e < 0 or e >= design.s for e in S):
            problems.append(f"set {j} leaves the universe [0, {design.s})")
    bound = Fraction(repr(design.rho)) * (design.r - 1)
    for j, w in enumerate(overlap_weights(design.sets)):
        if w > bound:
            problems.append(f"set {j}: overlap weight {w} exceeds rho*(r-1) = {float(bound)}")
    return problems


def build_weak_design(r: int, set_size: int, rho: float = DEFAULT_RHO, s_budget: int | None = None) -> WeakDesign:
    """Greedy weak design over the universe ``range(s_budget)``.

    Sets are built one element at a time; each new element is the one that
    adds the least overlap weight against the sets already fixed (lowest
    index on ties).  Raises :class:`DesignError` at the first set ``j`` whose
    weight exceeds ``rho * (r - 1)``.
    """
    if r < 1 or set_size < 1:
        raise ValueError("r and set_size must be positive")
    if rho <= 1:
        raise ValueError("rho must exceed 1")
    if s_budget is None:
        s_budget = r * set_size
    if s_budget < set_size:
        raise ValueError("s_budget must be at least set_size")
    bound = Fraction(repr(float(rho))) * (r - 1)
    members = np.zeros((r, s_budget), dtype=bool)
    sets: list[tuple[int, ...]] = []
    for j in range(r):
        overlap = np.zeros(j, dtype=np.int64)
        chosen = np.zeros(s_budget, dtype=bool)
        for _ in range(set_size):
            # adding e doubles 2**|S_i & S| for every earlier S_i containing e
            cost = (2.0**overlap) @ members[:j] if j else np.zeros(s_budget)
            cost = np.where(chosen, np.inf, cost)
            e = int(np.argmin(cost))
            chosen[e] = True
            overlap += members[:j, e]
        members[j] = chosen
        sets.append(tuple(int(i) for i in np.flatnonzero(chosen)))
        weight = int(sum(2 ** int(c) for c in overlap))
        if weight > bound:
            raise DesignError(
                f"set {j}: overlap weight {weight} exceeds rho*(r-1) = {float(bound)} with s = {s_budget}", j
            )
    design = WeakDesign(s_budget, set_size, r, float(rho), tuple(sets))
    problems = design_violations(design)
    if problems:
        raise DesignError("; ".join(problems))
    return design


def _log2_exact(m: int) -> int:
    if m < 2 or m & (m - 1):
        raise ValueError(f"m must be a power of two >= 2, got {m}")
    return m.bit_length() - 1


@dataclass(frozen=True)
class ExtractorParams:
    m: int
    t: int
    r: int
    design: WeakDesign

    def __post_init__(self):
        bits = _log2_exact(self.m)
        if self.t < 1:
            raise ValueError("t must be positive")
        if self.design.r != self.r:
            raise ValueError(f"design has {self.design.r} sets but r = {self.r}")
        if self.design.set_size != self.t * bits:
            raise ValueError(f"design set size must be t*log2(m) = {self.t * bits}")

    @property
    def s(self) -> int:
        return self.design.s

    @property
    def index_bits(self) -> int:
        return _log2_exact(self.m)

    @classmethod
    def build(cls, m: int, t: int, r: int, rho: float = DEFAULT_RHO, s: int | None = None) -> "ExtractorParams":
        design = build_weak_design(r, t * _log2_exact(m), rho, s)
        return cls(m, t, r, design)


def _bits(v, n: int | None = None) -> np.ndarray:
    arr = np.asarray(v, dtype=np.uint8).ravel()
    if np.any(arr > 1):
        raise ValueError("bit vectors hold only 0 and 1")
    if n is not None and len(arr) != n:
        raise ValueError(f"expected {n} bits, got {len(arr)}")
    return arr


def txor_bit(x, indices: Sequence[int]) -> int:
    x = _bits(x)
    idx = list(indices)
    if any(i < 0 or i >= len(x) for i in idx):
        raise IndexError(f"index out of range for a {len(x)}-bit input: {idx}")
    return int(np.bitwise_xor.reduce(x[idx])) if idx else 0


def txor_encode(x, t: int) -> dict[tuple[int, ...], int]:
    """Full t-XOR codeword: parity of every t-element subset of positions."""
    x = _bits(x)
    return {c: txor_bit(x, c) for c in itertools.combinations(range(len(x)), t)}


def seed_to_subsets(seed, params: ExtractorParams) -> list[list[int]]:
    seed = _bits(seed, params.s)
    w = params.index_bits
    out = []
    for S in params.design.sets:
        chunk_bits = seed[list(S)].reshape(params.t, w)
        weights = 1 << np.arange(w - 1, -1, -1)
        out.append([int(v) for v in chunk_bits.astype(np.int64) @ weights])
    return out


def extract(x, seed, params: ExtractorParams) -> np.ndarray:
    """E_t(x, seed) as an r-bit vector; a 2-D ``x`` of shape (n, m) gives (n, r)."""
    arr = np.asarray(x, dtype=np.uint8)
    if arr.ndim == 2:
        if arr.shape[1] != params.m or np.any(arr > 1):
            raise ValueError(f"expected rows of {params.m} bits")
        idx = np.array(seed_to_subsets(seed, params), dtype=np.int64)  # (r, t)
        return np.bitwise_xor.reduce(arr[:, idx], axis=-1)
    x = _bits(arr, params.m)
    return np.array([txor_bit(x, idx) for idx in seed_to_subsets(seed, params)], dtype=np.uint8)


def _all_subsets(params: ExtractorParams) -> np.ndarray:
    """Index lists for every seed, shape (2**s, r, t); seed integers are MSB-first."""
    s, w = params.s, params.index_bits
    seeds = np.arange(2**s, dtype=np.int64)
    positions = np.array(params.design.sets, dtype=np.int64).reshape(params.r, params.t, w)
    bits = (seeds[:, None, None, None] >> (s - 1 - positions)[None]) & 1
    return (bits << np.arange(w - 1, -1, -1)[None, None, None, :]).sum(axis=-1)


def _strings_to_bits(strings: Sequence[str]) -> np.ndarray:
    return np.array([[int(c) for c in s] for s in strings], dtype=np.uint8)


def strong_extractor_distance(source: Distribution, params: ExtractorParams) -> float:
    """Exact distance of ``(seed, E(X, seed))`` from ``(seed, uniform)``."""
    if params.m > 14:
        raise InstanceTooLarge(f"m = {params.m} exceeds the enumeration limit of 14")
    if len(source.support[0]) != params.m:
        raise ValueError("source strings must have length m")
    n_seeds = 2**params.s
    if len(source) * n_seeds * params.r * params.t > MAX_ENUMERATION:
        raise InstanceTooLarge("source support times seed space is too large to enumerate")
    X = _strings_to_bits(source.support)
    subsets = _all_subsets(params)  # (seeds, r, t)
    z = np.bitwise_xor.reduce(X[:, subsets], axis=-1)  # (n_x, seeds, r)
    codes = (z.astype(np.int64) << np.arange(params.r - 1, -1, -1)).sum(axis=-1)
    n_out = 2**params.r
    flat = (np.arange(n_seeds)[None, :] * n_out + codes).ravel()
    weights = np.repeat(source.probabilities, n_seeds)
    joint = np.bincount(flat, weights=weights, minlength=n_seeds * n_out).reshape(n_seeds, n_out)
    per_seed = 0.5 * np.abs(joint - 1.0 / n_out).sum(axis=1)
    return float(per_seed.mean())


def list_decode_radius(eta: float, t: int) -> float:
    return math.log(2 / eta) / t


def txor_agreements(predictions: Mapping[Sequence[int], int], m: int) -> np.ndarray:
    """Fraction of predicted parities matched by every ``x`` in ``{0,1}^m``.

    Row ``v`` of the result is the string whose bits are the binary digits of
    ``v``, most significant first.
    """
    keys = [tuple(k) for k in predictions]
    if not keys:
        raise ValueError("no predictions given")
    if any(i < 0 or i >= m for k in keys for i in k):
        raise IndexError("prediction key index out of range")
    lengths = {len(k) for k in keys}
    if len(lengths) != 1:
        raise ValueError("prediction keys must all have length t")
    key_arr = np.array(keys, dtype=np.int64)
    target = np.array([int(predictions[k]) & 1 for k in predictions], dtype=np.uint8)
    xs = np.arange(2**m, dtype=np.int64)
    agree = np.empty(2**m)
    chunk = max(1, 2_000_000 // len(keys))
    for start in range(0, 2**m, chunk):
        block = xs[start : start + chunk]
        X = ((block[:, None] >> (m - 1 - np.arange(m))[None, :]) & 1).astype(np.uint8)
        parities = np.bitwise_xor.reduce(X[:, key_arr], axis=-1)
        agree[start : start + chunk] = (parities == target).mean(axis=1)
    return agree


def list_decode_txor(
    predictions: Mapping[Sequence[int], int],
    eta: float,
    m: int,
    t: int,
    deduplicate: bool = True,
) -> list[str]:
    """Brute-force list decoding of the t-XOR code.

    Returns every ``x`` whose parities match at least ``1/2 + eta`` of the
    predictions, best first.  With ``deduplicate`` the list is thinned so that
    no two kept strings are within relative distance ``ln(2/eta)/t``; every
    dropped string lies within that radius of a kept one.
    """
    if m > 16:
        raise InstanceTooLarge(f"m = {m} exceeds the brute-force limit of 16")
    if not eta > 2 * t * t / 2**m:
        raise ValueError(f"eta must exceed 2t^2/2^m = {2 * t * t / 2**m}")
    if any(len(k) != t for k in predictions):
        raise ValueError("prediction keys must have length t")
    agree = txor_agreements(predictions, m)
    hits = np.flatnonzero(agree >= 0.5 + eta - 1e-12)
    order = sorted(hits.tolist(), key=lambda v: (-agree[v], v))
    strings = [format(v, f"0{m}b") for v in order]
    if not deduplicate:
        return strings
    radius = list_decode_radius(eta, t)
    kept: list[int] = []
    for v in order:
        if all(bin(v ^ u).count("1") / m > radius for u in kept):
            kept.append(v)
    return [format(v, f"0{m}b") for v in kept]
