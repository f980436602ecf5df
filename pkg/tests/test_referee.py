import math

import numpy as np
import pytest
from scipy.stats import binom

from direx.devices import (
    Ext,
    GameKindError,
    all_zeros_pair,
    cheating_low_entropy_pair,
    honest_chsh_pair,
    honest_extended_pair,
    shared_random_pair,
)
from direx.referee import (
    ParameterError,
    ProtocolAParams,
    ProtocolBParams,
    binary_entropy,
    block_length,
    check_block_a,
    check_block_b,
    randomness_accounting,
    run_protocol_a,
    run_protocol_b,
    select_bell_blocks,
    params_for_output_a,
    params_for_output_b,
    verify_transcript,
)
from direx.rng import substream

SIN2 = math.sin(math.pi / 8) ** 2


def test_derived_parameters():
    p = ProtocolAParams(ell=100, delta=5)
    assert p.k == math.ceil(10 * math.log2(100) ** 2) == 442
    assert p.m == 500
    assert p.p == 0.01
    assert ProtocolAParams(ell=100, delta=5, k_override=10_000).threshold == 1600
    assert ProtocolAParams(ell=100, delta=5, k_override=442).threshold == math.ceil(0.16 * 442) == 71
    b = ProtocolBParams(ell=16, C=2)
    assert b.k == 160
    assert b.m == math.ceil(2 * 16 * 16)
    assert ProtocolBParams(ell=16, k_override=7, m_override=9).m == 9


def test_threshold_is_exact_for_round_products():
    # 0.16 * 25 is 4 exactly; a float product must not round up to 5
    assert ProtocolAParams(ell=4, delta=1, k_override=25).threshold == 4


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(ell=100, delta=5, mismatch_threshold_fraction=0.25),
        dict(ell=100, delta=5, mismatch_threshold_fraction=0.0),
        dict(ell=1, delta=5),
        dict(ell=100, delta=-1),
        dict(ell=100, delta=1, bell_probability=1.5),
    ],
)
def test_bad_protocol_a_params(kwargs):
    with pytest.raises(ParameterError):
        ProtocolAParams(**kwargs)


@pytest.mark.parametrize(
    "kwargs",
    [dict(ell=100, window_low=0.5), dict(ell=100, window_low=0.52, window_high=0.51), dict(ell=100, window_high=1.2)],
)
def test_bad_protocol_b_params(kwargs):
    with pytest.raises(ParameterError):
        ProtocolBParams(**kwargs)


def test_asymptotic_presets():
    p = params_for_output_a(n=10, eps=2**-3, C=2)
    assert (p.ell, p.delta) == (20, 3000)
    q = params_for_output_b(n=2, alpha=0.5, gamma=0.05)
    assert (q.ell, q.C) == (2**20, 50)
    with pytest.raises(ParameterError):
        params_for_output_b(n=2, alpha=1.0, gamma=0.5)


def test_select_bell_blocks_all():
    idx, used = select_bell_blocks(17, 1.0, substream(0, "t"))
    assert idx == list(range(17)) and used == 0


def test_select_bell_blocks_concentration():
    m = 10**5
    idx, _ = select_bell_blocks(m, 0.5, substream(1, "t"))
    assert abs(len(idx) - m / 2) <= 4 * math.sqrt(m / 4)


def test_select_bell_blocks_reproducible():
    assert select_bell_blocks(1000, 0.1, substream(5, "t")) == select_bell_blocks(1000, 0.1, substream(5, "t"))


def test_mean_bell_blocks_protocol_a_is_delta():
    params = ProtocolAParams(ell=20, delta=5, k_override=1, seed=3)
    sizes = [len(select_bell_blocks(params.m, params.p, substream(i, "t"))[0]) for i in range(2000)]
    # |T| ~ Binomial(100, 1/20): mean 5, sd ~2.18
    assert abs(np.mean(sizes) - 5) <= 4 * math.sqrt(100 * 0.05 * 0.95 / 2000)


def test_check_block_a_boundaries():
    k = 100
    a = np.zeros(k, dtype=np.uint8)
    b = np.zeros(k, dtype=np.uint8)
    b[:16] = 1
    assert check_block_a(0, 0, a, b, 16) == (16, True)
    b[16] = 1
    assert check_block_a(0, 0, a, b, 16) == (17, False)
    # x=y=1 demands a xor b = 1 everywhere
    assert check_block_a(1, 1, a, b, 16) == (100 - 17, False)
    assert check_block_a(1, 1, a, 1 - a, 16) == (0, True)


def test_check_block_b_rules():
    k = 100
    a = np.zeros(k, dtype=np.uint8)
    same = a.copy()
    near = a.copy()
    near[:16] = 1
    half = a.copy()
    half[:49] = 1
    half51 = a.copy()
    half51[:51] = 1
    off = a.copy()
    off[:52] = 1
    assert check_block_b(Ext.A0, Ext.A0, a, same, 0.16, 0.49, 0.51)[1]
    assert not check_block_b(Ext.A0, Ext.A0, a, near, 0.16, 0.49, 0.51)[1]
    assert check_block_b(Ext.A1, Ext.B0, a, near, 0.16, 0.49, 0.51)[1]
    near[16] = 1
    assert not check_block_b(Ext.A1, Ext.B0, a, near, 0.16, 0.49, 0.51)[1]
    assert check_block_b(Ext.A1, Ext.A0, a, half, 0.16, 0.49, 0.51)[1]
    assert check_block_b(Ext.A1, Ext.A0, a, half51, 0.16, 0.49, 0.51)[1]
    assert not check_block_b(Ext.A1, Ext.A0, a, off, 0.16, 0.49, 0.51)[1]
    assert not check_block_b(Ext.A1, Ext.A0, a, same, 0.16, 0.49, 0.51)[1]


def test_protocol_a_transcript_invariants():
    params = ProtocolAParams(ell=10, delta=6, k_override=400, seed=12)
    t = run_protocol_a(params, honest_chsh_pair())
    assert verify_transcript(t) == []
    assert t.accepted == all(rec.passed for rec in t.blocks)
    bell = set(t.bell_set)
    for rec in t.blocks:
        assert rec.is_bell == (rec.index in bell)
        if not rec.is_bell:
            assert (rec.x, rec.y) == (0, 0)


def test_protocol_a_deterministic():
    params = ProtocolAParams(ell=10, delta=4, k_override=200, seed=99)
    t1 = run_protocol_a(params, honest_chsh_pair(), trial=3)
    t2 = run_protocol_a(params, honest_chsh_pair(), trial=3)
    assert t1.bell_set == t2.bell_set
    assert [r.mismatch_count for r in t1.blocks] == [r.mismatch_count for r in t2.blocks]
    assert all(np.array_equal(r1.a, r2.a) and np.array_equal(r1.b, r2.b) for r1, r2 in zip(t1.blocks, t2.blocks))


def test_protocol_a_abort_semantics():
    params = ProtocolAParams(ell=4, delta=20, k_override=20, seed=1)
    t = run_protocol_a(params, all_zeros_pair())
    assert not t.accepted
    assert t.first_failure == t.blocks[-1].index
    assert not t.blocks[-1].passed and all(r.passed for r in t.blocks[:-1])
    assert (t.blocks[-1].x, t.blocks[-1].y) == (1, 1)
    assert verify_transcript(t) == []


def test_protocol_a_all_zeros_rejected_often():
    # acceptance requires no Bell block with x=y=1: (1 - 1/(4 ell))^m ~ exp(-delta/4)
    params = ProtocolAParams(ell=20, delta=40, k_override=10, seed=4)
    accepted = sum(run_protocol_a(params, all_zeros_pair(), trial=i).accepted for i in range(200))
    assert accepted == 0


def test_protocol_a_shared_random_pair_fails_on_11_block():
    params = ProtocolAParams(ell=10, delta=3, k_override=10_000, bell_probability=1.0, seed=6)
    for trial in range(10):
        t = run_protocol_a(params, shared_random_pair(), trial=trial)
        for rec in t.blocks:
            if (rec.x, rec.y) == (1, 1):
                assert not rec.passed
            else:
                assert rec.passed and rec.mismatch_count == 0


def test_protocol_a_honest_block_counts_binomial():
    params = ProtocolAParams(ell=10, delta=12, k_override=2000, seed=21)
    counts = []
    for trial in range(4):
        t = run_protocol_a(params, honest_chsh_pair(), trial=trial)
        counts += [r.mismatch_count for r in t.blocks]
    k = 2000
    mean, var = k * SIN2, k * SIN2 * (1 - SIN2)
    assert len(counts) >= 100
    assert abs(np.mean(counts) - mean) <= 4 * math.sqrt(var / len(counts))


def test_honest_protocol_a_per_block_failure_matches_binomial():
    # independent cross-check of the pass rule against scipy's binomial tail
    k, thr = 442, math.ceil(0.16 * 442)
    p_fail = binom.sf(thr, k, SIN2)
    params = ProtocolAParams(ell=100, delta=2, seed=8)
    fails = blocks = 0
    for trial in range(40):
        t = run_protocol_a(params, honest_chsh_pair(), trial=trial)
        blocks += len(t.blocks)
        fails += sum(not r.passed for r in t.blocks)
    # each run ends at its first failure, so the failure fraction estimates p_fail
    rate = fails / blocks
    assert abs(rate - p_fail) <= 4 * math.sqrt(p_fail * (1 - p_fail) / blocks) + 1e-3


def test_protocol_kind_mismatch():
    with pytest.raises(GameKindError):
        run_protocol_a(ProtocolAParams(ell=4, delta=1), honest_extended_pair())
    with pytest.raises(GameKindError):
        run_protocol_b(ProtocolBParams(ell=4, k_override=4, m_override=4), honest_chsh_pair())


def test_protocol_b_honest_small():
    params = ProtocolBParams(ell=4, k_override=20_000, m_override=24, seed=5)
    t = run_protocol_b(params, honest_extended_pair())
    assert verify_transcript(t) == []
    for rec in t.blocks:
        if rec.x == rec.y:
            assert rec.mismatch_count == 0
        if not rec.is_bell:
            assert (rec.x, rec.y) == (Ext.A0, Ext.A0)


def test_protocol_b_a1_b0_case_passes():
    params = ProtocolBParams(ell=2, k_override=20_000, m_override=40, bell_probability=1.0, seed=2)
    t = run_protocol_b(params, honest_extended_pair())
    seen = [r for r in t.blocks if (r.x, r.y) == (Ext.A1, Ext.B0)]
    assert seen
    for rec in seen:
        assert rec.passed
        assert abs(rec.mismatch_count / 20_000 - SIN2) < 0.01


def test_protocol_b_all_zeros_fails_window_block():
    params = ProtocolBParams(ell=2, k_override=50, m_override=60, bell_probability=1.0, seed=3)
    t = run_protocol_b(params, all_zeros_pair(kind="extended"))
    assert not t.accepted
    last = t.blocks[-1]
    assert (last.x, last.y) == (Ext.A1, Ext.A0) and last.mismatch_count == 0


def test_protocol_b_all_zeros_acceptance_three_quarters_per_bell_block():
    params = ProtocolBParams(ell=2, k_override=4, m_override=3, bell_probability=1.0, seed=10)
    runs = 4000
    accepted = sum(run_protocol_b(params, all_zeros_pair(kind="extended"), trial=i).accepted for i in range(runs))
    p = 0.75**3
    assert abs(accepted / runs - p) <= 4 * math.sqrt(p * (1 - p) / runs)


def test_randomness_accounting():
    params = ProtocolAParams(ell=100, delta=5, k_override=8, seed=1)
    t = run_protocol_a(params, all_zeros_pair())
    cost = randomness_accounting(t)
    n_bell = sum(r.is_bell for r in t.blocks)
    assert cost.shannon_bits == pytest.approx(500 * binary_entropy(0.01) + 2 * n_bell)
    assert cost.raw_bits_drawn >= cost.shannon_bits
    # expansion of m h(1/ell) for large ell: delta (log2 ell + log2 e) roughly
    approx = 5 * (math.log2(100) + math.log2(math.e))
    assert 500 * binary_entropy(0.01) == pytest.approx(approx, rel=0.02)


def test_randomness_accounting_no_bell_blocks():
    params = ProtocolAParams(ell=100, delta=1, k_override=4, bell_probability=0.0, seed=1)
    t = run_protocol_a(params, honest_chsh_pair())
    assert t.bell_set == []
    assert t.randomness_cost.shannon_bits == 0.0
    assert t.randomness_cost.raw_bits_drawn == 0


def test_raw_bits_dominate_shannon_bits_across_runs():
    for trial in range(30):
        t = run_protocol_a(ProtocolAParams(ell=7, delta=3, k_override=4, seed=2), honest_chsh_pair(), trial=trial)
        assert t.randomness_cost.raw_bits_drawn >= t.randomness_cost.shannon_bits


def test_verify_detects_tampering():
    t = run_protocol_a(ProtocolAParams(ell=10, delta=2, k_override=100, seed=3), honest_chsh_pair())
    t.blocks[0].mismatch_count += 1
    assert verify_transcript(t)
    t.blocks[0].mismatch_count -= 1
    t.blocks[0].passed = not t.blocks[0].passed
    assert verify_transcript(t)


def test_cheating_pair_accepted_by_protocol_a():
    t = run_protocol_a(ProtocolAParams(ell=10, delta=3, k_override=100, seed=3), cheating_low_entropy_pair(0.0, 1))
    assert t.accepted


def test_block_length_formula():
    assert block_length(2) == 10
    assert block_length(1024) == 1000
