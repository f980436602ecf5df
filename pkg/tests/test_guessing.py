import numpy as np
import pytest

from direx.devices import (
    all_zeros_pair,
    cheating_low_entropy_pair,
    honest_chsh_pair,
    honest_extended_pair,
    GameKindError,
)
from direx.guessing import (
    GuessingGameConfig,
    calibrate_b0,
    lemma3_bound,
    relative_distance,
    run_guessing_game,
    triangle_core_holds,
)
from direx.rng import substream


def test_lemma3_bound_values():
    assert lemma3_bound(0.0, 0.0) == 0.75
    assert lemma3_bound(0.2, 0.01) == pytest.approx(0.53)
    assert lemma3_bound(0.05, 0.1) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        lemma3_bound(-0.1, 0)


@pytest.mark.parametrize("radius", [0.16, 0.34, 0.5])
def test_config_rejects_radius_outside_window(radius):
    with pytest.raises(ValueError):
        GuessingGameConfig(k=20, trials=10, decision_radius=radius)


def test_config_rejects_bad_b0_length():
    with pytest.raises(ValueError):
        GuessingGameConfig(k=4, trials=1, b0=(0, 1))


def test_calibration_finds_fixed_block():
    pair = cheating_low_entropy_pair(0.05, b0_seed=3)
    b0 = calibrate_b0(pair, 20, 200, substream(0, "cal"))
    assert np.array_equal(b0, pair.b0(20))


def test_calibration_tie_breaks_to_smallest():
    # every honest block is distinct at k=20, so the tie resolves to the smallest
    b0 = calibrate_b0(honest_chsh_pair(), 20, 5, substream(0, "cal"))
    assert len(b0) == 20


def test_honest_pair_cannot_signal():
    result = run_guessing_game(honest_chsh_pair(), GuessingGameConfig(k=20, trials=5000), substream(1, "g"))
    assert abs(result.estimate - 0.5) < 4 * 0.5 / np.sqrt(5000)
    lo, hi = result.wilson_ci
    assert lo <= result.estimate <= hi


def test_all_zeros_pair_cannot_signal():
    result = run_guessing_game(all_zeros_pair(), GuessingGameConfig(k=20, trials=2000), substream(2, "g"))
    assert abs(result.estimate - 0.5) < 4 * 0.5 / np.sqrt(2000)


@pytest.mark.parametrize("gamma", [0.0, 0.05, 0.2])
def test_cheating_pair_signals(gamma):
    bound = lemma3_bound(gamma, 0.0)
    pair = cheating_low_entropy_pair(gamma, b0_seed=11)
    result = run_guessing_game(pair, GuessingGameConfig(k=20, trials=4000), substream(3, "g"), bound=bound)
    assert result.estimate >= bound - 0.01
    assert result.estimate >= 0.74
    assert result.bound == bound


def test_known_b0_skips_calibration():
    pair = cheating_low_entropy_pair(0.0, b0_seed=4)
    cfg = GuessingGameConfig(k=16, trials=500, b0=tuple(int(v) for v in pair.b0(16)))
    result = run_guessing_game(pair, cfg, substream(4, "g"))
    assert result.b0 == list(cfg.b0)
    assert result.estimate > 0.9


def test_guessing_needs_chsh_pair():
    with pytest.raises(GameKindError):
        run_guessing_game(honest_extended_pair(), GuessingGameConfig(k=4, trials=1), substream(0, "g"))


def test_guessing_is_deterministic():
    cfg = GuessingGameConfig(k=20, trials=300)
    r1 = run_guessing_game(honest_chsh_pair(), cfg, substream(5, "g"))
    r2 = run_guessing_game(honest_chsh_pair(), cfg, substream(5, "g"))
    assert r1.successes == r2.successes and r1.b0 == r2.b0


def test_relative_distance():
    assert relative_distance(np.array([0, 1, 1, 0]), np.array([1, 1, 0, 0])) == 0.5


def test_triangle_core_fuzz():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(20_000):
        k = int(rng.integers(1, 60))
        b = rng.integers(0, 2, k)
        # bias the draws toward the interesting shells
        a0 = b ^ (rng.random(k) < rng.uniform(0, 0.2))
        a1 = b ^ (rng.random(k) < rng.uniform(0.8, 1.0))
        n0, n1 = np.count_nonzero(a0 != b), np.count_nonzero(a1 != b)
        if n0 <= 0.16 * k and n1 >= 0.84 * k:
            hits += 1
        assert triangle_core_holds(a0, a1, b)
    assert hits > 1000


def test_triangle_core_tight_case():
    k = 100
    b = np.zeros(k, dtype=np.uint8)
    a0 = np.zeros(k, dtype=np.uint8)
    a0[:16] = 1
    a1 = np.ones(k, dtype=np.uint8)
    a1[84:] = 0
    # a0 and a1 disagree on positions 16..83
    assert relative_distance(a0, a1) == 0.68
    assert triangle_core_holds(a0, a1, b)
