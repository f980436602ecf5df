import math

import numpy as np
import pytest

from direx.rng import bernoulli_bits, check_seed, stream_key, substream


def test_substreams_reproducible_and_distinct():
    a = substream(1, "x", 0).random(5)
    assert np.array_equal(a, substream(1, "x", 0).random(5))
    assert not np.array_equal(a, substream(1, "x", 1).random(5))
    assert not np.array_equal(a, substream(1, "y", 0).random(5))
    assert not np.array_equal(a, substream(2, "x", 0).random(5))


def test_stream_key_pinned():
    # guards against accidental changes to the derivation
    assert stream_key(0, "referee", 0) == stream_key(0, "referee", 0)
    assert stream_key(0, "referee", 0) != stream_key(0, "referee", 1)


@pytest.mark.parametrize("bad", [-1, 2**64, 1.5, "3", True])
def test_bad_seed(bad):
    with pytest.raises((TypeError, ValueError)):
        check_seed(bad)


def test_bernoulli_edges():
    flags, used = bernoulli_bits(substream(1, "b"), 1.0, 10)
    assert flags.all() and used == 0
    flags, used = bernoulli_bits(substream(1, "b"), 0.0, 10)
    assert not flags.any() and used == 0


@pytest.mark.parametrize("p", [0.5, 0.01, 0.3])
def test_bernoulli_rate_and_cost(p):
    n = 200_000
    flags, used = bernoulli_bits(substream(7, "b"), p, n)
    assert abs(flags.mean() - p) <= 4 * math.sqrt(p * (1 - p) / n)
    # one bit minimum per flag, two on average
    assert used >= n
    assert abs(used / n - 2.0) < 0.05

