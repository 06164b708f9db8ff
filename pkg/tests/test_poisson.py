"""Unit-rate Poisson paths: streaming draws, counting, segment decomposition."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kacstroock import (
    InvalidArgumentError,
    OutOfHorizonError,
    PoissonPath,
    count_at,
    jump_blocks,
    segment_iter,
    simulate,
    stream_segments,
)


def test_from_interarrivals_cumsum():
    path = PoissonPath.from_interarrivals([0.5, 1.0, 0.25])
    np.testing.assert_array_equal(path.jump_times, [0.5, 1.5, 1.75])
    assert path.n_jumps == 3
    assert path.horizon == math.inf


def test_count_is_right_continuous():
    path = PoissonPath.from_interarrivals([0.5, 1.0, 0.25])
    assert count_at(path, 0.0) == 0
    assert count_at(path, 0.4999) == 0
    assert count_at(path, 0.5) == 1  # jump counted at its own time
    assert count_at(path, 1.5) == 2
    assert count_at(path, 1.6) == 2
    assert count_at(path, 100.0) == 3
    assert path.count_at(1.75) == 3


def test_count_domain_checks():
    path = simulate(horizon=10.0, seed=1)
    with pytest.raises(InvalidArgumentError):
        count_at(path, -0.5)
    with pytest.raises(InvalidArgumentError):
        count_at(path, math.nan)
    with pytest.raises(OutOfHorizonError):
        count_at(path, 10.5)


def test_path_validation():
    with pytest.raises(InvalidArgumentError):
        PoissonPath(np.array([[1.0]]), horizon=2.0)
    with pytest.raises(InvalidArgumentError):
        PoissonPath(np.array([0.0, 1.0]), horizon=2.0)
    with pytest.raises(InvalidArgumentError):
        PoissonPath(np.array([1.0, 1.0]), horizon=2.0)
    with pytest.raises(InvalidArgumentError):
        PoissonPath(np.array([1.0, 3.0]), horizon=2.0)
    with pytest.raises(InvalidArgumentError):
        PoissonPath(np.array([1.0]), horizon=-1.0)
    with pytest.raises(InvalidArgumentError):
        PoissonPath.from_interarrivals([0.5, 0.0])
    with pytest.raises(InvalidArgumentError):
        PoissonPath.from_interarrivals([0.5, math.inf])


def test_empty_path_is_fine():
    path = PoissonPath.from_interarrivals([])
    assert path.n_jumps == 0
    assert count_at(path, 5.0) == 0


def test_simulate_is_reproducible():
    a = simulate(horizon=100.0, seed=42, stream_index=3)
    b = simulate(horizon=100.0, seed=42, stream_index=3)
    np.testing.assert_array_equal(a.jump_times, b.jump_times)
    assert a.seed_tag == b.seed_tag

    c = simulate(horizon=100.0, seed=42, stream_index=4)
    assert not np.array_equal(a.jump_times, c.jump_times)
    d = simulate(horizon=100.0, seed=43, stream_index=3)
    assert not np.array_equal(a.jump_times, d.jump_times)


def test_simulate_respects_horizon():
    path = simulate(horizon=55.5, seed=9)
    assert path.horizon == 55.5
    assert path.jump_times[-1] <= 55.5
    assert np.all(np.diff(path.jump_times) > 0)
    assert path.jump_times[0] > 0


def test_jump_blocks_concatenation_matches_simulate():
    u_max = 5000.0
    blocks = list(jump_blocks(seed=42, stream_index=7, u_max=u_max))
    assert all(b.size > 0 for b in blocks)
    cat = np.concatenate(blocks)
    path = simulate(horizon=u_max, seed=42, stream_index=7)
    np.testing.assert_array_equal(cat, path.jump_times)
    assert cat[-1] <= u_max
    # blocks arrive sorted and strictly increasing across boundaries
    assert np.all(np.diff(cat) > 0)


def test_jump_blocks_zero_horizon():
    blocks = list(jump_blocks(seed=1, stream_index=0, u_max=0.0))
    assert sum(b.size for b in blocks) == 0 or blocks == []


def test_jump_blocks_validation():
    with pytest.raises(InvalidArgumentError):
        list(jump_blocks(seed=1.5, stream_index=0, u_max=1.0))
    with pytest.raises(InvalidArgumentError):
        list(jump_blocks(seed=1, stream_index=-1, u_max=1.0))
    with pytest.raises(InvalidArgumentError):
        list(jump_blocks(seed=1, stream_index=0, u_max=math.inf))
    with pytest.raises(InvalidArgumentError):
        list(jump_blocks(seed=1, stream_index=0, u_max=10.0, block=1))


def test_poisson_moments():
    """Counts over a long window should look like a unit-rate Poisson."""
    horizon = 1e5
    path = simulate(horizon=horizon, seed=2024)
    n = path.n_jumps
    # mean n = horizon, sd = sqrt(horizon); 4.5 sigma keeps this deterministic
    assert abs(n - horizon) < 4.5 * math.sqrt(horizon)
    inter = np.diff(path.jump_times)
    assert abs(inter.mean() - 1.0) < 4.5 / math.sqrt(inter.size)
    # exponential interarrivals: var = mean^2, loose window
    assert 0.9 < inter.var() < 1.1


def test_segment_iter_partitions_exactly():
    path = PoissonPath.from_interarrivals([1.0, 2.0, 0.5])
    eps, s_max = 0.5, 1.0
    segs = list(segment_iter(path, eps, s_max))
    # u = 2 s / eps^2 = 8 s, so jumps at u = 1, 3, 3.5 sit at s = 0.125, 0.375, 0.4375
    assert segs[0] == (0.0, 0.125, 0)
    assert segs[-1][1] == s_max
    assert [k for (_, _, k) in segs] == [0, 1, 2, 3]
    for (a, b, _), (c, _, _) in zip(segs, segs[1:]):
        assert b == c
        assert a < b


def test_segment_at_exact_end_is_dropped():
    # a jump exactly at s_max opens a zero-width segment; it must not appear
    eps = 2.0  # s = 2 u with this epsilon, exact in floats
    path = PoissonPath.from_interarrivals([0.25, 0.25])
    segs = list(segment_iter(path, eps, 1.0))
    assert segs == [(0.0, 0.5, 0), (0.5, 1.0, 1)]


def test_segment_iter_requires_horizon_coverage():
    path = simulate(horizon=10.0, seed=5)
    with pytest.raises(OutOfHorizonError):
        list(segment_iter(path, 0.1, 1.0))  # needs u up to 200
    with pytest.raises(InvalidArgumentError):
        list(segment_iter(path, -0.1, 1.0))
    with pytest.raises(InvalidArgumentError):
        list(segment_iter(path, 0.5, math.inf))


def test_path_segments_method_matches_free_function():
    path = simulate(horizon=64.0, seed=77)
    assert list(path.segments(0.5, 8.0)) == list(segment_iter(path, 0.5, 8.0))


def test_stream_segments_matches_materialized_path():
    for eps, s_max in ((0.5, 1.0), (0.25, 2.0)):
        u_max = 2.0 * s_max / eps ** 2
        path = simulate(horizon=u_max, seed=11, stream_index=2)
        direct = list(segment_iter(path, eps, s_max))
        streamed = list(stream_segments(eps, s_max, seed=11, stream_index=2))
        assert streamed == direct  # bit-identical floats, same counts


@settings(max_examples=60)
@given(
    inter=st.lists(st.floats(min_value=0.01, max_value=3.0), min_size=0, max_size=40),
    eps=st.floats(min_value=0.1, max_value=2.0),
    s_max=st.floats(min_value=0.1, max_value=5.0),
)
def test_segment_chain_property(inter, eps, s_max):
    """Segments tile [0, s_max] with counts that step by one at each jump."""
    path = PoissonPath.from_interarrivals(inter)
    segs = list(segment_iter(path, eps, s_max))
    assert segs[0][0] == 0.0
    assert segs[-1][1] == s_max
    ks = [k for (_, _, k) in segs]
    assert ks == list(range(len(segs)))
    for (a, b, k), (c, _, _) in zip(segs, segs[1:]):
        assert b == c
    for a, b, k in segs:
        assert a < b
        mid_u = 2.0 * (0.5 * (a + b)) / eps ** 2
        assert count_at(path, mid_u) == k


def test_seed_tag_distinguishes_paths():
    a = PoissonPath.from_interarrivals([0.5, 1.0])
    b = PoissonPath.from_interarrivals([0.5, 1.0])
    c = PoissonPath.from_interarrivals([0.5, 1.1])
    assert a.seed_tag == b.seed_tag
    assert a.seed_tag != c.seed_tag
