"""Unit-rate Poisson paths from deterministic, keyed random streams.

Everything stochastic in this package flows through one construction: a
standard Poisson process N on an internal clock, later read through the
time rescaling u = 2s/eps^2.  Reproducibility is therefore concentrated
here.  Interarrival times are inverse-CDF exponentials, -log(1 - U), drawn
from a counter-based Philox generator keyed by (seed, stream_index), so a
replica's path depends only on its key, never on thread scheduling or on
how many other replicas ran first.

Paths can be materialized (`simulate`) or consumed as a stream of
rescaled segments without ever holding the jump times in memory
(`stream_segments`), which matters when 2*s_max/eps^2 reaches 1e8 events.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, OutOfHorizonError

__all__ = [
    "PoissonPath",
    "simulate",
    "count_at",
    "segment_iter",
    "stream_segments",
    "jump_blocks",
]

# Draws per request from the generator.  Fixed: the floating-point jump
# times depend on how cumulative sums are blocked, so this constant is
# part of the reproducibility contract.
BLOCK_DRAWS = 1 << 16

_U64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _U64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    return z ^ (z >> 31)


def _check_key(seed: int, stream_index: int) -> None:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise InvalidArgumentError("seed must be an integer")
    if not isinstance(stream_index, (int, np.integer)) or isinstance(stream_index, bool):
        raise InvalidArgumentError("stream_index must be an integer")
    if not 0 <= int(seed) <= _U64:
        raise InvalidArgumentError("seed must fit in 64 bits")
    if int(stream_index) < 0:
        raise InvalidArgumentError("stream_index must be non-negative")


def _generator(seed: int, stream_index: int) -> np.random.Generator:
    key = np.array([int(seed), int(stream_index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _seed_tag(seed: int, stream_index: int) -> int:
    return _splitmix64((int(seed) & _U64) ^ _splitmix64(int(stream_index) & _U64))


def _first_block_size(u_max: float, block: int = BLOCK_DRAWS) -> int:
    # Deterministic in u_max alone; anything that re-chunks a materialized
    # path must use the same boundaries to reproduce the streamed sums.
    return min(block, max(64, int(u_max + 10.0 * math.sqrt(u_max)) + 64))


def jump_blocks(seed: int, stream_index: int, u_max: float, block: int = BLOCK_DRAWS):
    """Yield ascending arrays of Poisson jump times covering (0, u_max].

    Low-level stream shared by `simulate`, `stream_segments` and the
    ensemble engine, so all of them see bit-identical jump times for the
    same (seed, stream_index, u_max).  Stops after the first jump beyond
    u_max (that jump is dropped).  Empty arrays are never yielded.
    """
    _check_key(seed, stream_index)
    if not (math.isfinite(u_max)) or u_max < 0:
        raise InvalidArgumentError("u_max must be finite and non-negative")
    if block < 2:
        raise InvalidArgumentError("block must be at least 2")
    gen = _generator(seed, stream_index)
    # First request sized to the expected count so short paths do not pay
    # for a full block of draws.
    size = _first_block_size(u_max, block)
    carry = 0.0
    while True:
        e = gen.standard_exponential(size, method="inv")
        u = np.cumsum(e)
        u += carry
        carry = float(u[-1])
        if carry > u_max:
            cut = int(np.searchsorted(u, u_max, side="right"))
            if cut > 0:
                yield u[:cut]
            return
        yield u
        size = block


@dataclass(frozen=True, eq=False)
class PoissonPath:
    """Materialized path of a unit-rate Poisson process.

    jump_times are strictly increasing and lie in (0, horizon]; the path
    asserts that no further jumps occur up to the horizon, so counting
    queries beyond it refuse instead of extrapolating.  seed_tag is a
    64-bit provenance token used downstream to enforce that two transforms
    really consumed the same randomness.
    """

    jump_times: np.ndarray
    horizon: float
    seed_tag: int = field(default=0)

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=np.float64)
        if jt.ndim != 1:
            raise InvalidArgumentError("jump_times must be a 1-D array")
        if not (self.horizon > 0):
            raise InvalidArgumentError("horizon must be positive")
        if jt.size:
            if not np.all(np.isfinite(jt)):
                raise InvalidArgumentError("jump_times must be finite")
            if jt[0] <= 0.0:
                raise InvalidArgumentError("jump_times must be positive")
            if np.any(np.diff(jt) <= 0.0):
                raise InvalidArgumentError("jump_times must be strictly increasing")
            if jt[-1] > self.horizon:
                raise InvalidArgumentError("jump_times must not exceed the horizon")
        jt.setflags(write=False)
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "seed_tag", int(self.seed_tag) & _U64)

    @classmethod
    def from_interarrivals(cls, interarrivals, horizon: float = math.inf) -> "PoissonPath":
        """Build a path from explicit interarrival times (test hook, no RNG).

        The default infinite horizon encodes 'this list is the whole path':
        counting queries at any u are then answered from the list alone.
        """
        inter = np.asarray(interarrivals, dtype=np.float64)
        if inter.ndim != 1:
            raise InvalidArgumentError("interarrivals must be a 1-D sequence")
        if inter.size and (not np.all(np.isfinite(inter)) or np.any(inter <= 0.0)):
            raise InvalidArgumentError("interarrivals must be positive and finite")
        jumps = np.cumsum(inter)
        digest = hashlib.blake2b(jumps.tobytes(), digest_size=8).digest()
        tag = int.from_bytes(digest, "little")
        return cls(jumps, horizon, tag)

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    def count_at(self, u: float) -> int:
        return count_at(self, u)

    def segments(self, epsilon: float, s_max: float):
        return segment_iter(self, epsilon, s_max)


def simulate(horizon: float, seed: int, stream_index: int = 0) -> PoissonPath:
    """Draw a Poisson path on (0, horizon] from the keyed generator.

    Identical (seed, stream_index, horizon) always yields a bit-identical
    path; distinct stream_index values give independent streams.
    """
    if not isinstance(horizon, (int, float)) or isinstance(horizon, bool):
        raise InvalidArgumentError("horizon must be a real number")
    if not math.isfinite(horizon) or horizon <= 0:
        raise InvalidArgumentError("horizon must be finite and positive")
    parts = list(jump_blocks(seed, stream_index, float(horizon)))
    jumps = np.concatenate(parts) if parts else np.empty(0, dtype=np.float64)
    # Rounding in the running sum can, very rarely, collapse two neighbours
    # to the same float; nudge to keep the strict-increase invariant.
    if jumps.size > 1 and np.any(np.diff(jumps) <= 0.0):
        for i in range(1, jumps.size):
            if jumps[i] <= jumps[i - 1]:
                jumps[i] = np.nextafter(jumps[i - 1], np.inf)
        jumps = jumps[jumps <= horizon]
    return PoissonPath(jumps, float(horizon), _seed_tag(seed, stream_index))


def count_at(path: PoissonPath, u: float) -> int:
    """N_u, the number of jumps at or before u (right-continuous count)."""
    if not (isinstance(u, (int, float, np.floating, np.integer)) and math.isfinite(u)):
        raise InvalidArgumentError("u must be a finite real number")
    if u < 0:
        raise InvalidArgumentError("u must be non-negative")
    if u > path.horizon:
        raise OutOfHorizonError(
            f"query at u={u} exceeds path horizon {path.horizon}; re-simulate longer"
        )
    return int(np.searchsorted(path.jump_times, u, side="right"))


def _check_segment_args(epsilon: float, s_max: float) -> float:
    if not (isinstance(epsilon, (int, float, np.floating)) and math.isfinite(epsilon)) or epsilon <= 0:
        raise InvalidArgumentError("epsilon must be finite and positive")
    if not (isinstance(s_max, (int, float, np.floating)) and math.isfinite(s_max)) or s_max <= 0:
        raise InvalidArgumentError("s_max must be finite and positive")
    return 2.0 * float(s_max) / (float(epsilon) * float(epsilon))


def segment_iter(path: PoissonPath, epsilon: float, s_max: float):
    """Yield (s_lo, s_hi, k) partitioning [0, s_max] by rescaled jumps.

    On the k-th segment the rescaled counter N_{2s/eps^2} equals k.  Jump
    times u map to s-axis breakpoints s = eps^2 * u / 2; a jump landing
    exactly at s_max opens only a zero-length final piece and is dropped.
    """
    u_cut = _check_segment_args(epsilon, s_max)
    if u_cut > path.horizon:
        raise OutOfHorizonError(
            f"need horizon >= {u_cut} for epsilon={epsilon}, s_max={s_max}; "
            f"path has horizon {path.horizon}"
        )
    scale = 0.5 * float(epsilon) * float(epsilon)
    s_max = float(s_max)
    n = int(np.searchsorted(path.jump_times * scale, s_max, side="left"))
    lo = 0.0
    for k in range(n):
        hi = float(path.jump_times[k] * scale)
        yield (lo, hi, k)
        lo = hi
    yield (lo, s_max, n)


def stream_segments(epsilon: float, s_max: float, *, seed: int, stream_index: int = 0,
                    block: int = BLOCK_DRAWS):
    """Streaming twin of segment_iter: same segments, O(block) memory.

    Draws the underlying path lazily with the same keyed stream that
    simulate() uses, so the output matches
    segment_iter(simulate(2*s_max/eps^2, seed, stream_index), eps, s_max)
    without materializing the jumps.
    """
    u_cut = _check_segment_args(epsilon, s_max)
    scale = 0.5 * float(epsilon) * float(epsilon)
    s_max = float(s_max)
    lo = 0.0
    k = 0
    for u_blk in jump_blocks(seed, stream_index, u_cut, block=block):
        s_blk = u_blk * scale
        m = int(np.searchsorted(s_blk, s_max, side="left"))
        for j in range(m):
            hi = float(s_blk[j])
            yield (lo, hi, k)
            lo = hi
            k += 1
        if m < s_blk.size:
            break
    yield (lo, s_max, k)
