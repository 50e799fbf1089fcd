"""Deterministic counter-based uniform random source.

Every draw is a pure function of a 256-bit key made of four unsigned 64-bit
words: a run seed, an iteration number, an individual index, and a draw
counter. The words are absorbed one at a time into a 64-bit state with a
murmur-style avalanche mixer, and the top 53 bits of the final state become
a double in [0, 1). There is no shared sequential state, so any number of
workers can draw concurrently and every value is reproducible from the key
alone.

Per-iteration draws that belong to the whole population rather than to one
individual (the dormancy proportion, the dormancy permutation) use the
reserved index ``COORDINATOR_INDEX``, which no real individual can occupy.

Three implementations of the same hash live in this package: the scalar
Python path below, the vectorised numpy path below, and a compiled copy in
``kernels.numba_backend``. They are bit-identical; the test suite checks
this directly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

_MASK64 = (1 << 64) - 1

# Initial state and the two multipliers of the 64-bit finaliser.
_H0 = 0x9E3779B97F4A7C15
_MUL1 = 0xFF51AFD7ED558CCD
_MUL2 = 0xC4CEB9FE1A85EC53

_INV_2_53 = 1.0 / 9007199254740992.0  # 2 ** -53

#: Reserved individual index for population-level draws.
COORDINATOR_INDEX = _MASK64

# Mirrors of the constants for the vectorised path.
_U33 = np.uint64(33)
_U11 = np.uint64(11)
_UMUL1 = np.uint64(_MUL1)
_UMUL2 = np.uint64(_MUL2)


@dataclass(frozen=True)
class StreamKey:
    """Address of a single draw.

    Parameters
    ----------
    seed : int
        Run seed, in [0, 2**64).
    iteration : int
        Iteration number of the run (0 is reserved for initialisation).
    individual_index : int
        Index of the individual the draw belongs to, or
        ``COORDINATOR_INDEX`` for population-level draws.
    draw_counter : int
        Position of the draw inside the individual's per-iteration stream.
    """

    seed: int
    iteration: int
    individual_index: int
    draw_counter: int = 0

    def __post_init__(self) -> None:
        for name in ("seed", "iteration", "individual_index", "draw_counter"):
            value = getattr(self, name)
            if not isinstance(value, int) or not 0 <= value <= _MASK64:
                raise ValueError(f"{name} must be an integer in [0, 2**64), got {value!r}")

    def advanced(self, offset: int) -> "StreamKey":
        """Return a copy with the draw counter moved forward by ``offset``."""
        return replace(self, draw_counter=(self.draw_counter + offset) & _MASK64)


def _mix(z: int) -> int:
    # 64-bit avalanche: xor-shift / multiply finaliser.
    z ^= z >> 33
    z = (z * _MUL1) & _MASK64
    z ^= z >> 33
    z = (z * _MUL2) & _MASK64
    z ^= z >> 33
    return z


def stream_base(seed: int, iteration: int, individual: int) -> int:
    """State after absorbing every key word except the draw counter.

    Splitting the hash here lets callers that need many draws for one
    individual pay for the first three words once.
    """
    h = _mix(_H0 ^ (seed & _MASK64))
    h = _mix(h ^ (iteration & _MASK64))
    return _mix(h ^ (individual & _MASK64))


def _bits_from_base(base: int, counter: int) -> int:
    return _mix(base ^ (counter & _MASK64))


def draw_bits(key: StreamKey) -> int:
    """Return the raw 64-bit hash of ``key``."""
    return _bits_from_base(stream_base(key.seed, key.iteration, key.individual_index), key.draw_counter)


def draw_uniform(key: StreamKey) -> float:
    """Return one uniform double in [0, 1) addressed by ``key``."""
    return (draw_bits(key) >> 11) * _INV_2_53


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> _U33)
    z = z * _UMUL1
    z = z ^ (z >> _U33)
    z = z * _UMUL2
    z = z ^ (z >> _U33)
    return z


def draw_uniform_vector(key: StreamKey, n: int) -> np.ndarray:
    """Return ``n`` uniforms at counters ``key.counter .. key.counter+n-1``.

    Bit-identical to calling :func:`draw_uniform` on the advanced keys one
    by one, just vectorised.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    base = np.uint64(stream_base(key.seed, key.iteration, key.individual_index))
    counters = np.uint64(key.draw_counter) + np.arange(n, dtype=np.uint64)
    bits = _mix_array(base ^ counters)
    return (bits >> _U11).astype(np.float64) * _INV_2_53


def randperm(n: int, k: int, key: StreamKey) -> np.ndarray:
    """Draw ``k`` distinct indices from 1..n, uniformly without replacement.

    A partial Fisher-Yates shuffle: draw ``j`` consumes the uniform at
    ``key.counter + j``, so the call reads exactly ``k`` counters. Returns
    an int64 array of length ``k`` in shuffle order.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0 <= k <= n:
        raise ValueError(f"k must be in [0, {n}], got {k}")
    arr = np.arange(1, n + 1, dtype=np.int64)
    base = stream_base(key.seed, key.iteration, key.individual_index)
    for j in range(k):
        u = (_bits_from_base(base, key.draw_counter + j) >> 11) * _INV_2_53
        r = j + int(u * (n - j))
        if r > n - 1:  # guards the u -> 1.0 rounding edge, cannot occur for n < 2**53
            r = n - 1
        arr[j], arr[r] = arr[r], arr[j]
    return arr[:k]
