"""Deterministic, platform-independent random stream.

Everything stochastic in this package (parameter init, epsilon draws, data
synthesis, shuffling, resampling) flows through :class:`RngStream` so that a
single integer seed reproduces a run bit-for-bit on any platform.

The generator is counter-based SplitMix64, fully specified here rather than
delegated to numpy's Generator (whose bit streams are not guaranteed stable
across library versions):

    word(i) = mix64(seed + (i + 1) * 0x9E3779B97F4A7C15)   (mod 2**64)

where ``mix64`` is the SplitMix64 finalizer.  The stream position ``i`` is
the only mutable state.  Uniform doubles take the top 53 bits of a word;
normal deviates consume two words each via Box-Muller (cosine branch).
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_U_GOLDEN = np.uint64(_GOLDEN)
_TWO_NEG53 = 2.0 ** -53


def _mix64_int(x: int) -> int:
    """SplitMix64 finalizer on a plain Python int (mod 2**64)."""
    x &= _MASK64
    x = (x ^ (x >> 30)) * _MIX1 & _MASK64
    x = (x ^ (x >> 27)) * _MIX2 & _MASK64
    return x ^ (x >> 31)


def _mix64_array(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, vectorized over a uint64 array (wraps silently)."""
    x = (x ^ (x >> np.uint64(30))) * np.uint64(_MIX1)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(_MIX2)
    return x ^ (x >> np.uint64(31))


class RngStream:
    """Seeded counter-based random stream with derivable substreams."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed:#x}, counter={self.counter})"

    def _next_words(self, n: int) -> np.ndarray:
        """Next ``n`` raw uint64 words, advancing the counter."""
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        state = np.uint64(self.seed) + idx * _U_GOLDEN
        return _mix64_array(state)

    def split(self, key: int) -> "RngStream":
        """Derive an independent child stream.

        Child seed is ``mix64(mix64(seed) + key)``; the parent's counter is
        untouched, so splitting is position-independent.
        """
        return RngStream(_mix64_int(_mix64_int(self.seed) + int(key)))

    def uniform(self, shape=(), low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Uniform float64 draws in [low, high) using the top 53 bits per word."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u = (self._next_words(n) >> np.uint64(11)).astype(np.float64) * _TWO_NEG53
        out = low + (high - low) * u
        return out.reshape(shape) if shape else out[0]

    def normal(self, shape=()) -> np.ndarray:
        """Standard-normal draws; two words per deviate via Box-Muller."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        w = self._next_words(2 * n)
        # u1 in (0, 1] so the log is finite; u2 in [0, 1).
        u1 = ((w[:n] >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_NEG53
        u2 = (w[n:] >> np.uint64(11)).astype(np.float64) * _TWO_NEG53
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return z.reshape(shape) if shape else z[0]

    def integers(self, high: int, size=()) -> np.ndarray:
        """Integers in [0, high) via floor(uniform * high).

        The modulo bias of this construction is < 2**-53 * high, negligible
        at the sizes this package draws.
        """
        if high < 1:
            raise ValueError(f"integers() needs high >= 1, got {high}")
        u = self.uniform(size if size else (1,))
        out = np.minimum((u * high).astype(np.int64), high - 1)
        return out if size else int(out[0])

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n): stable argsort of uniform keys."""
        keys = self.uniform((n,))
        return np.argsort(keys, kind="stable")
