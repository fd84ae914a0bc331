"""Deterministic pseudo-random generation for reproducible subsampling and training.

The whole chain is spelled out here so that a fixed seed produces the same
stream on any platform, and so the scheme can be re-implemented in another
language from this file alone:

* ``splitmix64``: the state advances by the 64-bit golden-ratio increment
  ``0x9E3779B97F4A7C15``; each output is the finalizer
  ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
  z *= 0x94D049BB133111EB; z ^= z >> 31`` applied to the new state.
* ``Xoshiro256StarStar``: 256-bit xorshift-family generator whose four state
  words are the first four outputs of splitmix64 seeded with the user seed.
  One step: ``out = rotl(s1 * 5, 7) * 9``, then
  ``t = s1 << 17; s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t;
  s3 = rotl(s3, 45)`` (all mod 2^64).
* uniform doubles use the top 53 bits: ``(u64 >> 11) * 2**-53``.
* bounded integers use rejection sampling on ``u64 % n`` with threshold
  ``(2**64 // n) * n`` so the distribution is exactly uniform.
* ``sample_indices(n, k)`` is a partial Fisher-Yates pass over ``0..n-1``
  returning the first ``k`` slots in draw order.
* ``substream_seed(seed, index)`` is the ``(index + 1)``-th output of
  splitmix64 seeded with ``seed``, used to derive independent child seeds.
"""

from __future__ import annotations

_M64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


class SplitMix64:
    """Minimal splitmix64 stream, used only to seed the main generator."""

    def __init__(self, seed: int):
        self._state = seed & _M64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _M64
        return _mix64(self._state)


def substream_seed(seed: int, index: int) -> int:
    """Derive the seed of child stream ``index`` from a master seed."""
    if index < 0:
        raise ValueError("substream index must be non-negative")
    sm = SplitMix64(seed)
    out = 0
    for _ in range(index + 1):
        out = sm.next_u64()
    return out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _M64


class Xoshiro256StarStar:
    """xoshiro256** seeded through splitmix64."""

    def __init__(self, seed: int):
        sm = SplitMix64(seed)
        self._s = [sm.next_u64() for _ in range(4)]
        if not any(self._s):  # all-zero state is the one forbidden point
            self._s[0] = 1

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _M64, 7) * 9) & _M64
        t = (s1 << 17) & _M64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 bits of resolution."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def uniform_many(self, count: int) -> list[float]:
        """``count`` successive draws from ``uniform``, same stream, one frame."""
        # lo + (hi - lo) * u with (0, 1) is exactly u for u in [0, 1)
        return self.uniform_in_many(0.0, 1.0, count)

    def uniform_in_many(self, lo: float, hi: float, count: int) -> list[float]:
        """``count`` successive draws from ``uniform_in``, same stream, one frame.

        Keeps the generator state in locals so bulk consumers (training-time
        augmentation, weight init) do not pay a four-frame call chain per draw.
        """
        if count < 0:
            raise ValueError("count must be non-negative")
        s0, s1, s2, s3 = self._s
        span = hi - lo
        scale = 2.0**-53
        out = []
        append = out.append
        for _ in range(count):
            y = (s1 * 5) & _M64
            result = ((((y << 7) | (y >> 57)) & _M64) * 9) & _M64
            t = (s1 << 17) & _M64
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & _M64
            append(lo + span * ((result >> 11) * scale))
        self._s = [s0, s1, s2, s3]
        return out

    def next_below(self, n: int) -> int:
        """Exactly uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = (2**64 // n) * n
        while True:
            u = self.next_u64()
            if u < threshold:
                return u % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1):
            j = i + self.next_below(len(items) - i)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from 0..n-1 without replacement, in draw order."""
        if not 0 <= k <= n:
            raise ValueError("need 0 <= k <= n")
        pool = list(range(n))
        for i in range(k):
            j = i + self.next_below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]
