"""Seedable random number generation with a pinned algorithm.

Every random choice in this package flows through xoshiro256** seeded by
SplitMix64, so identical seeds give bit-identical streams on every
platform and under either kernel backend (the raw stream is pure 64-bit
integer arithmetic). Gaussian variates are derived from the stream with
the Box-Muller transform; those go through libm and are therefore
bit-stable per platform/build rather than universally.

Algorithms (public-domain constructions by Blackman/Vigna/Steele/Lea):

    SplitMix64:   state += 0x9E3779B97F4A7C15
                  z = state
                  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
                  z = (z ^ (z >> 27)) * 0x94D049BB133111EB
                  out = z ^ (z >> 31)

    xoshiro256**: out = rotl64(s1 * 5, 7) * 9
                  t = s1 << 17
                  s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t
                  s3 = rotl64(s3, 45)

The four words of xoshiro state are the first four SplitMix64 outputs of
the seed.
"""

from __future__ import annotations

import numpy as np

from . import backend

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_INV_2_53 = 2.0**-53


def _splitmix64_next(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns (new_state, output)."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def derive_seed(seed: int, key: int) -> int:
    """Derive an independent child seed from (seed, key).

    Used to give each image its own stream while the run stays a pure
    function of the top-level seed. The child is the SplitMix64 output at
    position ``key`` of the stream seeded by ``seed``, computed directly
    (SplitMix64 output i depends only on seed + (i+1)*golden).
    """
    state = (int(seed) + (int(key) + 1) * _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fill_u64_numpy(state: np.ndarray, out: np.ndarray) -> None:
    """Pure-python xoshiro256** stream fill. Mutates state in place."""
    s0, s1, s2, s3 = (int(x) for x in state)
    n = out.shape[0]
    for i in range(n):
        r = (s1 * 5) & _MASK64
        r = ((r << 7) | (r >> 57)) & _MASK64
        out[i] = (r * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3


if backend.HAS_NUMBA:
    import numba

    @numba.njit(cache=True)
    def _fill_u64_numba(state, out):  # pragma: no cover - numba path
        s0 = state[0]
        s1 = state[1]
        s2 = state[2]
        s3 = state[3]
        five = np.uint64(5)
        nine = np.uint64(9)
        for i in range(out.shape[0]):
            r = s1 * five
            r = (r << np.uint64(7)) | (r >> np.uint64(57))
            out[i] = r * nine
            t = s1 << np.uint64(17)
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = (s3 << np.uint64(45)) | (s3 >> np.uint64(19))
        state[0] = s0
        state[1] = s1
        state[2] = s2
        state[3] = s3


class Xoshiro256StarStar:
    """xoshiro256** generator seeded via SplitMix64."""

    def __init__(self, seed: int):
        sm = int(seed) & _MASK64
        words = []
        for _ in range(4):
            sm, v = _splitmix64_next(sm)
            words.append(v)
        self._state = np.array(words, dtype=np.uint64)

    def fill_u64(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs as a uint64 array."""
        out = np.empty(int(n), dtype=np.uint64)
        if backend.USE_NUMBA:
            _fill_u64_numba(self._state, out)
        else:
            _fill_u64_numpy(self._state, out)
        return out

    def next_u64(self) -> int:
        return int(self.fill_u64(1)[0])

    def uniform01(self, n: int | None = None):
        """Uniform doubles in [0, 1) with 53-bit resolution."""
        raw = self.fill_u64(1 if n is None else n)
        vals = (raw >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return float(vals[0]) if n is None else vals

    def normal(self, n: int) -> np.ndarray:
        """``n`` standard normal draws via Box-Muller on stream pairs.

        Pair 2i/2i+1 of the raw stream produces outputs 2i (cosine
        branch) and 2i+1 (sine branch); an odd tail discards the last
        sine value.
        """
        n = int(n)
        n_pairs = (n + 1) // 2
        raw = self.fill_u64(2 * n_pairs)
        # u1 in (0, 1] so log never sees zero; u2 in [0, 1).
        u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _INV_2_53
        radius = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        out = np.empty(2 * n_pairs, dtype=np.float64)
        out[0::2] = radius * np.cos(theta)
        out[1::2] = radius * np.sin(theta)
        return out[:n]

    def int_below(self, bound: int) -> int:
        """Uniform integer in [0, bound) via 128-bit multiply-shift."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return (self.next_u64() * int(bound)) >> 64

    def sample_without_replacement(self, n: int, k: int) -> list[int]:
        """``k`` distinct indices from range(n), partial Fisher-Yates."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} from {n}")
        pool = list(range(n))
        for j in range(k):
            r = j + self.int_below(n - j)
            pool[j], pool[r] = pool[r], pool[j]
        return pool[:k]
