"""Deterministic, counter-based random number generation.

Every draw is a pure function of ``(seed, counter)``: the i-th raw 64-bit
word is ``mix64(seed + (counter + i) * GOLDEN)`` where ``mix64`` is the
splitmix64 finalizer. Uniforms take the top 53 bits of a word; gaussians
use the basic Box-Muller transform on uniform pairs. Both mappings are
part of the reproducibility contract and must not change: identical seeds
replay identical streams bit-for-bit on any platform.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_MASK = (1 << 64) - 1
_INV_2_53 = float(2.0**-53)


class Rng:
    """Counter-based generator: a seed plus a monotonically advancing counter.

    The generator never buffers samples, so interleaving calls of different
    sizes is well-defined: each call consumes a contiguous block of counter
    values and advances the counter past it.
    """

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int):
        self.seed = np.uint64(int(seed) & _U64_MASK)
        self.counter = 0

    def _next_words(self, n: int) -> np.ndarray:
        """Consume ``n`` counter values and return the mixed 64-bit words."""
        z = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            np.multiply(z, _GOLDEN, out=z)
            z += self.seed
            z ^= z >> np.uint64(30)
            np.multiply(z, _MIX1, out=z)
            z ^= z >> np.uint64(27)
            np.multiply(z, _MIX2, out=z)
            z ^= z >> np.uint64(31)
        return z

    def uniform(self, n: int) -> np.ndarray:
        """``n`` i.i.d. samples from Uniform[0, 1), one word each."""
        if n < 0:
            raise ValueError("sample count must be non-negative")
        return (self._next_words(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def normal(self, n: int, stddev: float = 1.0) -> np.ndarray:
        """``n`` i.i.d. samples from Normal(0, stddev^2).

        Box-Muller on pairs: a block of 2k words yields k radii from the
        first half (mapped to (0, 1] so the log is finite) and k angles
        from the second half; outputs interleave cos/sin terms. The block
        is consumed whole even when ``n`` is odd.
        """
        if n < 0:
            raise ValueError("sample count must be non-negative")
        if stddev <= 0.0:
            raise ValueError("stddev must be positive")
        if n == 0:
            return np.empty(0, dtype=np.float64)
        k = (n + 1) // 2
        words = self._next_words(2 * k)
        words >>= np.uint64(11)
        words[:k] += np.uint64(1)
        scaled = words.astype(np.float64)
        scaled *= _INV_2_53
        u1, u2 = scaled[:k], scaled[k:]
        np.log(u1, out=u1)
        u1 *= -2.0
        np.sqrt(u1, out=u1)
        u2 *= 2.0 * np.pi
        out = np.empty(2 * k, dtype=np.float64)
        cos_part, sin_part = out[0::2], out[1::2]
        np.cos(u2, out=cos_part)
        cos_part *= u1
        np.sin(u2, out=sin_part)
        sin_part *= u1
        if stddev != 1.0:
            out *= stddev
        return out[:n]
