"""Versioned pseudorandom stream for reproducible fixtures.

Stream definition (version 1), so other implementations can reproduce it:

* seed -> initial state: ``splitmix64(seed mod 2**64)``
* step: ``state = state * 6364136223846793005 + 1442695040888963407 (mod 2**64)``
* output: each step's new state ``s`` yields ``(s >> 11) * 2**-53`` in [0, 1)

Draws are generated in blocks via precomputed jump-ahead constants, which is
bit-identical to stepping one value at a time.
"""

import numpy as np

PRNG_VERSION = 1

MULTIPLIER = 6364136223846793005
INCREMENT = 1442695040888963407
_MASK = (1 << 64) - 1
_BLOCK = 4096


def splitmix64(x):
    z = (x + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _jump_tables(count):
    mult = np.empty(count, dtype=np.uint64)
    inc = np.empty(count, dtype=np.uint64)
    a, c = 1, 0
    for j in range(count):
        a = (a * MULTIPLIER) & _MASK
        c = (c * MULTIPLIER + INCREMENT) & _MASK
        mult[j] = a
        inc[j] = c
    return mult, inc


_JUMP_MULT, _JUMP_INC = _jump_tables(_BLOCK)


class Lcg64:
    """64-bit linear congruential generator with vectorised block output."""

    def __init__(self, seed):
        self.state = splitmix64(int(seed) & _MASK)

    def next_uint64(self, n):
        out = np.empty(n, dtype=np.uint64)
        done = 0
        while done < n:
            take = min(_BLOCK, n - done)
            s = np.uint64(self.state)
            out[done:done + take] = _JUMP_MULT[:take] * s + _JUMP_INC[:take]
            self.state = int(out[done + take - 1])
            done += take
        return out

    def random(self, n):
        return (self.next_uint64(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def uniform(self, low, high, shape):
        n = int(np.prod(shape))
        return (low + (high - low) * self.random(n)).reshape(shape)
