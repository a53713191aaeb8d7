"""Counter-based pseudo-random numbers with a declared algorithm.

Draw ``i`` of a stream keyed by ``key`` is the splitmix64 finalizer applied to
``key + (i + 1) * 0x9E3779B97F4A7C15`` (mod 2**64), i.e. exactly the splitmix64
sequence seeded with ``key``. Uniforms take the top 53 bits; normals use
Box-Muller on consecutive uniform pairs. Child streams are keyed by
:func:`derive_seed`, so per-replication streams do not depend on execution order.
"""

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *indices: int) -> int:
    """Key of the child stream ``indices`` below ``seed``"""
    key = mix64(seed)
    for index in indices:
        key = mix64(key ^ mix64((index + 1) * GOLDEN_GAMMA))
    return key


class CounterRng:
    """Stateful cursor over a counter-based stream; ``spawn`` gives independent children"""

    def __init__(self, seed: int):
        self.key = int(seed) & MASK64
        self.counter = 0

    def spawn(self, *indices: int) -> 'CounterRng':
        return CounterRng(derive_seed(self.key, *indices))

    def raw(self, count: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + count + 1, dtype=np.uint64)
        self.counter += count
        with np.errstate(over='ignore'):
            z = np.uint64(self.key) + idx * np.uint64(GOLDEN_GAMMA)
            return _mix64_array(z)

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        count = 1 if size is None else int(np.prod(size))
        # strictly inside (0, 1)
        u = ((self.raw(count) >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
        u = low + (high - low) * u
        return float(u[0]) if size is None else u.reshape(size)

    def normal(self, size=None, loc: float = 0.0, scale: float = 1.0):
        count = 1 if size is None else int(np.prod(size))
        pairs = (count + 1) // 2
        u = self.uniform(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * math.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        z = loc + scale * z[:count]
        return float(z[0]) if size is None else z.reshape(size)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in [low, high)"""
        u = self.uniform(size)
        return (low + np.floor(np.asarray(u) * (high - low))).astype(int) if size is not None \
            else int(low + math.floor(u * (high - low)))

    def bernoulli(self, probs) -> np.ndarray:
        probs = np.asarray(probs, dtype=float)
        return (self.uniform(probs.shape) < probs).astype(int)
