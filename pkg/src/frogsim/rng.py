"""Seeded, splittable random streams usable from Python and from numba kernels.

Every trial owns an independent stream identified by ``(master_seed,
stream_index)``. The 256-bit generator state is derived as follows:

1. ``h = fmix64(master_seed + GOLDEN)``
2. ``h = fmix64(h ^ (stream_index * MIX_INDEX + GOLDEN))``
3. the four words of a xoshiro256** state are the next four outputs of a
   splitmix64 sequence started at ``h``.

``fmix64`` is the splitmix64 finalizer (Stafford's "Mix13"), a 64-bit
avalanche function: flipping any input bit flips each output bit with
probability close to 1/2. All arithmetic is modulo 2**64, so the derived
sequences are bit-identical on every platform.

Kernels receive the raw ``uint64[4]`` state array and advance it in place,
which lets a compiled trial loop seed thousands of streams per millisecond.
"""

from __future__ import annotations

import numba as nb
import numpy as np

_U64 = (1 << 64) - 1

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX_INDEX = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_NEG_53 = 1.0 / 9007199254740992.0


@nb.njit(cache=True, nogil=True)
def fmix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True, nogil=True)
def stream_key(master, index):
    h = fmix64(master + GOLDEN)
    return fmix64(h ^ (index * MIX_INDEX + GOLDEN))


@nb.njit(cache=True, nogil=True)
def seed_state(master, index, s):
    x = stream_key(master, index)
    for i in range(4):
        x = x + GOLDEN
        s[i] = fmix64(x)


@nb.njit(cache=True, nogil=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@nb.njit(cache=True, nogil=True)
def next_u64(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@nb.njit(cache=True, nogil=True)
def uniform(s):
    """Uniform double on [0, 1) with 53 random bits."""
    return float(next_u64(s) >> np.uint64(11)) * _TWO_NEG_53


@nb.njit(cache=True, nogil=True)
def below(s, n):
    """Uniform integer on {0, ..., n-1}; bias is at most n / 2**53."""
    return np.int64(uniform(s) * n)


def _u64(x: int) -> np.uint64:
    return np.uint64(int(x) & _U64)


class RngStream:
    """One reproducible random stream.

    Not thread-safe: a stream must be advanced by a single thread. Create one
    stream per trial (or per worker) instead of sharing.
    """

    __slots__ = ("master_seed", "stream_index", "state")

    def __init__(self, master_seed: int, stream_index: int = 0):
        self.master_seed = int(master_seed) & _U64
        self.stream_index = int(stream_index) & _U64
        self.state = np.empty(4, dtype=np.uint64)
        seed_state(_u64(self.master_seed), _u64(self.stream_index), self.state)

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_index={self.stream_index})"

    def next_u64(self) -> int:
        return int(next_u64(self.state))

    def random(self) -> float:
        return float(uniform(self.state))

    def below(self, n: int) -> int:
        return int(below(self.state, n))

    def spawn(self, index: int) -> "RngStream":
        """Sibling stream under the same master seed."""
        return RngStream(self.master_seed, index)


def master_u64(seed: int) -> np.uint64:
    """Normalize a user seed (any Python int) for kernel arguments."""
    return _u64(seed)


def derive_seed(master_seed: int, *path: int) -> int:
    """Deterministic child seed, e.g. one per sweep point."""
    h = _u64(master_seed)
    for part in path:
        h = _u64(stream_key(h, _u64(part)))
    return int(h)
