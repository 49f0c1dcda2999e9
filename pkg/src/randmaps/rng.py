"""Counter-based, splittable random streams.

A stream is identified by ``(seed, stream)``; draw number ``c`` of that
stream is ``mix64(key + c * GOLDEN)`` where ``key`` is a hash of the pair.
There is no state to carry around, so a trajectory simulated inside a
compiled loop, a vectorised numpy loop, or :func:`sample_sequence` in pure
Python all see the same numbers.

The mixer is the SplitMix64 finaliser (Steele, Lea & Flood 2014).
"""

import numpy as np

from ._accel import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0x632BE59BD9B4E019)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def _mix64_py(z):
    z = z + GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


mix64 = njit(cache=True)(_mix64_py)


def _key_py(seed, stream):
    return _mix64_py(_mix64_py(seed ^ _SEED_SALT) ^ _mix64_py(stream))


def _u01_py(key, ctr):
    return (_mix64_py(key + ctr * GOLDEN) >> _S11) * _INV53


@njit(cache=True)
def u01(key, ctr):
    """Uniform double in [0, 1) for draw ``ctr`` of the stream ``key``."""
    z = mix64(key + ctr * GOLDEN)
    return (z >> _S11) * _INV53


def stream_keys(seed, streams):
    """Keys for the given stream ids under ``seed`` (uint64 array)."""
    s = np.atleast_1d(np.asarray(streams, dtype=np.uint64))
    seed_arr = np.full(s.shape, np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _key_py(seed_arr, s)


def stream_key(seed, stream):
    return stream_keys(seed, [stream])[0]


def uniforms(key, counters):
    """Vectorised draws for one key (or a broadcastable key array)."""
    k = np.asarray(key, dtype=np.uint64)
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _u01_py(k, c).astype(np.float64)


class Streams:
    """Factory of independent streams under one seed.

    ``Streams(seed).keys(n, offset)`` hands out keys for stream ids
    ``offset, ..., offset + n - 1``. Distinct ids are independent streams.
    """

    def __init__(self, seed):
        self.seed = int(seed)

    def keys(self, n, offset=0):
        return stream_keys(self.seed, np.arange(offset, offset + n, dtype=np.uint64))

    def key(self, stream):
        return stream_key(self.seed, stream)

    def uniforms(self, stream, n, start=0):
        return uniforms(self.key(stream), np.arange(start, start + n, dtype=np.uint64))

    def __repr__(self):
        return f"Streams(seed={self.seed})"
