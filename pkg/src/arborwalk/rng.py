"""Keyed counter-based random streams.

Every random quantity in the package is a pure function of a 64-bit key and
a counter, computed with the splitmix64 finalizer.  A key is derived by
folding integers (seed, environment index, trial index, vertex id, ...) into
a single word, so that substreams never have to be stored or advanced in a
particular order.  The same functions are used from Python and from inside
numba kernels, which keeps both routes bit-identical.
"""

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, nogil=True)
def mix64(z):
    z = np.uint64(z)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def fold(key, x):
    """Combine a key with one more integer label."""
    return mix64(np.uint64(key) ^ mix64(np.uint64(x) + GOLDEN))


@njit(cache=True, nogil=True)
def to_unit(z):
    """Map a 64-bit word to a double in the open interval (0, 1)."""
    return (np.float64(np.uint64(z) >> _S11) + 0.5) * _INV53


@njit(cache=True, nogil=True)
def uniform_at(key, counter):
    return to_unit(mix64(np.uint64(key) + (np.uint64(counter) + np.uint64(1)) * GOLDEN))


@njit(cache=True, nogil=True)
def next_uniform(state):
    """Advance a one-element uint64 state array and return a uniform draw."""
    state[0] = state[0] + GOLDEN
    return to_unit(mix64(state[0]))


@njit(cache=True, nogil=True)
def _uniform_block(key, labels):
    out = np.empty(labels.shape[0])
    for i in range(labels.shape[0]):
        out[i] = uniform_at(fold(key, labels[i]), 0)
    return out


def _as_word(x):
    return np.uint64(int(x) & 0xFFFFFFFFFFFFFFFF)


def derive_key(seed, *labels):
    """Fold ``seed`` and any number of integer labels into a 64-bit key."""
    key = np.uint64(mix64(_as_word(int(seed) + int(GOLDEN))))
    for x in labels:
        key = np.uint64(fold(key, _as_word(x)))
    return int(key)


def keyed_uniforms(key, labels):
    """One uniform per label, each from the substream ``fold(key, label)``.

    The value attached to a label does not depend on which other labels are
    requested or in what order.
    """
    labels = np.ascontiguousarray(labels, dtype=np.int64).astype(np.uint64)
    return _uniform_block(_as_word(key), labels)


class KeyedStream:
    """Sequential uniform stream attached to one key.

    Thin Python wrapper around the counter scheme used by the kernels; handy
    in tests and for scalar sampling.
    """

    def __init__(self, key):
        self.key = int(key) & 0xFFFFFFFFFFFFFFFF
        self._state = np.array([self.key], dtype=np.uint64)

    @classmethod
    def from_seed(cls, seed, *labels):
        return cls(derive_key(seed, *labels))

    def random(self):
        return float(next_uniform(self._state))

    def child(self, *labels):
        return KeyedStream(derive_key(self.key, *labels))
