"""Counter-based random numbers keyed by tree position.

Every node of the cascade carries a 64-bit key derived from its parent's key
and its child index, so the realization at a node depends only on
(seed, replica, path).  Uniforms are produced by hashing (key, tag, counter)
with the splitmix64 finalizer; everything is vectorized over uint64 arrays.
"""
import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)

TAG_ROOT = np.uint64(0x5EED5EED5EED5EED)
TAG_CHILD = np.uint64(0xC41D0000C41D0000)
TAG_ATOM = np.uint64(0xA70A70A70A70A70A)
TAG_BALL = np.uint64(0xBA11BA11BA11BA11)
TAG_LABEL = np.uint64(0x1ABE11ABE11ABE11)

_INV53 = 2.0 ** -53


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _offset(counter):
    with np.errstate(over="ignore"):
        return np.asarray(counter, dtype=np.uint64) * _GOLDEN


def root_key(seed, replica=0):
    """Key of the root node for a given seed and replica index."""
    s = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        k = mix64(mix64(s ^ TAG_ROOT) + _offset(int(replica) + 1))
    return np.uint64(k)


def child_keys(parent_keys, index):
    """Keys of children number `index` (1-based) of the given parents."""
    with np.errstate(over="ignore"):
        return mix64(mix64(np.asarray(parent_keys, dtype=np.uint64) ^ TAG_CHILD)
                     + _offset(index))


def uniforms(keys, tag, counter):
    """Uniform(0,1) variates, open at both ends, one per key (broadcasts with counter)."""
    with np.errstate(over="ignore"):
        x = mix64(mix64(np.asarray(keys, dtype=np.uint64) ^ tag) + _offset(counter))
    return ((x >> _S11).astype(np.float64) + 0.5) * _INV53


class KeyedStream:
    """Sequential view of the uniforms attached to one (key, tag) pair.

    Mimics the ``random(size)`` method of ``numpy.random.Generator`` so it can
    be handed to code that otherwise takes a Generator.
    """

    def __init__(self, key, tag=TAG_ATOM, start=0):
        self.key = np.uint64(key)
        self.tag = np.uint64(tag)
        self.counter = int(start)

    def random(self, size=None):
        if size is None:
            u = uniforms(self.key, self.tag, self.counter)
            self.counter += 1
            return float(u)
        n = int(np.prod(size))
        c = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter += n
        return uniforms(self.key, self.tag, c).reshape(size)
