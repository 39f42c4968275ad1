"""Deterministic numeric substrate: dense float64 matrices and a seeded PRNG.

Matrices are plain 2-D ``numpy.ndarray`` of float64 (row-major, rows are
samples). All operations here are pure: inputs are never modified and
identical inputs plus identical RNG state give bit-identical outputs on
every platform.

The PRNG is a counter-based splitmix64 stream: output ``i`` of a stream
with key ``k`` is ``mix64(k + (i+1) * GOLDEN)`` where ``mix64`` is the
splitmix64 finalizer (xor-shift/multiply). Because each output depends
only on (key, position), bulk generation vectorizes over numpy uint64
arrays and any draw can be reproduced from the seed alone. Streams are
split by hashing a label into a child key; a stream is single-owner and
advances its position on every draw.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ConfigError, ShapeError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

_U = np.uint64


def _mix64_int(x: int) -> int:
    """splitmix64 finalizer on a Python int (mod 2^64)."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX_A) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX_B) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def _mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer on a uint64 array."""
    x = (x ^ (x >> _U(30))) * _U(_MIX_A)
    x = (x ^ (x >> _U(27))) * _U(_MIX_B)
    return x ^ (x >> _U(31))


def derive_key(key: int, label: str | int) -> int:
    """Deterministic child key from (parent key, label).

    String labels are hashed with BLAKE2b (stable across platforms);
    integer labels go through the splitmix64 finalizer with distinct
    tagging so ``derive_key(k, 1)`` and ``derive_key(k, "1")`` differ.
    """
    if isinstance(label, str):
        digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
        h = int.from_bytes(digest, "little")
    elif isinstance(label, (int, np.integer)):
        h = _mix64_int((int(label) + _GOLDEN) & _MASK64)
    else:
        raise ConfigError(f"rng split label must be str or int, got {type(label).__name__}")
    return _mix64_int((key ^ h) + _GOLDEN)


class Rng:
    """Seedable, splittable, counter-based random stream.

    Single-owner by convention: share a stream by splitting it, never by
    handing the same object to two consumers.
    """

    __slots__ = ("key", "pos")

    def __init__(self, seed: int):
        self.key = int(seed) & _MASK64
        self.pos = 0

    def split(self, label: str | int) -> "Rng":
        """Child stream with key = hash(parent key, label); parent unchanged."""
        return Rng(derive_key(self.key, label))

    @property
    def state(self) -> tuple[int, int]:
        return (self.key, self.pos)

    def _raw(self, n: int) -> np.ndarray:
        """Next ``n`` uint64 outputs; advances the stream position."""
        idx = np.arange(self.pos + 1, self.pos + n + 1, dtype=np.uint64)
        self.pos += n
        return _mix64_array(_U(self.key) + idx * _U(_GOLDEN))

    def _uniform_flat(self, n: int) -> np.ndarray:
        """n doubles in [0, 1), 53-bit resolution."""
        return (self._raw(n) >> _U(11)).astype(np.float64) * 2.0**-53

    def uniform(self, rows: int, cols: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """rows x cols i.i.d. uniforms in [lo, hi)."""
        if not lo < hi:
            raise ConfigError(f"uniform bounds require lo < hi, got lo={lo}, hi={hi}")
        u = self._uniform_flat(rows * cols).reshape(rows, cols)
        return lo + (hi - lo) * u

    def normal(self, rows: int, cols: int) -> np.ndarray:
        """rows x cols i.i.d. standard normals (Box-Muller)."""
        n = rows * cols
        pairs = (n + 1) // 2
        # u1 in (0, 1] so log() stays finite
        u1 = (self._raw(pairs) >> _U(11)).astype(np.float64)
        u1 = (u1 + 1.0) * 2.0**-53
        u2 = self._uniform_flat(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return z[:n].reshape(rows, cols)

    def dropout_mask(self, rows: int, cols: int, rate: float) -> np.ndarray:
        """Inverted-dropout mask: 0 with probability rate, else 1/(1-rate)."""
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
        if rate == 0.0:
            return np.ones((rows, cols))
        keep = self._uniform_flat(rows * cols).reshape(rows, cols) >= rate
        return keep / (1.0 - rate)

    def bernoulli(self, n: int, p: float = 0.5) -> np.ndarray:
        """n draws in {0.0, 1.0} with P(1) = p."""
        return (self._uniform_flat(n) < p).astype(np.float64)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n)."""
        return np.argsort(self._raw(n), kind="stable")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Real matrix product; raises ShapeError naming both shapes on mismatch."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_grad(x: np.ndarray) -> np.ndarray:
    """Subgradient of relu: 1 where x > 0, else 0 (0 at x == 0)."""
    return (np.asarray(x, dtype=np.float64) > 0.0).astype(np.float64)


def dropout_mask(rng: Rng, rows: int, cols: int, rate: float) -> np.ndarray:
    """Functional form of Rng.dropout_mask (advances ``rng``)."""
    return rng.dropout_mask(rows, cols, rate)


def rng_uniform(rng: Rng, rows: int, cols: int, lo: float, hi: float) -> np.ndarray:
    """Functional form of Rng.uniform (advances ``rng``)."""
    return rng.uniform(rows, cols, lo, hi)
