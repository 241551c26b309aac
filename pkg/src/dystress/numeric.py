"""Deterministic numeric substrate: seeded RNG, stable softmax, finite differences.

Everything here is float64. Reductions inside kernels use a fixed
left-to-right order (cumulative sums) so repeated runs produce bit-identical
results on the same machine.
"""

from __future__ import annotations

import hashlib
from typing import Callable

import numpy as np

from .errors import NumericError, ValidationError

DEFAULT_FD_EPS = 1e-6


def _stream_id(tag: str) -> int:
    """Stable 64-bit id for a named substream (platform independent)."""
    digest = hashlib.blake2s(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class Rng:
    """Counter-based random generator (Philox) with derivable substreams.

    Two instances built with the same (seed, stream) produce identical
    sample streams. Substreams derived from one seed via `substream` are
    statistically independent, so data generation, weight init, and
    augmentation can share a single experiment seed.
    """

    def __init__(self, seed: int, stream: int = 0):
        if not (0 <= int(seed) < 2**64):
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.stream = int(stream) % 2**64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def substream(self, tag: str, index: int = 0) -> "Rng":
        """Fresh generator for (tag, index), derived from this seed only."""
        return Rng(self.seed, stream=_stream_id(tag) ^ (index * 0x9E3779B97F4A7C15))

    def uniform(self, size=None) -> np.ndarray:
        """Uniform float64 in [0, 1)."""
        return self._gen.random(size)

    def normal(self, size=None) -> np.ndarray:
        """Standard normal float64 variates."""
        return self._gen.standard_normal(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def row_sums(m: np.ndarray) -> np.ndarray:
    """Row sums with left-to-right (index-ascending) accumulation order."""
    return np.cumsum(m, axis=1)[:, -1]


def stable_row_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction; rows sum to 1 within 1e-12.

    Accepts any finite float matrix; magnitudes of order 1e3 do not overflow
    because the row maximum is subtracted before exponentiation.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim == 1:
        return stable_row_softmax(logits[None, :])[0]
    if not np.all(np.isfinite(logits)):
        raise NumericError("softmax input contains non-finite entries")
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / row_sums(e)[:, None]


def row_log_sum_exp(logits: np.ndarray) -> np.ndarray:
    """log(sum(exp(row))) per row, max-shifted, left-to-right accumulation."""
    logits = np.asarray(logits, dtype=np.float64)
    m = logits.max(axis=1)
    return m + np.log(row_sums(np.exp(logits - m[:, None])))


def finite_difference_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = DEFAULT_FD_EPS
) -> np.ndarray:
    """Central-difference gradient of a scalar field over a flat vector.

    Returns (f(x + eps*e_k) - f(x - eps*e_k)) / (2 eps) per coordinate.
    Raises NumericError naming the coordinate if an evaluation is non-finite.
    """
    if eps <= 0:
        raise ValidationError(f"finite-difference step must be positive, got {eps}")
    x = np.asarray(x, dtype=np.float64).copy()
    grad = np.zeros_like(x)
    for k in range(x.size):
        orig = x[k]
        x[k] = orig + eps
        f_plus = f(x)
        x[k] = orig - eps
        f_minus = f(x)
        x[k] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"non-finite function value while perturbing coordinate {k}")
        grad[k] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def fmt(x) -> str:
    """Shortest round-trip decimal form of a float (CSV cell formatting)."""
    return repr(float(x))


def max_relative_error(approx: np.ndarray, reference: np.ndarray) -> float:
    """Norm-wise relative error: max|a - r| / max(max|r|, 1e-12)."""
    approx = np.asarray(approx, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    scale = max(float(np.max(np.abs(reference)) if reference.size else 0.0), 1e-12)
    return float(np.max(np.abs(approx - reference)) / scale) if approx.size else 0.0
