"""Small numerical helpers shared by every other module.

Everything operates on plain ``numpy`` arrays in float64. Randomness is
always threaded through an explicit :class:`numpy.random.Generator`.
"""
from __future__ import annotations

import zlib

import numpy as np

DTYPE = np.float64


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; string keys are hashed with crc32."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        if isinstance(k, str):
            entropy.append(zlib.crc32(k.encode("utf-8")))
        else:
            entropy.append(int(k))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-d operands, got {a.ndim}-d and {b.ndim}-d")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def softmax_row(logits) -> np.ndarray:
    x = np.asarray(logits, dtype=DTYPE)
    if x.size == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(x - x.max())
    return e / e.sum()


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a T x K matrix."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def log_sum_exp(values) -> float:
    v = np.asarray(values, dtype=DTYPE).ravel()
    if v.size == 0:
        return -np.inf
    m = v.max()
    if m == -np.inf:
        return -np.inf
    return float(m + np.log(np.exp(v - m).sum()))


def sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def safe_log(p, floor: float = 1e-12):
    return np.log(np.maximum(p, floor))
