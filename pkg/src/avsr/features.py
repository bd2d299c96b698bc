"""Frame-level feature post-processing.

A feature sequence is a ``(T, d)`` float array, one row per frame.
"""
from __future__ import annotations

import numpy as np

from .numerics import DTYPE

DELTA_WINDOW = 2


def _as_frames(seq) -> np.ndarray:
    x = np.asarray(seq, dtype=DTYPE)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"expected a (T, d) array with T >= 1, got shape {x.shape}")
    return x


def mean_normalize(seq) -> np.ndarray:
    x = _as_frames(seq)
    return x - x.mean(axis=0, keepdims=True)


def global_std(seqs, floor: float = 1e-8) -> np.ndarray:
    """Per-dimension standard deviation pooled over every frame of ``seqs``."""
    frames = np.concatenate([_as_frames(s) for s in seqs])
    return np.maximum(frames.std(axis=0), floor)


def scale_features(seq, std) -> np.ndarray:
    x = _as_frames(seq)
    std = np.asarray(std, dtype=x.dtype)
    if std.shape != (x.shape[1],):
        raise ValueError(f"scale vector of shape {std.shape} does not fit {x.shape[1]}-dim frames")
    return x / std


def deltas(seq, window: int = DELTA_WINDOW) -> np.ndarray:
    """Regression deltas over +-``window`` frames, edges replicated."""
    x = _as_frames(seq)
    T = x.shape[0]
    padded = np.concatenate([np.repeat(x[:1], window, 0), x, np.repeat(x[-1:], window, 0)])
    num = np.zeros_like(x)
    for n in range(1, window + 1):
        num += n * (padded[window + n : window + n + T] - padded[window - n : window - n + T])
    return num / (2.0 * sum(n * n for n in range(1, window + 1)))


def append_deltas(seq) -> np.ndarray:
    x = _as_frames(seq)
    d1 = deltas(x)
    return np.concatenate([x, d1, deltas(d1)], axis=1)


def splice(seq, left: int, right: int) -> np.ndarray:
    """Stack each frame with ``left`` past and ``right`` future frames.

    Out-of-range context replicates the first/last frame. The output block
    order is ``[x[t-left], ..., x[t], ..., x[t+right]]``.
    """
    if left < 0 or right < 0:
        raise ValueError("context sizes must be non-negative")
    x = _as_frames(seq)
    T = x.shape[0]
    idx = np.clip(np.arange(T)[:, None] + np.arange(-left, right + 1)[None, :], 0, T - 1)
    return x[idx].reshape(T, -1)


def power(seq) -> float:
    """Mean squared value of the mean-normalized sequence."""
    return float(np.mean(mean_normalize(seq) ** 2))


def noise_scale(clean, noise, snr_db: float) -> float:
    clean = _as_frames(clean)
    noise = _as_frames(noise)[: clean.shape[0]]
    p_noise = power(noise)
    if p_noise <= 0.0:
        raise ValueError("noise sequence has zero power")
    if np.isinf(snr_db) and snr_db > 0:
        return 0.0
    return float(np.sqrt(power(clean) / (p_noise * 10.0 ** (snr_db / 10.0))))


def mix_noise_at_snr(clean, noise, snr_db: float) -> np.ndarray:
    """Add ``noise`` to ``clean`` scaled so that their power ratio is ``snr_db``.

    Only the first ``len(clean)`` noise frames are used.
    """
    clean = _as_frames(clean)
    noise = _as_frames(noise)
    if noise.shape[1] != clean.shape[1]:
        raise ValueError(f"dimension mismatch: clean d={clean.shape[1]}, noise d={noise.shape[1]}")
    if noise.shape[0] < clean.shape[0]:
        raise ValueError("noise sequence is shorter than the clean sequence")
    alpha = noise_scale(clean, noise, snr_db)
    return clean + alpha * noise[: clean.shape[0]]

