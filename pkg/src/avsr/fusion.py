"""Audio-visual fusion: feature concatenation and frame-level decision fusion.

Decision fusion combines the log posteriors of the audio and lip models
with weights ``gamma`` and ``1 - gamma`` and subtracts log class priors.
``gamma`` is set per utterance from the divergence between the two models'
posteriors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctc import ALPHABET
from .decode import best_path_decode, cer
from .numerics import DTYPE, safe_log

PROB_FLOOR = 1e-12
PRIOR_FLOOR = 1e-8


@dataclass
class FusionConfig:
    bias: float = 0.0
    gamma: float | None = None  # fixed override

    def __post_init__(self):
        if self.gamma is not None and not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma override must lie in [0, 1], got {self.gamma}")


def concat_features(audio, video) -> np.ndarray:
    a = np.asarray(audio, dtype=DTYPE)
    v = np.asarray(video, dtype=DTYPE)
    if a.shape[0] != v.shape[0]:
        raise ValueError(f"stream lengths differ: {a.shape[0]} vs {v.shape[0]}")
    return np.concatenate([a, v], axis=1)


def estimate_priors(frame_labels, n_classes: int, floor: float = PRIOR_FLOOR) -> np.ndarray:
    """Relative class frequencies over all frames, floored and renormalised."""
    counts = np.zeros(n_classes)
    total = 0
    for lab in frame_labels:
        lab = np.asarray(lab, dtype=np.int64)
        counts += np.bincount(lab, minlength=n_classes)[:n_classes]
        total += lab.size
    if total == 0:
        raise ValueError("no frame labels to estimate priors from")
    p = np.maximum(counts / total, floor)
    return p / p.sum()


def pseudo_log_likelihood(post, priors) -> np.ndarray:
    return safe_log(np.asarray(post, dtype=DTYPE), PROB_FLOOR) - np.log(priors)


def kl_divergence(p_v, p_a) -> float:
    """``D(p_v || p_a)`` for two distributions; zero-probability terms of ``p_v`` drop out."""
    p_v = np.asarray(p_v, dtype=DTYPE)
    q = np.maximum(np.asarray(p_a, dtype=DTYPE), PROB_FLOOR)
    nz = p_v > 0
    return float(np.sum(p_v[nz] * (np.log(p_v[nz]) - np.log(q[nz]))))


def utterance_kl(post_v, post_a) -> float:
    """Mean per-frame divergence of the audio posteriors from the video posteriors."""
    post_v = np.asarray(post_v, dtype=DTYPE)
    q = np.maximum(np.asarray(post_a, dtype=DTYPE), PROB_FLOOR)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(post_v > 0, post_v * (np.log(post_v) - np.log(q)), 0.0)
    return float(terms.sum(axis=1).mean())


def gamma_from_kl(d_kl: float, config: FusionConfig) -> float:
    if config.gamma is not None:
        return config.gamma
    z = d_kl - config.bias
    # logistic in the form that cannot overflow
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


def decision_fuse(post_a, post_v, gamma: float, priors) -> np.ndarray:
    post_a = np.asarray(post_a, dtype=DTYPE)
    post_v = np.asarray(post_v, dtype=DTYPE)
    if post_a.shape[0] != post_v.shape[0]:
        raise ValueError(f"stream lengths differ: {post_a.shape[0]} vs {post_v.shape[0]}")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    log_prior = np.log(priors)
    if gamma == 1.0:
        return safe_log(post_a) - log_prior
    if gamma == 0.0:
        return safe_log(post_v) - log_prior
    return gamma * safe_log(post_a) + (1.0 - gamma) * safe_log(post_v) - log_prior


def fuse_utterance(post_a, post_v, priors, config: FusionConfig):
    """Adaptive decision fusion for one utterance; returns ``(scores, gamma)``."""
    gamma = gamma_from_kl(utterance_kl(post_v, post_a), config)
    return decision_fuse(post_a, post_v, gamma, priors), gamma


def tune_bias(post_a_list, post_v_list, references, priors, b_grid):
    """Pick the sigmoid offset minimising decision-fusion CER on a validation set.

    Inputs are per-utterance posteriorgrams of the audio and lip models and
    reference transcripts. Returns ``(best_b, [(b, cer), ...])``; ties go to
    the smaller ``b``.
    """
    grid = sorted(float(b) for b in b_grid)
    if not grid:
        raise ValueError("empty bias grid")
    kls = [utterance_kl(pv, pa) for pa, pv in zip(post_a_list, post_v_list)]
    table = []
    for b in grid:
        cfg = FusionConfig(bias=b)
        hyps = []
        for pa, pv, d in zip(post_a_list, post_v_list, kls):
            scores = decision_fuse(pa, pv, gamma_from_kl(d, cfg), priors)
            hyps.append(ALPHABET.decode(best_path_decode(scores).hypothesis))
        table.append((b, cer(hyps, references)))
    best = min(table, key=lambda row: (row[1], row[0]))
    return best[0], table
