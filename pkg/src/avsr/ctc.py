"""Connectionist temporal classification.

Label sequences are integer arrays over the output classes, with the blank
fixed at index 0. All recursions run in log space.
"""
from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from .numerics import log_softmax, log_sum_exp

BLANK = 0
NEG_INF = -np.inf


class CTCInfeasibleError(ValueError):
    """The label sequence cannot be emitted in the available number of frames."""


class StaleCacheError(RuntimeError):
    pass


class Alphabet:
    """Bijection between characters and output indices; index 0 is the blank."""

    def __init__(self, symbols: str = string.ascii_uppercase + " ", blank: str = "_"):
        if len(set(symbols)) != len(symbols) or blank in symbols:
            raise ValueError("alphabet symbols must be unique and exclude the blank")
        self.symbols = symbols
        self.blank = blank
        self._index = {ch: i + 1 for i, ch in enumerate(symbols)}

    def __len__(self) -> int:
        return len(self.symbols) + 1

    def encode(self, text: str) -> np.ndarray:
        try:
            return np.array([self._index[ch] for ch in text], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"character {exc.args[0]!r} is not in the alphabet") from None

    def decode(self, indices) -> str:
        out = []
        for k in indices:
            k = int(k)
            if k == BLANK:
                raise ValueError("label sequences may not contain the blank")
            out.append(self.symbols[k - 1])
        return "".join(out)

    def symbol(self, k: int) -> str:
        return self.blank if k == BLANK else self.symbols[k - 1]


ALPHABET = Alphabet()


def collapse(alignment, blank: int = BLANK) -> np.ndarray:
    """Merge adjacent repeats, then drop blanks."""
    a = np.asarray(alignment, dtype=np.int64).ravel()
    if a.size == 0:
        return a
    keep = np.ones(a.size, dtype=bool)
    keep[1:] = a[1:] != a[:-1]
    keep &= a != blank
    return a[keep]


def min_frames(label) -> int:
    """Shortest alignment length able to emit ``label``."""
    label = np.asarray(label, dtype=np.int64)
    if label.size == 0:
        return 0
    return int(label.size + np.count_nonzero(label[1:] == label[:-1]))


def _extend(label, blank: int) -> np.ndarray:
    ext = np.full(2 * len(label) + 1, blank, dtype=np.int64)
    ext[1::2] = label
    return ext


def _skip_mask(ext: np.ndarray, blank: int) -> np.ndarray:
    """skip[s] is True when state s may be entered from s-2."""
    skip = np.zeros(ext.size, dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    return skip


@dataclass
class CTCCache:
    label: np.ndarray
    post: np.ndarray
    log_alpha: np.ndarray
    log_beta: np.ndarray  # excludes the emission at frame t
    log_prob: float
    ext: np.ndarray


def _check(post, label, blank):
    post = np.asarray(post, dtype=np.float64)
    if post.ndim != 2:
        raise ValueError(f"posteriorgram must be (T, K), got shape {post.shape}")
    label = np.asarray(label, dtype=np.int64).ravel()
    if np.any(label == blank):
        raise ValueError("label sequence contains the blank symbol")
    if label.size and (label.min() < 0 or label.max() >= post.shape[1]):
        raise ValueError("label index out of range for the posteriorgram")
    return post, label


def _log_post(post, log_post):
    if log_post is not None:
        return np.asarray(log_post, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.log(post)


def ctc_log_likelihood(post, label, blank: int = BLANK, log_post=None):
    """Return ``(log P(label | O), cache)`` by the forward-backward recursions.

    ``log_post`` may be supplied (e.g. a log-softmax of the logits) to avoid
    taking logs of underflowed posteriors.
    """
    post, label = _check(post, label, blank)
    T = post.shape[0]
    need = min_frames(label)
    if T < need:
        raise CTCInfeasibleError(f"label needs at least {need} frames, sequence has {T}")
    lp = _log_post(post, log_post)
    ext = _extend(label, blank)
    U = ext.size
    skip = _skip_mask(ext, blank)
    emit = lp[:, ext]

    alpha = np.full((T, U), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if U > 1:
        alpha[0, 1] = emit[0, 1]
    prev1 = np.empty(U)
    prev2 = np.empty(U)
    with np.errstate(invalid="ignore"):
        for t in range(1, T):
            a = alpha[t - 1]
            prev1[0] = NEG_INF
            prev1[1:] = a[:-1]
            prev2[:] = NEG_INF
            prev2[2:] = np.where(skip[2:], a[:-2], NEG_INF)
            alpha[t] = np.logaddexp(np.logaddexp(a, prev1), prev2) + emit[t]

        beta = np.full((T, U), NEG_INF)
        beta[T - 1, U - 1] = 0.0
        if U > 1:
            beta[T - 1, U - 2] = 0.0
        nxt1 = np.empty(U)
        nxt2 = np.empty(U)
        for t in range(T - 2, -1, -1):
            b = beta[t + 1] + emit[t + 1]
            nxt1[-1] = NEG_INF
            nxt1[:-1] = b[1:]
            nxt2[:] = NEG_INF
            nxt2[:-2] = np.where(skip[2:], b[2:], NEG_INF)
            beta[t] = np.logaddexp(np.logaddexp(b, nxt1), nxt2)

    final = alpha[T - 1, U - 1] if U == 1 else np.logaddexp(alpha[T - 1, U - 1], alpha[T - 1, U - 2])
    log_prob = float(final)
    return log_prob, CTCCache(label, post, alpha, beta, log_prob, ext)


def occupancy(cache: CTCCache, n_classes: int) -> np.ndarray:
    """Per-frame posterior probability of each output class along valid alignments."""
    T = cache.log_alpha.shape[0]
    if cache.log_prob == NEG_INF:
        raise ValueError("label has zero probability; occupancy undefined")
    with np.errstate(invalid="ignore"):
        state = np.exp(cache.log_alpha + cache.log_beta - cache.log_prob)
    state = np.nan_to_num(state, nan=0.0)
    occ = np.zeros((T, n_classes))
    np.add.at(occ.T, cache.ext, state.T)
    return occ


def ctc_gradient(post, label, cache: CTCCache) -> np.ndarray:
    """Gradient of ``-log P(label | O)`` with respect to the softmax logits."""
    post = np.asarray(post, dtype=np.float64)
    label = np.asarray(label, dtype=np.int64).ravel()
    if (
        cache.post.shape != post.shape
        or not np.array_equal(cache.label, label)
        or not (cache.post is post or np.array_equal(cache.post, post))
    ):
        raise StaleCacheError("CTC cache was computed for a different posteriorgram or label")
    return post - occupancy(cache, post.shape[1])


def ctc_loss_and_grad(logits, label, blank: int = BLANK):
    """``(-log P, d/dlogits)`` straight from pre-softmax activations."""
    lp = log_softmax(logits)
    post = np.exp(lp)
    log_prob, cache = ctc_log_likelihood(post, label, blank, log_post=lp)
    return -log_prob, ctc_gradient(post, label, cache)


def best_alignment(post, label, blank: int = BLANK, log_post=None) -> np.ndarray:
    """Most probable frame alignment of ``label`` (Viterbi); returns per-frame classes."""
    post, label = _check(post, label, blank)
    T = post.shape[0]
    need = min_frames(label)
    if T < need:
        raise CTCInfeasibleError(f"label needs at least {need} frames, sequence has {T}")
    lp = _log_post(post, log_post)
    ext = _extend(label, blank)
    U = ext.size
    skip = _skip_mask(ext, blank)
    emit = lp[:, ext]
    score = np.full((T, U), NEG_INF)
    back = np.zeros((T, U), dtype=np.int8)
    score[0, 0] = emit[0, 0]
    if U > 1:
        score[0, 1] = emit[0, 1]
    for t in range(1, T):
        a = score[t - 1]
        cand = np.full((3, U), NEG_INF)
        cand[0] = a
        cand[1, 1:] = a[:-1]
        cand[2, 2:] = np.where(skip[2:], a[:-2], NEG_INF)
        # argmax keeps the first maximum: prefer staying, then the shortest jump
        step = np.argmax(cand, axis=0)
        back[t] = step
        score[t] = cand[step, np.arange(U)] + emit[t]
    if U == 1 or score[T - 1, U - 1] >= score[T - 1, U - 2]:
        s = U - 1
    else:
        s = U - 2
    path = np.empty(T, dtype=np.int64)
    for t in range(T - 1, -1, -1):
        path[t] = ext[s]
        s -= back[t, s]
    return path


def brute_force_log_likelihood(post, label, blank: int = BLANK, max_paths: int = 10**7) -> float:
    """Sum the probability of every alignment whose collapse equals ``label``.

    Exponential in T; meant as a check on :func:`ctc_log_likelihood` for tiny
    instances only.
    """
    post, label = _check(post, label, blank)
    T, K = post.shape
    if K**T > max_paths:
        raise ValueError(f"{K}^{T} alignments exceeds the enumeration limit of {max_paths}")
    S = label.size
    if S > T:
        return NEG_INF
    lp = _log_post(post, None)
    total = []
    chunk = 1 << 16
    powers = K ** np.arange(T - 1, -1, -1, dtype=np.int64)
    lab = np.append(label, -1)
    for start in range(0, K**T, chunk):
        codes = np.arange(start, min(start + chunk, K**T), dtype=np.int64)
        paths = (codes[:, None] // powers[None, :]) % K
        emitted = paths != blank
        emitted[:, 1:] &= paths[:, 1:] != paths[:, :-1]
        count = emitted.sum(axis=1)
        pos = np.cumsum(emitted, axis=1) - 1
        ok = np.where(emitted, paths == lab[np.clip(pos, 0, S)], True).all(axis=1) & (count == S)
        if ok.any():
            sel = paths[ok]
            with np.errstate(invalid="ignore"):
                total.append(lp[np.arange(T)[None, :], sel].sum(axis=1))
    if not total:
        return NEG_INF
    return log_sum_exp(np.concatenate(total))
