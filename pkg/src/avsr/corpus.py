"""Synthetic GRID-style corpus with paired audio-like and lip-like streams.

Each character of a transcript is rendered as a run of identical prototype
frames plus Gaussian jitter. The audio stream has one prototype per
character; the video stream has one prototype per viseme class, so
characters in the same class are visually indistinguishable.

Video frames also carry a slowly varying appearance drift (lighting, pose)
confined to directions orthogonal to the viseme prototypes. It has no
bearing on the transcript but dominates the raw video variance.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .ctc import ALPHABET
from .io import UtteranceRecord, write_feat, write_manifest
from .numerics import derive_rng, make_rng

GRID_SLOTS = {
    "command": ["BIN", "LAY", "PLACE", "SET"],
    "color": ["BLUE", "GREEN", "RED", "WHITE"],
    "preposition": ["AT", "BY", "IN", "WITH"],
    "letter": [c for c in "ABCDEFGHIJKLMNOPQRSTUVXYZ"],
    "digit": ["ZERO", "ONE", "TWO", "THREE", "FOUR", "FIVE", "SIX", "SEVEN", "EIGHT", "NINE"],
    "adverb": ["AGAIN", "NOW", "PLEASE", "SOON"],
}

# lip-shape classes; characters in one group render identical video frames
VISEME_GROUPS = (" ", "PBM", "FV", "TDNL", "SZCX", "KGQ", "AEH", "IJY", "OUW", "R")


@dataclass(frozen=True)
class Grammar:
    slots: tuple = tuple((k, tuple(v)) for k, v in GRID_SLOTS.items())

    @property
    def vocabulary(self) -> set:
        return {w for _, words in self.slots for w in words}


def sample_sentence(grammar: Grammar, rng: np.random.Generator) -> str:
    return " ".join(words[rng.integers(len(words))] for _, words in grammar.slots)


def viseme_map(groups=VISEME_GROUPS, symbols=ALPHABET.symbols) -> dict:
    mapping = {}
    for cls, group in enumerate(groups):
        for ch in group:
            mapping[ch] = cls
    missing = set(symbols) - set(mapping)
    if missing:
        raise ValueError(f"viseme groups miss characters {sorted(missing)}")
    return mapping


@dataclass
class RenderProfile:
    audio_protos: dict
    video_protos: np.ndarray  # (n_visemes, d_v)
    visemes: dict
    min_dur: int = 2
    max_dur: int = 5
    jitter: float = 0.3
    video_jitter: float | None = None  # defaults to ``jitter``
    drift_basis: np.ndarray | None = None  # (d_v, k) orthonormal nuisance directions
    drift_std: float = 0.0
    drift_corr: float = 0.95

    @property
    def audio_dim(self) -> int:
        return next(iter(self.audio_protos.values())).shape[0]

    @property
    def video_dim(self) -> int:
        return self.video_protos.shape[1]


def make_profile(rng, audio_dim=8, video_dim=6, groups=VISEME_GROUPS,
                 min_dur=2, max_dur=5, jitter=0.3, video_jitter=None,
                 drift_dims=0, drift_std=0.0, drift_corr=0.95) -> RenderProfile:
    """Random prototypes; with ``drift_dims > 0`` the viseme prototypes span
    only ``video_dim - drift_dims`` directions and the rest carry drift."""
    if not 0 <= drift_dims < video_dim:
        raise ValueError(f"drift_dims must lie in [0, {video_dim}), got {drift_dims}")
    if not 0.0 <= drift_corr < 1.0:
        raise ValueError(f"drift_corr must lie in [0, 1), got {drift_corr}")
    visemes = viseme_map(groups)
    audio = {ch: rng.normal(size=audio_dim) for ch in ALPHABET.symbols}
    basis, _ = np.linalg.qr(rng.normal(size=(video_dim, video_dim)))
    signal = basis[:, : video_dim - drift_dims]
    video = rng.normal(size=(len(groups), signal.shape[1])) @ signal.T
    drift = basis[:, video_dim - drift_dims :] if drift_dims else None
    return RenderProfile(audio, video, visemes, min_dur, max_dur, jitter, video_jitter,
                         drift, drift_std, drift_corr)


def appearance_drift(length: int, profile: RenderProfile, rng) -> np.ndarray:
    """Stationary AR(1) process of std ``drift_std`` in the drift directions."""
    if profile.drift_basis is None or profile.drift_std == 0.0:
        return np.zeros((length, profile.video_dim))
    k = profile.drift_basis.shape[1]
    rho = profile.drift_corr
    e = profile.drift_std * rng.normal(size=(length, k))
    e[1:] *= np.sqrt(1.0 - rho * rho)
    z = lfilter([1.0], [1.0, -rho], e, axis=0)
    return z @ profile.drift_basis.T


def render_utterance(transcript: str, profile: RenderProfile, rng, durations=None):
    """Return ``(audio, video)`` frame matrices of equal length."""
    if not transcript:
        raise ValueError("cannot render an empty transcript")
    bad = set(transcript) - set(profile.visemes)
    if bad:
        raise ValueError(f"characters {sorted(bad)} have no prototype")
    if durations is None:
        durations = rng.integers(profile.min_dur, profile.max_dur + 1, size=len(transcript))
    audio = np.concatenate([np.tile(profile.audio_protos[ch], (n, 1)) for ch, n in zip(transcript, durations)])
    video = np.concatenate(
        [np.tile(profile.video_protos[profile.visemes[ch]], (n, 1)) for ch, n in zip(transcript, durations)]
    )
    v_jitter = profile.jitter if profile.video_jitter is None else profile.video_jitter
    if profile.jitter > 0:
        audio = audio + profile.jitter * rng.normal(size=audio.shape)
    if v_jitter > 0:
        video = video + v_jitter * rng.normal(size=video.shape)
    if profile.drift_basis is not None and profile.drift_std > 0:
        video = video + appearance_drift(video.shape[0], profile, rng)
    return audio, video


def babble(length: int, grammar: Grammar, profile: RenderProfile, rng, talkers: int = 4) -> np.ndarray:
    """Audio-stream babble: the sum of ``talkers`` unrelated rendered sentences."""
    out = np.zeros((length, profile.audio_dim))
    for _ in range(talkers):
        parts, total = [], 0
        while total < length:
            a, _ = render_utterance(sample_sentence(grammar, rng), profile, rng)
            parts.append(a)
            total += a.shape[0]
        stream = np.concatenate(parts)
        start = rng.integers(0, stream.shape[0] - length + 1)
        out += stream[start : start + length]
    return out


@dataclass
class CorpusSplits:
    train: list = field(default_factory=list)
    cv: list = field(default_factory=list)
    test: list = field(default_factory=list)


def split_sizes(n: int):
    """90/10 train+cv/test, then the 90% split 9:1 into train/cv."""
    n_test = n // 10
    n_cv = (n - n_test) // 10
    return n - n_test - n_cv, n_cv, n_test


def generate_corpus(n: int, grammar: Grammar, profile: RenderProfile, seed: int, out_dir) -> CorpusSplits:
    """Render ``n`` utterances to FEAT files and write train/cv/test manifests.

    Each utterance draws from its own generator derived from ``(seed, id)``.
    """
    if n < 10:
        raise ValueError(f"corpus needs at least 10 utterances, got {n}")
    out = Path(out_dir)
    feats = out / "feats"
    try:
        feats.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create corpus directory {out}: {exc}") from None
    if not os.access(feats, os.W_OK):
        raise PermissionError(f"corpus directory {feats} is not writable")
    records = []
    for i in range(n):
        uid = f"utt{i:05d}"
        rng = derive_rng(seed, uid)
        text = sample_sentence(grammar, rng)
        audio, video = render_utterance(text, profile, rng)
        a_path, v_path = feats / f"{uid}.audio.feat", feats / f"{uid}.video.feat"
        write_feat(a_path, audio)
        write_feat(v_path, video)
        records.append(UtteranceRecord(uid, str(a_path.relative_to(out)), str(v_path.relative_to(out)), text))
    order = make_rng(seed).permutation(n)
    n_train, n_cv, _ = split_sizes(n)
    splits = CorpusSplits(
        [records[i] for i in sorted(order[:n_train])],
        [records[i] for i in sorted(order[n_train : n_train + n_cv])],
        [records[i] for i in sorted(order[n_train + n_cv :])],
    )
    for name in ("train", "cv", "test"):
        write_manifest(out / f"{name}.tsv", getattr(splits, name))
    return splits
