"""Staged training and evaluation of the audio, lip and fusion recognisers.

Stages, in order:

1. ``am``      audio BLSTM trained with CTC on clean audio features
2. ``bn``      bottleneck DNN on spliced video, targets = ``am`` frame argmax
3. ``lip``     video BLSTM on bottleneck features
4. ``fusion``  BLSTM on concatenated audio and bottleneck features, with
               video-only presentations each epoch and audio-only finishing
               epochs
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .ctc import ALPHABET, CTCInfeasibleError, best_alignment, ctc_gradient, ctc_log_likelihood
from .decode import best_path_decode
from .network import NetworkParams, clip_gradients, network_backward, network_forward, sgd_step
from .numerics import derive_rng, log_softmax
from .schedule import Newbob

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 4e-5
    halving_threshold: float = 0.5
    stop_threshold: float = 0.1
    min_epochs: int = 0
    max_epochs: int = 50
    batch_size: int = 1
    seed: int = 0
    fill_value: float = 0.0
    clip_norm: float | None = 5.0
    stage: str = "am"
    finish_epochs: int = 2

    def __post_init__(self):
        if self.halving_threshold <= 0 or self.stop_threshold <= 0:
            raise ValueError("thresholds must be positive")
        if self.stop_threshold > self.halving_threshold:
            raise ValueError("stop threshold must not exceed the halving threshold")


@dataclass
class EpochReport:
    epoch: int
    loss: float
    cv_acc: float
    lr: float
    seconds: float
    phase: str = "train"

    def log_line(self) -> str:
        return f"{self.epoch}\t{self.loss:.6f}\t{self.cv_acc:.4f}\t{self.lr:.6g}\t{self.seconds:.2f}"


@dataclass
class Sequence:
    """One training sequence: features and target label indices."""

    id: str
    features: np.ndarray
    labels: np.ndarray


def utterance_step(model: NetworkParams, seq: Sequence, lr: float, clip_norm) -> float:
    """One CTC gradient step on a single sequence; returns the loss."""
    logits, cache = network_forward(model, seq.features)
    lp = log_softmax(logits)
    post = np.exp(lp)
    log_prob, ccache = ctc_log_likelihood(post, seq.labels, log_post=lp)
    grads = network_backward(cache, ctc_gradient(post, seq.labels, ccache))
    sgd_step(model, clip_gradients(grads, clip_norm), lr)
    return -log_prob


def cv_frame_accuracy(model: NetworkParams, seqs) -> float:
    """Percent of frames whose argmax matches the best CTC alignment of the reference."""
    hits = total = 0
    for seq in seqs:
        logits, _ = network_forward(model, seq.features)
        lp = log_softmax(logits)
        try:
            target = best_alignment(np.exp(lp), seq.labels, log_post=lp)
        except CTCInfeasibleError:
            continue
        hits += int(np.count_nonzero(lp.argmax(axis=1) == target))
        total += target.size
    if total == 0:
        raise ValueError("no feasible cross-validation utterances")
    return 100.0 * hits / total


def _feasible(seqs):
    out = []
    for s in seqs:
        if s.features.shape[0] < len(s.labels) + int(np.count_nonzero(s.labels[1:] == s.labels[:-1])):
            log.warning("skipping %s: too few frames for its transcript", s.id)
            continue
        out.append(s)
    return out


def _run_epochs(model, presentations, cv, config: TrainConfig, epoch_fn, reports, on_epoch=None):
    seqs_cv = _feasible(cv)
    sched = Newbob(config.learning_rate, config.halving_threshold, config.stop_threshold,
                   config.min_epochs, config.max_epochs)
    sched.start(cv_frame_accuracy(model, seqs_cv))
    while not sched.stopped:
        t0 = time.perf_counter()
        lr = sched.lr
        loss = epoch_fn(sched.epoch, lr)
        acc = cv_frame_accuracy(model, seqs_cv)
        rep = EpochReport(len(reports) + 1, loss, acc, lr, time.perf_counter() - t0)
        reports.append(rep)
        if on_epoch is not None:
            on_epoch(rep)
        log.info("%s epoch %d loss %.4f cv_acc %.2f lr %.3g", config.stage, rep.epoch, loss, acc, lr)
        sched.update(acc)
    return sched


def train_ctc_stage(model: NetworkParams, train, cv, config: TrainConfig, on_epoch=None):
    """Per-utterance SGD with CTC loss under the newbob schedule.

    ``train`` and ``cv`` are lists of :class:`Sequence`. Returns
    ``(model, reports)``; the model is updated in place.
    """
    if not train:
        raise ValueError("empty training set")
    if not cv:
        raise ValueError("empty cross-validation set")
    seqs = _feasible(train)
    reports: list = []

    def epoch_fn(epoch, lr):
        order = derive_rng(config.seed, config.stage, epoch).permutation(len(seqs))
        total = sum(utterance_step(model, seqs[i], lr, config.clip_norm) for i in order)
        return total / len(seqs)

    _run_epochs(model, seqs, cv, config, epoch_fn, reports, on_epoch)
    return model, reports


def mask_stream(features, start: int, stop: int, fill: float) -> np.ndarray:
    """Copy of ``features`` with columns ``start:stop`` set to ``fill``."""
    out = np.array(features, dtype=np.float64, copy=True)
    out[:, start:stop] = fill
    return out


def train_fusion_stage(model: NetworkParams, train, cv, config: TrainConfig, audio_dim: int,
                       on_epoch=None):
    """Train on concatenated ``[audio | video]`` features with modality dropout.

    Every epoch presents each utterance twice, first audio-visual and then
    with the audio columns replaced by ``config.fill_value``. After the
    schedule stops, ``config.finish_epochs`` epochs are run with the video
    columns filled instead. Returns ``(model, reports, presentations)``
    where ``presentations`` counts sequences seen per epoch.
    """
    if not train:
        raise ValueError("empty training set")
    seqs = _feasible(train)
    dim = model.input_dim
    video_off = [Sequence(s.id, mask_stream(s.features, audio_dim, dim, config.fill_value), s.labels) for s in seqs]
    audio_off = [Sequence(s.id, mask_stream(s.features, 0, audio_dim, config.fill_value), s.labels) for s in seqs]
    reports: list = []
    presentations: list = []

    def epoch_fn(epoch, lr):
        order = derive_rng(config.seed, config.stage, epoch).permutation(len(seqs))
        total, n = 0.0, 0
        for i in order:
            total += utterance_step(model, seqs[i], lr, config.clip_norm)
            total += utterance_step(model, audio_off[i], lr, config.clip_norm)
            n += 2
        presentations.append(n)
        return total / n

    sched = _run_epochs(model, seqs, cv, config, epoch_fn, reports, on_epoch)
    seqs_cv = _feasible(cv)
    lr = sched.lr
    for k in range(config.finish_epochs):
        t0 = time.perf_counter()
        order = derive_rng(config.seed, config.stage, "finish", k).permutation(len(seqs))
        total = sum(utterance_step(model, video_off[i], lr, config.clip_norm) for i in order)
        presentations.append(len(seqs))
        acc = cv_frame_accuracy(model, seqs_cv)
        rep = EpochReport(len(reports) + 1, total / len(seqs), acc, lr, time.perf_counter() - t0, "audio-only")
        reports.append(rep)
        if on_epoch is not None:
            on_epoch(rep)
    return model, reports, presentations


def decode_text(scores) -> str:
    return ALPHABET.decode(best_path_decode(scores).hypothesis)
