"""Feed-forward bottleneck classifier for visual feature reduction.

A stack of affine layers with sigmoid hidden units and a softmax output,
trained with frame-level cross-entropy. After training, frames are mapped to
the activations of the narrow layer.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .ctc import StaleCacheError
from .network import NetworkParams, posteriors
from .numerics import DTYPE, log_softmax, make_rng, sigmoid, softmax
from .schedule import Newbob
from .trainer import EpochReport


@dataclass
class DnnParams:
    sizes: list  # [in, h1, ..., out]
    bottleneck: int  # index into sizes of the narrow layer
    blocks: dict = field(default_factory=dict)
    version: int = 0
    feature_std: np.ndarray | None = None  # global scale of the downstream features

    def __post_init__(self):
        if not 0 < self.bottleneck < len(self.sizes) - 1:
            raise ValueError("bottleneck must be a hidden layer")

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def copy(self) -> "DnnParams":
        std = None if self.feature_std is None else self.feature_std.copy()
        return DnnParams(list(self.sizes), self.bottleneck, {k: v.copy() for k, v in self.blocks.items()},
                         feature_std=std)


def init_dnn(sizes, bottleneck, rng, scale=None) -> DnnParams:
    """Uniform Glorot-style init unless ``scale`` is given; biases start at zero."""
    params = DnnParams(list(sizes), bottleneck)
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        s = np.sqrt(6.0 / (n_in + n_out)) if scale is None else scale
        params.blocks[f"fc{i}.W"] = rng.uniform(-s, s, size=(n_out, n_in)).astype(DTYPE)
        params.blocks[f"fc{i}.b"] = np.zeros(n_out)
    return params


@dataclass
class DnnCache:
    params: DnnParams
    version: int
    acts: list  # input followed by each hidden activation
    logits: np.ndarray


def dnn_forward(params: DnnParams, x):
    """Class posteriors for a frame ``(d,)`` or a batch ``(N, d)``."""
    x = np.asarray(x, dtype=DTYPE)
    single = x.ndim == 1
    h = x[None] if single else x
    if h.shape[1] != params.sizes[0]:
        raise ValueError(f"input dim {h.shape[1]} != network input dim {params.sizes[0]}")
    acts = [h]
    for i in range(params.n_layers - 1):
        h = sigmoid(h @ params.blocks[f"fc{i}.W"].T + params.blocks[f"fc{i}.b"])
        acts.append(h)
    last = params.n_layers - 1
    logits = h @ params.blocks[f"fc{last}.W"].T + params.blocks[f"fc{last}.b"]
    post = softmax(logits)
    return (post[0] if single else post), DnnCache(params, params.version, acts, logits)


def cross_entropy(params: DnnParams, x, labels) -> float:
    """Summed frame cross-entropy."""
    _, cache = dnn_forward(params, x)
    lp = log_softmax(cache.logits)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    return float(-lp[np.arange(labels.size), labels].sum())


def dnn_backward(cache: DnnCache, labels) -> dict:
    """Gradient of the summed cross-entropy for the batch in ``cache``."""
    params = cache.params
    if params.version != cache.version:
        raise StaleCacheError("parameters changed since the forward pass")
    labels = np.asarray(labels, dtype=np.int64).ravel()
    delta = softmax(cache.logits)
    delta[np.arange(labels.size), labels] -= 1.0
    grads = {}
    for i in range(params.n_layers - 1, -1, -1):
        a = cache.acts[i]
        grads[f"fc{i}.W"] = delta.T @ a
        grads[f"fc{i}.b"] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.blocks[f"fc{i}.W"]) * a * (1.0 - a)
    return {k: grads[k] for k in params.blocks}


def extract_bottleneck(params: DnnParams, frames) -> np.ndarray:
    """Sigmoid activations of the bottleneck layer for every frame."""
    h = np.asarray(frames, dtype=DTYPE)
    if h.ndim != 2 or h.shape[1] != params.sizes[0]:
        raise ValueError(f"expected (T, {params.sizes[0]}) frames, got {h.shape}")
    for i in range(params.bottleneck):
        h = sigmoid(h @ params.blocks[f"fc{i}.W"].T + params.blocks[f"fc{i}.b"])
    return h


def generate_frame_labels(acoustic_model: NetworkParams, audio) -> np.ndarray:
    """Per-frame argmax of the acoustic model's posteriors (ties to the lowest index)."""
    return np.argmax(posteriors(acoustic_model, audio), axis=1)


def frame_accuracy(params: DnnParams, x, labels, batch: int = 4096) -> float:
    labels = np.asarray(labels, dtype=np.int64)
    hits = 0
    for s in range(0, labels.size, batch):
        post, _ = dnn_forward(params, x[s : s + batch])
        hits += int(np.count_nonzero(post.argmax(axis=1) == labels[s : s + batch]))
    return 100.0 * hits / labels.size


@dataclass
class DnnTrainConfig:
    learning_rate: float = 0.008
    batch_size: int = 256
    halving_threshold: float = 0.5
    stop_threshold: float = 0.1
    min_epochs: int = 0
    max_epochs: int = 20
    seed: int = 0


def train_cross_entropy(params: DnnParams, frames, labels, config: DnnTrainConfig,
                        cv_frames=None, cv_labels=None):
    """Mini-batch SGD on summed cross-entropy with per-epoch shuffling.

    The learning rate follows :class:`Newbob` on cross-validation frame
    accuracy (training accuracy when no cv set is given). Returns
    ``(params, history)`` with one :class:`EpochReport` per epoch.
    """
    frames = np.asarray(frames, dtype=DTYPE)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("empty training set")
    if cv_frames is None:
        cv_frames, cv_labels = frames, labels
    rng = make_rng(config.seed)
    sched = Newbob(config.learning_rate, config.halving_threshold, config.stop_threshold,
                   config.min_epochs, config.max_epochs)
    sched.start(frame_accuracy(params, cv_frames, cv_labels))
    history = []
    while not sched.stopped:
        t0 = time.perf_counter()
        lr = sched.lr
        order = rng.permutation(labels.size)
        total = 0.0
        for s in range(0, order.size, config.batch_size):
            idx = order[s : s + config.batch_size]
            _, cache = dnn_forward(params, frames[idx])
            lp = log_softmax(cache.logits)
            total -= float(lp[np.arange(idx.size), labels[idx]].sum())
            grads = dnn_backward(cache, labels[idx])
            for k, g in grads.items():
                params.blocks[k] -= lr * g
            params.version += 1
        acc = frame_accuracy(params, cv_frames, cv_labels)
        history.append(EpochReport(sched.epoch + 1, total / labels.size, acc, lr, time.perf_counter() - t0))
        sched.update(acc)
    return params, history
