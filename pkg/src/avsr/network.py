"""Stacked bidirectional LSTM with a linear softmax output layer.

Parameters live in an ordered dict of named arrays so that gradients,
updates and checkpoints share one layout:

    lstm{i}.{f|b}.W_x   (4H, D_in)  input weights, gate order i, f, g, o
    lstm{i}.{f|b}.W_h   (4H, H)     recurrent weights
    lstm{i}.{f|b}.b     (4H,)
    out.W               (K, 2H)
    out.b               (K,)

The backward direction reads the sequence from the last frame to the first.
Both directions of a layer are scanned together as a batch of two.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .ctc import StaleCacheError
from .numerics import DTYPE, softmax

DIRECTIONS = ("f", "b")


@dataclass
class NetworkParams:
    input_dim: int
    hidden: int
    layers: int
    n_out: int
    blocks: dict = field(default_factory=dict)
    version: int = 0

    def layer_input_dim(self, i: int) -> int:
        return self.input_dim if i == 0 else 2 * self.hidden

    def block_shapes(self) -> dict:
        H, G = self.hidden, 4 * self.hidden
        shapes = {}
        for i in range(self.layers):
            for d in DIRECTIONS:
                shapes[f"lstm{i}.{d}.W_x"] = (G, self.layer_input_dim(i))
                shapes[f"lstm{i}.{d}.W_h"] = (G, H)
                shapes[f"lstm{i}.{d}.b"] = (G,)
        shapes["out.W"] = (self.n_out, 2 * H)
        shapes["out.b"] = (self.n_out,)
        return shapes

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.input_dim, self.hidden, self.layers, self.n_out,
            {k: v.copy() for k, v in self.blocks.items()},
        )

    def zeros_like(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.blocks.items()}


def init_network(input_dim, hidden, layers, n_out, rng, scale=0.1) -> NetworkParams:
    """Uniform initialisation in ``[-scale, scale]`` for every block."""
    params = NetworkParams(input_dim, hidden, layers, n_out)
    for name, shape in params.block_shapes().items():
        params.blocks[name] = rng.uniform(-scale, scale, size=shape).astype(DTYPE)
    return params


def _direction_params(params: NetworkParams, layer: int, dirs=DIRECTIONS):
    p = params.blocks
    W_x = np.stack([p[f"lstm{layer}.{d}.W_x"] for d in dirs])
    W_h = np.stack([p[f"lstm{layer}.{d}.W_h"] for d in dirs])
    b = np.stack([p[f"lstm{layer}.{d}.b"] for d in dirs])
    return W_x, W_h, b


@njit(cache=True)
def _sig(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@njit(cache=True)
def _scan(pre, W_h):
    """Run the LSTM recursion for a batch of directions.

    ``pre`` is ``(B, T, 4H)`` holding input projections plus bias, in each
    direction's own time order. Returns hidden states, gate activations and
    cell states.
    """
    B, T, G = pre.shape
    H = G // 4
    gates = np.empty((B, T, G))
    cells = np.empty((B, T, H))
    hs = np.empty((B, T, H))
    for d in range(B):
        h = np.zeros(H)
        c = np.zeros(H)
        for t in range(T):
            a = pre[d, t] + W_h[d] @ h
            for j in range(H):
                i_g = _sig(a[j])
                f_g = _sig(a[H + j])
                g_g = np.tanh(a[2 * H + j])
                o_g = _sig(a[3 * H + j])
                c[j] = f_g * c[j] + i_g * g_g
                h[j] = o_g * np.tanh(c[j])
                gates[d, t, j] = i_g
                gates[d, t, H + j] = f_g
                gates[d, t, 2 * H + j] = g_g
                gates[d, t, 3 * H + j] = o_g
            cells[d, t] = c
            hs[d, t] = h
    return hs, gates, cells


@njit(cache=True)
def _scan_backward(dhs, gates, cells, W_h):
    """Gradient of the scan with respect to its pre-activations."""
    B, T, G = gates.shape
    H = G // 4
    dpre = np.empty((B, T, G))
    for d in range(B):
        dh_next = np.zeros(H)
        dc_next = np.zeros(H)
        for t in range(T - 1, -1, -1):
            for j in range(H):
                i_g = gates[d, t, j]
                f_g = gates[d, t, H + j]
                g_g = gates[d, t, 2 * H + j]
                o_g = gates[d, t, 3 * H + j]
                tc = np.tanh(cells[d, t, j])
                dh = dhs[d, t, j] + dh_next[j]
                dc = dc_next[j] + dh * o_g * (1.0 - tc * tc)
                c_prev = cells[d, t - 1, j] if t > 0 else 0.0
                dpre[d, t, j] = dc * g_g * i_g * (1.0 - i_g)
                dpre[d, t, H + j] = dc * c_prev * f_g * (1.0 - f_g)
                dpre[d, t, 2 * H + j] = dc * i_g * (1.0 - g_g * g_g)
                dpre[d, t, 3 * H + j] = dh * tc * o_g * (1.0 - o_g)
                dc_next[j] = dc * f_g
            dh_next = dpre[d, t] @ W_h[d]
    return dpre


@dataclass
class _LayerCache:
    x: np.ndarray  # (2, T, D) inputs in each direction's time order
    hs: np.ndarray
    gates: np.ndarray
    cells: np.ndarray


@dataclass
class LstmCache:
    direction: str
    layer: _LayerCache


def _check_input(x, dim):
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"expected (T, d) input with T >= 1, got shape {x.shape}")
    if x.shape[1] != dim:
        raise ValueError(f"input dim {x.shape[1]} does not match network input dim {dim}")
    return x


def lstm_direction_forward(params: NetworkParams, inputs, direction: str, layer: int = 0):
    """Hidden states ``(T, H)`` of one direction of one layer, in natural time order."""
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be 'f' or 'b', got {direction!r}")
    x = _check_input(inputs, params.layer_input_dim(layer))
    W_x, W_h, b = _direction_params(params, layer, (direction,))
    xs = (x if direction == "f" else x[::-1])[None]
    pre = np.matmul(xs, W_x.transpose(0, 2, 1)) + b[:, None, :]
    hs, gates, cells = _scan(np.ascontiguousarray(pre), np.ascontiguousarray(W_h))
    h = hs[0] if direction == "f" else hs[0][::-1]
    return h, LstmCache(direction, _LayerCache(xs, hs, gates, cells))


@dataclass
class ForwardCache:
    params: NetworkParams
    version: int
    layers: list
    top: np.ndarray  # (T, 2H) input to the output layer


def _layer_forward(params, layer, x):
    W_x, W_h, b = _direction_params(params, layer)
    xs = np.stack([x, x[::-1]])
    pre = np.matmul(xs, W_x.transpose(0, 2, 1)) + b[:, None, :]
    hs, gates, cells = _scan(np.ascontiguousarray(pre), np.ascontiguousarray(W_h))
    out = np.concatenate([hs[0], hs[1][::-1]], axis=1)
    return out, _LayerCache(xs, hs, gates, cells)


def network_forward(params: NetworkParams, inputs):
    """Return ``(logits, cache)``; logits are ``(T, n_out)`` pre-softmax activations."""
    x = _check_input(inputs, params.input_dim)
    caches = []
    for i in range(params.layers):
        x, lc = _layer_forward(params, i, x)
        caches.append(lc)
    logits = x @ params.blocks["out.W"].T + params.blocks["out.b"]
    return logits, ForwardCache(params, params.version, caches, x)


def posteriors(params: NetworkParams, inputs) -> np.ndarray:
    logits, _ = network_forward(params, inputs)
    return softmax(logits)


def network_backward(cache: ForwardCache, d_logits) -> dict:
    """Gradients for every parameter block given ``dLoss/dlogits``."""
    params = cache.params
    if params.version != cache.version:
        raise StaleCacheError("parameters changed since the forward pass")
    d_logits = np.asarray(d_logits, dtype=DTYPE)
    if d_logits.shape != (cache.top.shape[0], params.n_out):
        raise ValueError(f"d_logits shape {d_logits.shape} does not match the forward pass")
    p = params.blocks
    grads = {"out.W": d_logits.T @ cache.top, "out.b": d_logits.sum(axis=0)}
    H = params.hidden
    dx = d_logits @ p["out.W"]
    for i in range(params.layers - 1, -1, -1):
        lc = cache.layers[i]
        W_x, W_h, _ = _direction_params(params, i)
        dhs = np.stack([dx[:, :H], dx[::-1, H:]])
        dpre = _scan_backward(np.ascontiguousarray(dhs), lc.gates, lc.cells, W_h)
        h_prev = np.zeros_like(lc.hs)
        h_prev[:, 1:] = lc.hs[:, :-1]
        dW_x = np.matmul(dpre.transpose(0, 2, 1), lc.x)
        dW_h = np.matmul(dpre.transpose(0, 2, 1), h_prev)
        db = dpre.sum(axis=1)
        for k, d in enumerate(DIRECTIONS):
            grads[f"lstm{i}.{d}.W_x"] = dW_x[k]
            grads[f"lstm{i}.{d}.W_h"] = dW_h[k]
            grads[f"lstm{i}.{d}.b"] = db[k]
        dxs = np.matmul(dpre, W_x)
        dx = dxs[0] + dxs[1][::-1]
    return {k: grads[k] for k in p}


def grad_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads: dict, max_norm) -> dict:
    if max_norm is None:
        return grads
    norm = grad_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


def sgd_step(params, grads: dict, learning_rate: float):
    """In-place ``p -= lr * g`` on every block; bumps ``params.version``."""
    blocks = params.blocks
    if set(grads) != set(blocks):
        raise ValueError("gradient blocks do not match parameter blocks")
    for k, g in grads.items():
        if g.shape != blocks[k].shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {blocks[k].shape} for {k}")
        blocks[k] -= learning_rate * g
    params.version += 1
    return params
