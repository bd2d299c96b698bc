"""Save and load trained networks as MODL files."""
from __future__ import annotations

import numpy as np

from .bottleneck import DnnParams
from .io import FormatError, read_blocks, write_blocks
from .network import NetworkParams

_NORM = "norm.std"


def save_network(path, params: NetworkParams) -> None:
    meta = {"kind": 1, "input_dim": params.input_dim, "hidden": params.hidden,
            "layers": params.layers, "n_out": params.n_out}
    write_blocks(path, params.blocks, meta)


def load_network(path) -> NetworkParams:
    blocks, meta = read_blocks(path)
    if meta.get("kind") != 1:
        raise FormatError(f"{path}: not a BLSTM checkpoint")
    params = NetworkParams(meta["input_dim"], meta["hidden"], meta["layers"], meta["n_out"])
    expected = params.block_shapes()
    if set(blocks) != set(expected):
        raise FormatError(f"{path}: block names do not match the recorded topology")
    for name, shape in expected.items():
        if blocks[name].shape != shape:
            raise FormatError(f"{path}: block {name} has shape {blocks[name].shape}, expected {shape}")
    params.blocks = {name: blocks[name] for name in expected}
    return params


def save_dnn(path, params: DnnParams) -> None:
    meta = {"kind": 2, "n_sizes": len(params.sizes), "bottleneck": params.bottleneck}
    meta.update({f"size{i}": n for i, n in enumerate(params.sizes)})
    blocks = dict(params.blocks)
    if params.feature_std is not None:
        blocks[_NORM] = params.feature_std.reshape(1, -1)
    write_blocks(path, blocks, meta)


def load_dnn(path) -> DnnParams:
    blocks, meta = read_blocks(path)
    if meta.get("kind") != 2:
        raise FormatError(f"{path}: not a bottleneck checkpoint")
    sizes = [meta[f"size{i}"] for i in range(meta["n_sizes"])]
    std = blocks.pop(_NORM, None)
    params = DnnParams(sizes, meta["bottleneck"], blocks,
                       feature_std=None if std is None else np.asarray(std).ravel())
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if blocks.get(f"fc{i}.W", np.empty(0)).shape != (n_out, n_in):
            raise FormatError(f"{path}: layer fc{i} does not match sizes {sizes}")
    return params
