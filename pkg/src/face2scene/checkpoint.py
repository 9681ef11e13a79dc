"""Versioned checkpoint container shared by all trained modules.

A checkpoint is a zip archive holding ``meta.json`` (format version,
per-parameter shape/dtype, and a config echo) plus one little-endian raw
buffer per parameter. Torch state dicts convert to/from plain numpy.
"""

from __future__ import annotations

import io
import json
import os
import zipfile

import numpy as np
import torch

from .errors import CheckpointError

FORMAT_VERSION = 1


def save_checkpoint(path: str | os.PathLike, params: dict[str, np.ndarray], config: dict) -> None:
    meta = {"format_version": FORMAT_VERSION, "config": config, "params": {}}
    buffers: dict[str, bytes] = {}
    for name, arr in params.items():
        arr = np.asarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        meta["params"][name] = {"shape": list(arr.shape), "dtype": str(arr.dtype)}
        buffers[name] = le.tobytes()
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("meta.json", json.dumps(meta, indent=2, sort_keys=True))
        for name, data in buffers.items():
            zf.writestr(f"params/{name}", data)


def load_checkpoint(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    with zipfile.ZipFile(path, "r") as zf:
        meta = json.loads(zf.read("meta.json").decode("utf-8"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {meta.get('format_version')}")
        params = {}
        for name, info in meta["params"].items():
            raw = zf.read(f"params/{name}")
            dtype = np.dtype(info["dtype"]).newbyteorder("<")
            arr = np.frombuffer(raw, dtype=dtype).reshape(info["shape"])
            params[name] = arr.astype(np.dtype(info["dtype"]))
    return params, meta.get("config", {})


def state_dict_to_numpy(module: torch.nn.Module, prefix: str = "") -> dict[str, np.ndarray]:
    return {prefix + k: v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def load_into_module(module: torch.nn.Module, params: dict[str, np.ndarray], prefix: str = "") -> None:
    state = module.state_dict()
    selected = {}
    for key in state:
        full = prefix + key
        if full not in params:
            raise CheckpointError(f"checkpoint is missing parameter {full!r}")
        arr = params[full]
        if tuple(arr.shape) != tuple(state[key].shape):
            raise CheckpointError(
                f"shape mismatch for {full!r}: checkpoint {arr.shape} vs module {tuple(state[key].shape)}"
            )
        selected[key] = torch.from_numpy(np.ascontiguousarray(arr)).to(state[key].dtype)
    module.load_state_dict(selected)
