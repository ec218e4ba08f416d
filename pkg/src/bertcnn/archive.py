"""Flat weight archive: ``weights.bin`` (little-endian float32) + ``manifest.json``.

The manifest is a list of ``{"name", "shape", "offset"}`` entries, offsets in
bytes from the start of ``weights.bin``, in state-dict order.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError, CheckpointNotFoundError

WEIGHTS = "weights.bin"
MANIFEST = "manifest.json"
_DTYPE = np.dtype("<f4")


def write_archive(state: dict, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = []
    offset = 0
    with open(directory / WEIGHTS, "wb") as fh:
        for name, tensor in state.items():
            array = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype=_DTYPE)
            fh.write(array.tobytes())
            manifest.append({"name": name, "shape": list(array.shape), "offset": offset})
            offset += array.nbytes
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=1) + "\n")


def read_archive(directory) -> "OrderedDict[str, torch.Tensor]":
    directory = Path(directory)
    for fname in (WEIGHTS, MANIFEST):
        if not (directory / fname).is_file():
            raise CheckpointNotFoundError(f"{directory / fname} not found")
    manifest = json.loads((directory / MANIFEST).read_text())
    blob = (directory / WEIGHTS).read_bytes()
    state = OrderedDict()
    for entry in manifest:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        start = entry["offset"]
        end = start + count * _DTYPE.itemsize
        if end > len(blob):
            raise CheckpointError(f"{entry['name']}: archive truncated (needs bytes {start}..{end}, has {len(blob)})")
        array = np.frombuffer(blob, dtype=_DTYPE, count=count, offset=start).reshape(shape)
        state[entry["name"]] = torch.from_numpy(array.copy())
    return state


def load_into(module: torch.nn.Module, state: dict, prefix: str = "") -> None:
    """Copy archive tensors into ``module``, checking names and shapes first."""
    expected = module.state_dict()
    problems = []
    for name, target in expected.items():
        key = prefix + name
        if key not in state:
            problems.append(f"{key}: missing from archive")
        elif tuple(state[key].shape) != tuple(target.shape):
            problems.append(
                f"{key}: archive shape {tuple(state[key].shape)} != expected {tuple(target.shape)}"
            )
    extra = [k for k in state if k.startswith(prefix) and k[len(prefix):] not in expected]
    problems.extend(f"{k}: not a parameter of the model" for k in extra)
    if problems:
        raise CheckpointError("cannot load weights: " + "; ".join(problems))
    with torch.no_grad():
        for name, target in expected.items():
            target.copy_(state[prefix + name].to(target.dtype))
