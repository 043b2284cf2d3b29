"""Checkpoint files: parameter name -> shape + row-major values, as JSON.

The format is self-describing and versioned. Python's json writes floats
with shortest round-trip repr, so float64 values survive a save/load
cycle bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import DTYPE, ParameterStore

FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path, params: ParameterStore, config: dict | None = None) -> None:
    blob = {
        "format_version": FORMAT_VERSION,
        "config": config or {},
        "params": {
            name: {"shape": list(t.shape), "values": t.data.reshape(-1).tolist()}
            for name, t in params.items()
        },
    }
    Path(path).write_text(json.dumps(blob), encoding="utf-8")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Return ({name: array}, config_dict); raises CheckpointError on bad files."""
    try:
        blob = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: not valid JSON at line {e.lineno}") from e
    version = blob.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format_version {version!r} "
            f"(expected {FORMAT_VERSION})")
    values: dict[str, np.ndarray] = {}
    for name, entry in blob.get("params", {}).items():
        arr = np.asarray(entry["values"], dtype=DTYPE).reshape(entry["shape"])
        values[name] = arr
    return values, blob.get("config", {})
