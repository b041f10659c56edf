"""Named-parameter checkpoints: raw little-endian float32 blob + JSON manifest."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

BLOB = "params.bin"
MANIFEST = "manifest.json"


def save_checkpoint(directory, params: dict[str, np.ndarray], meta: dict) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    with open(directory / BLOB, "wb") as fh:
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f4")
            fh.write(arr.tobytes())
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.size
    manifest = dict(meta)
    manifest["tensors"] = entries
    with open(directory / MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return directory


def load_checkpoint(directory) -> tuple[dict[str, np.ndarray], dict]:
    directory = Path(directory)
    if not (directory / MANIFEST).exists():
        raise FileNotFoundError(f"no checkpoint manifest in {directory}")
    with open(directory / MANIFEST) as fh:
        manifest = json.load(fh)
    flat = np.fromfile(directory / BLOB, dtype="<f4")
    params = {}
    for e in manifest["tensors"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        params[e["name"]] = flat[e["offset"]:e["offset"] + n].reshape(e["shape"]).astype(np.float32)
    return params, manifest
