"""Self-describing tensor dumps and manifest-based weight bundles.

A dump is one file: a single JSON header line (shape, precision, byte
order) terminated by a newline, followed by the raw little-endian IEEE-754
values in row-major order. Weight bundles are a directory of dumps plus a
`manifest.json` naming each tensor's role and shape.
"""

from __future__ import annotations

import json
import os

import numpy as np

_DTYPES = {"single": "<f4", "double": "<f8"}
_NAMES = {np.dtype(np.float32): "single", np.dtype(np.float64): "double"}


def save_tensor(path, array):
    arr = np.asarray(array)
    if arr.dtype not in _NAMES:
        arr = arr.astype(np.float32)
    precision = _NAMES[arr.dtype]
    header = {
        "shape": list(arr.shape),
        "precision": precision,
        "byte_order": "little",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("ascii") + b"\n")
        fh.write(arr.astype(_DTYPES[precision]).tobytes())


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        header = json.loads(header_line.decode("ascii"))
        if header.get("byte_order") != "little":
            raise ValueError(f"unsupported byte order in {path}: {header.get('byte_order')}")
        dtype = _DTYPES.get(header.get("precision"))
        if dtype is None:
            raise ValueError(f"unsupported precision in {path}: {header.get('precision')}")
        shape = tuple(header["shape"])
        raw = fh.read()
    arr = np.frombuffer(raw, dtype=dtype)
    if arr.size != int(np.prod(shape, dtype=np.int64)):
        raise ValueError(f"payload of {path} does not match shape {shape}")
    return arr.reshape(shape).astype(dtype[1:])


def save_weights(directory, named_arrays, meta=None):
    """Write a weight bundle: one dump per tensor plus a manifest."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for name, array in named_arrays.items():
        fname = name.replace("/", "__") + ".tensor"
        save_tensor(os.path.join(directory, fname), array)
        entries.append({"role": name, "file": fname,
                        "shape": list(np.asarray(array).shape)})
    manifest = {"entries": entries}
    if meta:
        manifest["meta"] = meta
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_weights(directory):
    """Read a weight bundle; returns (name -> array, meta dict)."""
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    arrays = {}
    for entry in manifest["entries"]:
        arr = load_tensor(os.path.join(directory, entry["file"]))
        if list(arr.shape) != entry["shape"]:
            raise ValueError(
                f"{entry['file']}: shape {list(arr.shape)} does not match "
                f"manifest {entry['shape']}")
        arrays[entry["role"]] = arr
    return arrays, manifest.get("meta", {})
