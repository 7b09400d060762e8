"""Checkpoint files: text descriptor header, then raw little-endian arrays.

Layout::

    format-version: nase-checkpoint-v1
    element-precision: float32
    meta: {...one-line JSON, optional...}
    param: name=entity_emb shape=14541,400 offset=0
    param: ...
    end-header
    <raw IEEE-754 little-endian bytes, in header order>

Offsets are byte positions relative to the start of the binary section.
Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import re

import numpy as np

FORMAT_VERSION = "nase-checkpoint-v1"

_PRECISIONS = {"float32": "<f4", "float64": "<f8"}
_NAME_RE = re.compile(r"^[A-Za-z0-9_.\-/]+$")


class CheckpointError(ValueError):
    """Malformed checkpoint header or payload."""


def save_checkpoint(path, arrays, precision, meta=None):
    """Write ``{name: array}`` in header order to ``path``.

    ``precision`` ("float32" | "float64") fixes the element encoding;
    ``meta`` is an optional JSON-serializable object embedded in the header.
    """
    if precision not in _PRECISIONS:
        raise CheckpointError(f"unknown element precision {precision!r}")
    dtype = np.dtype(_PRECISIONS[precision])
    lines = [f"format-version: {FORMAT_VERSION}", f"element-precision: {precision}"]
    if meta is not None:
        blob = json.dumps(meta, sort_keys=True)
        if "\n" in blob:
            raise CheckpointError("meta must serialize to a single line")
        lines.append(f"meta: {blob}")
    payload = []
    offset = 0
    for name, arr in arrays.items():
        if not _NAME_RE.match(name):
            raise CheckpointError(f"parameter name {name!r} has characters outside [A-Za-z0-9_.-/]")
        arr = np.asarray(arr, dtype=dtype)
        shape = ",".join(str(s) for s in arr.shape) if arr.ndim else ""
        lines.append(f"param: name={name} shape={shape} offset={offset}")
        raw = arr.tobytes()
        payload.append(raw)
        offset += len(raw)
    lines.append("end-header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for raw in payload:
            fh.write(raw)


def load_checkpoint(path):
    """Read a checkpoint; returns (arrays, precision, meta)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    marker = b"end-header\n"
    pos = blob.find(marker)
    if pos < 0:
        raise CheckpointError(f"{path}: no end-header marker")
    header = blob[:pos].decode("utf-8").splitlines()
    binary = blob[pos + len(marker):]

    fields = {}
    entries = []
    for line in header:
        key, _, value = line.partition(": ")
        if key == "param":
            entry = dict(item.split("=", 1) for item in value.split(" "))
            entries.append(entry)
        else:
            fields[key] = value
    if fields.get("format-version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format {fields.get('format-version')!r}")
    precision = fields.get("element-precision")
    if precision not in _PRECISIONS:
        raise CheckpointError(f"{path}: unknown element precision {precision!r}")
    dtype = np.dtype(_PRECISIONS[precision])
    meta = json.loads(fields["meta"]) if "meta" in fields else None

    arrays = {}
    for entry in entries:
        shape = tuple(int(s) for s in entry["shape"].split(",")) if entry["shape"] else ()
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        start = int(entry["offset"])
        stop = start + count * dtype.itemsize
        if stop > len(binary):
            raise CheckpointError(f"{path}: payload truncated at parameter {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(binary[start:stop], dtype=dtype).reshape(shape).copy()
    return arrays, precision, meta
