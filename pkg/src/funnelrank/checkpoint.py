"""Named-parameter checkpoints with k -> k+1 task surgery.

File layout: an 8-byte little-endian length prefix, a JSON header carrying
the architecture descriptor and the ordered (name, shape) parameter table,
then the raw little-endian f64 payloads concatenated in header order.

Surgery loads a k-task checkpoint into a (k+1)-task model: every shared
parameter (recurrent stages, head, token MLPs and mask MLPs of existing
tasks) is copied verbatim and only the new task's components keep their
fresh seeded initialization.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from . import __version__
from .models import build_from_descriptor

_LEN = struct.Struct("<Q")


class CheckpointError(RuntimeError):
    pass


def checkpoint_save(model, path) -> None:
    params = model.params()
    header = {
        "format": 1,
        "tool_version": __version__,
        "architecture": model.descriptor(),
        "root_seed": model.root_seed,
        "params": [{"name": n, "shape": list(t.shape)} for n, t in params.items()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_LEN.pack(len(blob)))
        fh.write(blob)
        for t in params.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        raw_len = fh.read(_LEN.size)
        if len(raw_len) != _LEN.size:
            raise CheckpointError(f"{path}: truncated before header length")
        (hlen,) = _LEN.unpack(raw_len)
        blob = fh.read(hlen)
        if len(blob) != hlen:
            raise CheckpointError(f"{path}: truncated header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
        arrays: dict[str, np.ndarray] = {}
        for entry in header["params"]:
            name, shape = entry["name"], tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            payload = fh.read(count * 8)
            if len(payload) != count * 8:
                raise CheckpointError(
                    f"{path}: payload truncated at parameter '{name}'")
            arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return header, arrays


def _new_tasks(source_tasks, target_tasks) -> set[str]:
    src, tgt = list(source_tasks), list(target_tasks)
    missing = [t for t in tgt if t not in src]
    if len(missing) != 1 or len(tgt) != len(src) + 1:
        raise CheckpointError(
            f"task surgery supports exactly one added task; "
            f"checkpoint has {src}, target wants {tgt}")
    if [t for t in tgt if t in src] != src:
        raise CheckpointError("surgery must preserve the existing task order")
    return set(missing)


def checkpoint_load(path, target_config: dict | None = None):
    """Rebuild a model from a checkpoint, optionally into a bigger task set.

    With ``target_config`` None the checkpoint's own descriptor is used and
    the result reproduces the saved model bit for bit. Passing a descriptor
    whose task list extends the checkpoint's by one enables surgery.
    """
    header, arrays = read_checkpoint(path)
    source_desc = header["architecture"]
    desc = target_config if target_config is not None else source_desc
    model = build_from_descriptor(desc)

    fresh_ok: set[str] = set()
    if target_config is not None and list(desc["tasks"]) != list(source_desc["tasks"]):
        if desc["family"] != "seq" or source_desc["family"] != "seq":
            raise CheckpointError("task surgery is only defined for the seq family")
        new = _new_tasks(source_desc["tasks"], desc["tasks"])
        fresh_ok = {name for name in model.params()
                    if any(seg in new for seg in name.split("."))}

    params = model.params()
    for name, value in arrays.items():
        if name not in params:
            raise CheckpointError(f"{path}: unknown parameter '{name}' for target model")
        if params[name].shape != value.shape:
            raise CheckpointError(
                f"{path}: shape mismatch on '{name}': "
                f"checkpoint {value.shape} vs model {params[name].shape}")
        params[name].data[...] = value
    missing = [n for n in params if n not in arrays and n not in fresh_ok]
    if missing:
        raise CheckpointError(f"{path}: checkpoint lacks parameters {missing[:4]}")
    return model
