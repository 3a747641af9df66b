"""Bit-exact model checkpoints.

Layout: a directory holding manifest.json plus weights.bin. The manifest
declares every distinct tensor storage once (name, shape, dtype f32, offset,
byte_len) and records alias groups for parameters that share storage; the
blob file is little-endian float32, row-major, concatenated at the declared
offsets.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .nn import Module

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _grouped_params(model: Module):
    """-> (canonical order of storages, storage id -> [names], name -> tensor)."""
    named = model.named_parameters()
    groups: dict[int, list[str]] = {}
    canon: list[tuple[str, object]] = []
    for name, p in named:
        if id(p) not in groups:
            groups[id(p)] = []
            canon.append((name, p))
        groups[id(p)].append(name)
    return canon, groups


def save_checkpoint(model: Module, ckpt_dir: str | Path) -> None:
    ckpt_dir = Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    canon, groups = _grouped_params(model)
    tensors = []
    blob = bytearray()
    for name, p in canon:
        raw = np.ascontiguousarray(p.data, dtype="<f4").tobytes()
        tensors.append(
            {
                "name": name,
                "shape": list(p.shape),
                "dtype": "f32",
                "offset": len(blob),
                "byte_len": len(raw),
            }
        )
        blob.extend(raw)
    shared = [names for names in groups.values() if len(names) > 1]
    manifest = {"format_version": FORMAT_VERSION, "tensors": tensors, "shared": shared}
    (ckpt_dir / "weights.bin").write_bytes(bytes(blob))
    with open(ckpt_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True)


def load_checkpoint(model: Module, ckpt_dir: str | Path) -> None:
    """Fill `model`'s parameters in place; shared storages are written once."""
    ckpt_dir = Path(ckpt_dir)
    with open(ckpt_dir / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format_version {manifest.get('format_version')}")
    blob = (ckpt_dir / "weights.bin").read_bytes()

    canon, groups = _grouped_params(model)
    by_name = {name: p for name, p in canon}
    model_shared = sorted(tuple(sorted(g)) for g in groups.values() if len(g) > 1)
    manifest_shared = sorted(tuple(sorted(g)) for g in manifest["shared"])
    if model_shared != manifest_shared:
        raise CheckpointError(
            f"alias groups mismatch: model {model_shared} vs manifest {manifest_shared}"
        )

    entries = {e["name"]: e for e in manifest["tensors"]}
    if set(entries) != set(by_name):
        missing = set(by_name) ^ set(entries)
        raise CheckpointError(f"tensor name mismatch: {sorted(missing)[:4]}")
    for name, p in canon:
        e = entries[name]
        expect_len = int(np.prod(e["shape"])) * 4
        if e["byte_len"] != expect_len:
            raise CheckpointError(
                f"integrity error for tensor {name!r}: byte_len {e['byte_len']} "
                f"!= shape-implied {expect_len}"
            )
        if tuple(e["shape"]) != p.shape:
            raise CheckpointError(
                f"shape mismatch for tensor {name!r}: {e['shape']} vs {list(p.shape)}"
            )
        raw = blob[e["offset"] : e["offset"] + e["byte_len"]]
        if len(raw) != e["byte_len"]:
            raise CheckpointError(f"integrity error for tensor {name!r}: blob truncated")
        p.data[...] = np.frombuffer(raw, dtype="<f4").reshape(p.shape).astype(np.float64)
