"""Checkpoint files: ``<name>.manifest.json`` plus ``<name>.bin``.

The manifest lists every tensor as key, shape, dtype and byte offset into the
blob; the blob is the little-endian float32 values in manifest order.
"""
from __future__ import annotations

import hashlib
import json
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.errors import CheckpointError

FORMAT = "kitsune-drive-checkpoint/1"
MANIFEST_SUFFIX = ".manifest.json"
BLOB_SUFFIX = ".bin"


@dataclass(frozen=True)
class CheckpointFile:
    metadata: dict
    arrays: dict[str, np.ndarray]
    digest: str


def checkpoint_paths(stem: Path | str) -> tuple[Path, Path]:
    stem = Path(stem)
    name = stem.name.removesuffix(MANIFEST_SUFFIX).removesuffix(BLOB_SUFFIX)
    return stem.with_name(name + MANIFEST_SUFFIX), stem.with_name(name + BLOB_SUFFIX)


def write_checkpoint(stem: Path | str, metadata: dict, arrays: Mapping[str, np.ndarray]) -> str:
    """Write manifest and blob, return the sha256 of both."""
    manifest_path, blob_path = checkpoint_paths(stem)
    entries, chunks, offset = [], [], 0
    for key, value in arrays.items():
        data = np.ascontiguousarray(value, dtype="<f4")
        entries.append({"key": key, "shape": list(data.shape), "dtype": "float32", "offset": offset})
        chunk = data.tobytes()
        chunks.append(chunk)
        offset += len(chunk)
    manifest = json.dumps(
        {"format": FORMAT, "metadata": metadata, "tensors": entries, "n_bytes": offset},
        indent=2,
        sort_keys=True,
    )
    blob = b"".join(chunks)
    try:
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        manifest_path.write_text(manifest, encoding="utf-8")
        blob_path.write_bytes(blob)
    except OSError as exc:
        raise CheckpointError(f"Failed to write checkpoint {manifest_path}: {exc}") from exc
    return _digest(manifest.encode("utf-8"), blob)


def read_checkpoint(stem: Path | str) -> CheckpointFile:
    manifest_path, blob_path = checkpoint_paths(stem)
    if not manifest_path.exists() or not blob_path.exists():
        raise CheckpointError(f"Checkpoint not found: {manifest_path} / {blob_path}")
    try:
        text = manifest_path.read_text(encoding="utf-8")
        blob = blob_path.read_bytes()
        manifest = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"Failed to read checkpoint {manifest_path}: {exc}") from exc
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{manifest_path}: unsupported format {manifest.get('format')!r}")
    if manifest.get("n_bytes") != len(blob):
        raise CheckpointError(f"{blob_path}: expected {manifest.get('n_bytes')} bytes, found {len(blob)}")

    arrays: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        if entry["key"] in arrays:
            raise CheckpointError(f"{manifest_path}: duplicate tensor {entry['key']!r}")
        arrays[entry["key"]] = np.frombuffer(blob, dtype="<f4", count=count, offset=entry["offset"]).reshape(shape)
    return CheckpointFile(metadata=manifest["metadata"], arrays=arrays, digest=_digest(text.encode("utf-8"), blob))


def _digest(manifest: bytes, blob: bytes) -> str:
    h = hashlib.sha256()
    h.update(manifest)
    h.update(blob)
    return h.hexdigest()
