"""Readers and writers for the file contracts the adapter lives behind.

The adapter talks to the dataset builder exclusively through files: the
instruction JSONL (optional leading header line keyed ``_header``), the
vocabulary manifest with its binary embedding matrix, and the predictions
JSONL it writes for external scoring.  Instance inputs stay opaque text
here — no graph logic, no prompt parsing.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .errors import AdapterError

PathLike = Union[str, Path]

MANIFEST_FILE = "manifest.json"

_RECORD_KEYS = ("prompt_id", "task", "center", "input", "target", "hop", "candidate", "split")


@dataclass(frozen=True)
class DatasetRecord:
    """One instruction instance: opaque input text and its target string."""

    prompt_id: str
    task: str
    center: int
    input: str
    target: str
    hop: Optional[int]
    candidate: Optional[int]
    split: str


@dataclass(frozen=True)
class VocabManifest:
    """Node-token vocabulary with feature-initialized embedding rows."""

    tokens: tuple[str, ...]
    node_ids: tuple[int, ...]
    embedding_dim: int
    embeddings: np.ndarray
    projection: dict


def read_dataset(path: PathLike) -> tuple[dict, list[DatasetRecord]]:
    """Parse a dataset JSONL into (header, records); header may be empty."""
    header: dict = {}
    records: list[DatasetRecord] = []
    with open(path, "r", encoding="utf-8") as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise AdapterError(f"{path}:{ln}: invalid JSON ({e})") from e
            if not isinstance(obj, dict):
                raise AdapterError(f"{path}:{ln}: expected an object")
            if "_header" in obj:
                if ln != 1:
                    raise AdapterError(f"{path}:{ln}: header line must come first")
                header = obj["_header"]
                continue
            missing = [k for k in _RECORD_KEYS if k not in obj]
            if missing:
                raise AdapterError(f"{path}:{ln}: missing keys {missing}")
            if not isinstance(obj["center"], int) or isinstance(obj["center"], bool):
                raise AdapterError(f"{path}:{ln}: center must be an integer")
            if not isinstance(obj["input"], str) or not isinstance(obj["target"], str):
                raise AdapterError(f"{path}:{ln}: input and target must be strings")
            records.append(DatasetRecord(**{k: obj[k] for k in _RECORD_KEYS}))
    return header, records


def read_glmf(path: PathLike) -> np.ndarray:
    """Read the binary embedding matrix: magic, u32 n, u32 d, n*d float32 LE."""
    data = Path(path).read_bytes()
    if data[:4] != b"GLMF":
        raise AdapterError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 12:
        raise AdapterError(f"{path}: truncated header")
    n, d = struct.unpack_from("<II", data, 4)
    expected = 12 + 4 * n * d
    if len(data) != expected:
        raise AdapterError(f"{path}: expected {expected} bytes for {n}x{d}, got {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(n, d).copy()


def read_manifest(manifest_dir: PathLike) -> VocabManifest:
    """Load manifest.json plus its embedding matrix, cross-checking shapes."""
    root = Path(manifest_dir)
    try:
        payload = json.loads((root / MANIFEST_FILE).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise AdapterError(f"{root / MANIFEST_FILE}: invalid JSON ({e})") from e
    for key in ("tokens", "node_ids", "embedding_dim", "embedding_file", "projection"):
        if key not in payload:
            raise AdapterError(f"{root / MANIFEST_FILE}: missing key {key!r}")
    embeddings = read_glmf(root / payload["embedding_file"])
    tokens = tuple(payload["tokens"])
    node_ids = tuple(payload["node_ids"])
    dim = int(payload["embedding_dim"])
    if embeddings.shape != (len(tokens), dim):
        raise AdapterError(
            f"embedding matrix is {embeddings.shape}, manifest declares {(len(tokens), dim)}"
        )
    if len(node_ids) != len(tokens):
        raise AdapterError("node_ids and tokens disagree in length")
    projection = payload["projection"]
    if projection.get("input_dim") != dim:
        raise AdapterError(
            f"projection input_dim {projection.get('input_dim')} != embedding_dim {dim}"
        )
    return VocabManifest(
        tokens=tokens,
        node_ids=node_ids,
        embedding_dim=dim,
        embeddings=embeddings,
        projection=projection,
    )


def write_predictions(path: PathLike, records: Iterable[tuple[int, str]]) -> int:
    """Write one ``{"center", "generation"}`` object per line; returns count."""
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for center, generation in records:
            f.write(json.dumps({"center": int(center), "generation": generation},
                               ensure_ascii=False) + "\n")
            n += 1
    return n
