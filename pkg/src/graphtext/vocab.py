"""Node-token vocabulary manifest with feature-initialized embeddings.

One new token per node; the embedding row for a token is the node's raw
feature vector, exported untouched.  The projection that maps feature
space into a model's embedding space is exported as a spec only (dims and
a trainable flag), never trained here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ValidationError
from .graph import Graph, read_glmf, write_glmf
from .prompts import DEFAULT_TOKEN_FORMAT

EMBEDDING_FILE = "embeddings.glmf"
MANIFEST_FILE = "manifest.json"


@dataclass(frozen=True)
class VocabManifest:
    tokens: tuple[str, ...]
    node_ids: tuple[int, ...]
    embedding_dim: int
    embeddings: np.ndarray
    projection: dict
    embedding_file: Optional[str] = None


def build_vocab_manifest(g: Graph, token_format: str = DEFAULT_TOKEN_FORMAT) -> VocabManifest:
    if "{id}" not in token_format:
        raise ValidationError("token format must contain an {id} placeholder")
    if g.features is None:
        raise ValidationError("vocabulary extension requires node features")
    tokens = tuple(token_format.format(id=v) for v in range(g.num_nodes))
    if len(set(tokens)) != len(tokens):
        raise ValidationError("token format does not produce unique tokens")
    d = int(g.features.shape[1])
    return VocabManifest(
        tokens=tokens,
        node_ids=tuple(range(g.num_nodes)),
        embedding_dim=d,
        embeddings=np.asarray(g.features, dtype=np.float32),
        projection={
            "input_dim": d,
            "output_dim": "model_dim",
            "type": "mlp",
            "trainable": True,
        },
    )


def write_vocab_manifest(manifest: VocabManifest, out_dir: Union[str, Path]) -> VocabManifest:
    """Write manifest.json plus the embedding matrix; returns the located manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_glmf(out / EMBEDDING_FILE, manifest.embeddings)
    located = replace(manifest, embedding_file=EMBEDDING_FILE)
    payload = {
        "tokens": list(located.tokens),
        "node_ids": list(located.node_ids),
        "embedding_dim": located.embedding_dim,
        "embedding_file": located.embedding_file,
        "projection": located.projection,
    }
    with open(out / MANIFEST_FILE, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    return located


def read_vocab_manifest(manifest_dir: Union[str, Path]) -> VocabManifest:
    d = Path(manifest_dir)
    path = d / MANIFEST_FILE if d.is_dir() else d
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    embeddings = read_glmf(path.parent / payload["embedding_file"])
    manifest = VocabManifest(
        tokens=tuple(payload["tokens"]),
        node_ids=tuple(payload["node_ids"]),
        embedding_dim=int(payload["embedding_dim"]),
        embeddings=embeddings,
        projection=payload["projection"],
        embedding_file=payload["embedding_file"],
    )
    if embeddings.shape != (len(manifest.tokens), manifest.embedding_dim):
        raise ValidationError(
            f"embedding matrix shape {embeddings.shape} does not match manifest"
        )
    return manifest
