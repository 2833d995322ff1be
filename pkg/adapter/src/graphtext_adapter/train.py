"""Fine-tuning and prediction on top of the file contracts.

``finetune`` builds the vocabulary from the training corpus plus the
manifest's node tokens, trains the seq2seq with negative log-likelihood
for a fixed number of epochs, and returns a checkpoint carrying the
model, tokenizer, and per-epoch loss history.  ``predict`` greedily
decodes an evaluation file into ``{center, generation}`` records.
"""

from __future__ import annotations

import logging
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import torch
from torch import nn

from .errors import AdapterError
from .io import DatasetRecord, read_dataset, read_manifest, write_predictions
from .model import PooledSeq2Seq
from .tokenizer import BOS_ID, EOS_ID, PAD_ID, Tokenizer

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MODEL_SIZES = {"tiny": (48, 96), "small": (96, 192)}
CHECKPOINT_FORMAT = "graphtext-adapter-checkpoint-v1"


@dataclass(frozen=True)
class AdapterConfig:
    train_dataset: str
    manifest_dir: str
    eval_dataset: Optional[str] = None
    predictions_out: str = "predictions.jsonl"
    model_name: str = "pooled-gru"
    model_size: str = "tiny"
    epochs: int = 4
    batch_size: int = 16
    learning_rate: float = 3e-3
    max_input_tokens: int = 256
    seed: int = 0

    def validate(self) -> None:
        if self.model_name != "pooled-gru":
            raise AdapterError(f"unknown model name {self.model_name!r}")
        if self.model_size not in MODEL_SIZES:
            raise AdapterError(
                f"unknown model size {self.model_size!r}; choose from {sorted(MODEL_SIZES)}"
            )
        if self.epochs < 1:
            raise AdapterError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise AdapterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise AdapterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.max_input_tokens < 8:
            raise AdapterError(f"max_input_tokens must be >= 8, got {self.max_input_tokens}")


@dataclass
class Checkpoint:
    model: PooledSeq2Seq
    tokenizer: Tokenizer
    config: AdapterConfig
    history: list[float] = field(default_factory=list)

    def save(self, path: PathLike) -> None:
        payload = {
            "format": CHECKPOINT_FORMAT,
            "state": self.model.state_dict(),
            "tokenizer": self.tokenizer.to_payload(),
            "config": asdict(self.config),
            "history": list(self.history),
            "dims": {
                "embed_dim": self.model.embed_dim,
                "hidden_dim": self.model.hidden_dim,
                "vocab_size": self.tokenizer.vocab_size,
                "num_nodes": self.model.num_nodes,
                "feature_dim": self.model.feature_dim,
            },
        }
        torch.save(payload, path)

    @classmethod
    def load(cls, path: PathLike) -> "Checkpoint":
        payload = torch.load(path, weights_only=True)
        if payload.get("format") != CHECKPOINT_FORMAT:
            raise AdapterError(f"{path}: not an adapter checkpoint")
        tokenizer = Tokenizer.from_payload(payload["tokenizer"])
        dims = payload["dims"]
        state = payload["state"]
        stored_dim = state["projection.weight"].shape[1]
        if dims["feature_dim"] != stored_dim:
            raise AdapterError(
                f"feature-dimension mismatch: checkpoint metadata says "
                f"{dims['feature_dim']}, projection weights expect {stored_dim}"
            )
        if dims["vocab_size"] != tokenizer.vocab_size:
            raise AdapterError("checkpoint vocabulary size disagrees with its tokenizer")
        if dims["num_nodes"] != tokenizer.num_node_tokens:
            raise AdapterError("checkpoint node count disagrees with its tokenizer")
        model = PooledSeq2Seq(
            vocab_size=dims["vocab_size"],
            node_features=torch.zeros(dims["num_nodes"], dims["feature_dim"]),
            embed_dim=dims["embed_dim"],
            hidden_dim=dims["hidden_dim"],
        )
        model.load_state_dict(state)
        model.eval()
        config = AdapterConfig(**payload["config"])
        return cls(model=model, tokenizer=tokenizer, config=config, history=payload["history"])


def _prepare(config: AdapterConfig):
    config.validate()
    _, records = read_dataset(config.train_dataset)
    if not records:
        raise AdapterError(f"{config.train_dataset}: no training instances")
    manifest = read_manifest(config.manifest_dir)
    tokenizer = Tokenizer.build(
        manifest.tokens, (text for r in records for text in (r.input, r.target))
    )
    encoded = []
    for r in records:
        ids = tokenizer.encode(r.input)
        if len(ids) > config.max_input_tokens:
            raise AdapterError(
                f"instance for center {r.center} is {len(ids)} tokens, beyond the "
                f"model context window of {config.max_input_tokens}; rebuild the "
                f"dataset with a budget at or below the context window"
            )
        encoded.append((ids, tokenizer.encode(r.target)))
    torch.manual_seed(config.seed)
    embed_dim, hidden_dim = MODEL_SIZES[config.model_size]
    model = PooledSeq2Seq(
        vocab_size=tokenizer.vocab_size,
        node_features=torch.from_numpy(manifest.embeddings.copy()),
        embed_dim=embed_dim,
        hidden_dim=hidden_dim,
    )
    return model, tokenizer, encoded


def initialize(config: AdapterConfig) -> Checkpoint:
    """Assembled but untrained model, for baselines and smoke checks."""
    model, tokenizer, _ = _prepare(config)
    model.eval()
    return Checkpoint(model=model, tokenizer=tokenizer, config=config)


def _pad_batch(seqs: Sequence[list[int]], width: int) -> torch.Tensor:
    out = torch.full((len(seqs), width), PAD_ID, dtype=torch.long)
    for i, seq in enumerate(seqs):
        out[i, : len(seq)] = torch.tensor(seq, dtype=torch.long)
    return out


def finetune(config: AdapterConfig) -> Checkpoint:
    """Train for the configured epochs; history holds one mean NLL per epoch."""
    model, tokenizer, encoded = _prepare(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    loss_fn = nn.CrossEntropyLoss(ignore_index=PAD_ID)
    history: list[float] = []
    model.train()
    for epoch in range(config.epochs):
        order = list(range(len(encoded)))
        random.Random((config.seed + 1) * 1_000_003 + epoch).shuffle(order)
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [encoded[i] for i in order[start : start + config.batch_size]]
            inputs = _pad_batch([ids for ids, _ in batch], max(len(ids) for ids, _ in batch))
            mask = (inputs != PAD_ID).float()
            width = max(len(t) for _, t in batch) + 1
            target_in = _pad_batch([[BOS_ID] + t for _, t in batch], width)
            target_out = _pad_batch([t + [EOS_ID] for _, t in batch], width)
            logits = model(inputs, mask, target_in)
            loss = loss_fn(logits.reshape(-1, tokenizer.vocab_size), target_out.reshape(-1))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item() * len(batch)
        history.append(total / len(encoded))
        logger.info("epoch %d/%d: nll %.4f", epoch + 1, config.epochs, history[-1])
    model.eval()
    return Checkpoint(model=model, tokenizer=tokenizer, config=config, history=history)


def predict(
    checkpoint: Checkpoint,
    eval_dataset: PathLike,
    out_path: Optional[PathLike] = None,
    *,
    batch_size: int = 64,
    max_target_tokens: int = 8,
) -> list[tuple[int, str]]:
    """Greedy generations, one ``(center, text)`` record per eval instance."""
    _, records = read_dataset(eval_dataset)
    tokenizer = checkpoint.tokenizer
    limit = checkpoint.config.max_input_tokens
    results: list[tuple[int, str]] = []
    checkpoint.model.eval()
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        seqs = [tokenizer.encode(r.input, limit=limit) or [PAD_ID] for r in chunk]
        inputs = _pad_batch(seqs, max(len(s) for s in seqs))
        mask = (inputs != PAD_ID).float()
        decoded = checkpoint.model.greedy(inputs, mask, max_len=max_target_tokens)
        results.extend(
            (r.center, tokenizer.decode(ids)) for r, ids in zip(chunk, decoded)
        )
    if out_path is not None:
        write_predictions(out_path, results)
    return results
