"""Tiny from-scratch seq2seq backbone.

The encoder mean-pools token embeddings (neighbor evidence in these
prompts is order-insensitive, and pooling keeps CPU training fast); the
decoder is a single GRU cell trained with negative log-likelihood and
decoded greedily.  Node-token embeddings are not free parameters: each
one is computed on the fly as ``projection(feature_row)`` from the fixed
manifest matrix, so everything learned about unseen nodes flows through
the shared, trainable feature projection.
"""

from __future__ import annotations

import torch
from torch import nn

from .tokenizer import BOS_ID, EOS_ID, NODE_BASE, PAD_ID


class PooledSeq2Seq(nn.Module):
    def __init__(
        self,
        *,
        vocab_size: int,
        node_features: torch.Tensor,
        embed_dim: int,
        hidden_dim: int,
    ):
        super().__init__()
        num_nodes, feature_dim = node_features.shape
        self.num_nodes = num_nodes
        self.feature_dim = feature_dim
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.register_buffer("node_features", node_features.to(torch.float32))
        self.embedding = nn.Embedding(vocab_size, embed_dim, padding_idx=PAD_ID)
        self.projection = nn.Linear(feature_dim, embed_dim)
        self.encoder = nn.Linear(embed_dim, hidden_dim)
        self.decoder = nn.GRUCell(embed_dim, hidden_dim)
        self.readout = nn.Linear(hidden_dim, vocab_size)

    def embed(self, ids: torch.Tensor) -> torch.Tensor:
        """Token embeddings with node-token rows projected from features."""
        base = self.embedding(ids)
        node_mask = (ids >= NODE_BASE) & (ids < NODE_BASE + self.num_nodes)
        rows = (ids - NODE_BASE).clamp(0, self.num_nodes - 1)
        projected = self.projection(self.node_features[rows])
        return torch.where(node_mask.unsqueeze(-1), projected, base)

    def encode(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        summed = (self.embed(ids) * mask.unsqueeze(-1)).sum(dim=1)
        pooled = summed / mask.sum(dim=1).clamp(min=1.0).unsqueeze(-1)
        return torch.tanh(self.encoder(pooled))

    def forward(
        self, ids: torch.Tensor, mask: torch.Tensor, target_in: torch.Tensor
    ) -> torch.Tensor:
        """Teacher-forced logits, shape (batch, target steps, vocab)."""
        hidden = self.encode(ids, mask)
        steps = self.embed(target_in)
        logits = []
        for t in range(target_in.shape[1]):
            hidden = self.decoder(steps[:, t], hidden)
            logits.append(self.readout(hidden))
        return torch.stack(logits, dim=1)

    @torch.no_grad()
    def greedy(self, ids: torch.Tensor, mask: torch.Tensor, max_len: int = 8) -> list[list[int]]:
        """Greedy decode; each output stops at (and excludes) the end symbol."""
        batch = ids.shape[0]
        hidden = self.encode(ids, mask)
        prev = torch.full((batch,), BOS_ID, dtype=torch.long)
        done = torch.zeros(batch, dtype=torch.bool)
        outputs: list[list[int]] = [[] for _ in range(batch)]
        for _ in range(max_len):
            hidden = self.decoder(self.embed(prev), hidden)
            prev = self.readout(hidden).argmax(dim=-1)
            for b in range(batch):
                if not done[b]:
                    if prev[b].item() == EOS_ID:
                        done[b] = True
                    else:
                        outputs[b].append(prev[b].item())
            if bool(done.all()):
                break
        return outputs
