"""Whitespace word tokenizer whose vocabulary embeds the node tokens.

Node tokens arrive verbatim from the vocabulary manifest and are placed
in a contiguous id block right after the special symbols, so the model
can map a token id to its manifest embedding row with one subtraction.
They contain no whitespace, so plain ``str.split`` keeps them atomic.
Remaining words come from the training corpus, ordered by descending
frequency (ties alphabetical) for a stable, reproducible vocabulary.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

from .errors import AdapterError

PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")
NODE_BASE = len(SPECIALS)


class Tokenizer:
    def __init__(self, node_tokens: Sequence[str], words: Sequence[str]):
        self.node_tokens = tuple(node_tokens)
        self.words = tuple(words)
        self._vocab = SPECIALS + self.node_tokens + self.words
        if len(set(self._vocab)) != len(self._vocab):
            raise AdapterError("vocabulary contains duplicate tokens")
        self._ids = {tok: i for i, tok in enumerate(self._vocab)}

    @classmethod
    def build(cls, node_tokens: Sequence[str], corpus: Iterable[str]) -> "Tokenizer":
        reserved = set(SPECIALS) | set(node_tokens)
        counts: Counter[str] = Counter()
        for text in corpus:
            counts.update(w for w in text.split() if w not in reserved)
        words = sorted(counts, key=lambda w: (-counts[w], w))
        return cls(node_tokens, words)

    @property
    def vocab_size(self) -> int:
        return len(self._vocab)

    @property
    def num_node_tokens(self) -> int:
        return len(self.node_tokens)

    def encode(self, text: str, limit: int | None = None) -> list[int]:
        ids = [self._ids.get(w, UNK_ID) for w in text.split()]
        return ids[:limit] if limit is not None else ids

    def decode(self, ids: Iterable[int]) -> str:
        words = []
        for i in ids:
            if i == EOS_ID:
                break
            if i in (PAD_ID, BOS_ID):
                continue
            words.append(self._vocab[i])
        return " ".join(words)

    def to_payload(self) -> dict:
        return {"node_tokens": list(self.node_tokens), "words": list(self.words)}

    @classmethod
    def from_payload(cls, payload: dict) -> "Tokenizer":
        return cls(payload["node_tokens"], payload["words"])
