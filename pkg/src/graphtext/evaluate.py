"""Scoring of model generations and the prompt-only structure oracle.

The oracle classifies a node with nothing but a weighted label vote over
the neighbor levels visible in a prompt.  Because the same vote can be
computed straight from the graph, agreement between the two routes
certifies that the rendered text carries the graph structure intact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Mapping, Optional, Sequence, Union

from .errors import ValidationError
from .graph import Graph, khop_neighbors
from .parsing import ParsedNeighborhood
from .prompts import MAX_HOP

_TERMINAL_PUNCT = '.,;:!?"\''


@dataclass(frozen=True)
class PredictionRecord:
    center: int
    generation: str
    matched_label: Optional[int] = None


@dataclass(frozen=True)
class OracleConfig:
    hop_weights: tuple[float, ...] = (1.0, 0.5, 0.25)
    tie_break: str = "lowest_hop_then_lexicographic"

    def __post_init__(self):
        if not self.hop_weights or any(w <= 0 for w in self.hop_weights):
            raise ValidationError("hop weights must be positive")
        if self.tie_break != "lowest_hop_then_lexicographic":
            raise ValidationError(f"unknown tie break {self.tie_break!r}")


def _normalize(s: str) -> str:
    s = s.strip()
    s = s.rstrip(_TERMINAL_PUNCT)
    return s.strip().casefold()


def normalize_answer(generation: str, categories: Sequence[str]) -> Optional[int]:
    """Map a free-form generation to a category id, or None when unmatched.

    Exact match on the normalized strings wins; otherwise a containment
    match is accepted only when exactly one category qualifies.
    """
    if not categories:
        raise ValidationError("categories must be non-empty")
    gen = _normalize(generation)
    if not gen:
        return None
    norm_cats = [_normalize(c) for c in categories]
    for cid, cat in enumerate(norm_cats):
        if gen == cat:
            return cid
    hits = [
        cid
        for cid, cat in enumerate(norm_cats)
        if cat and (cat in gen or gen in cat)
    ]
    if len(hits) == 1:
        return hits[0]
    return None


def accuracy(
    preds: Iterable[PredictionRecord], gold: Mapping[int, int]
) -> dict:
    """Fraction of predictions matching gold; unmatched counts as wrong."""
    preds = list(preds)
    seen = set()
    correct = 0
    unmatched = 0
    for rec in preds:
        if rec.center not in gold:
            raise ValidationError(f"prediction for unknown center {rec.center}")
        seen.add(rec.center)
        if rec.matched_label is None:
            unmatched += 1
        elif rec.matched_label == gold[rec.center]:
            correct += 1
    missing = set(gold) - seen
    if missing:
        raise ValidationError(
            f"no prediction for {len(missing)} gold centers (e.g. {min(missing)})"
        )
    n = len(preds)
    return {
        "accuracy": correct / n if n else 0.0,
        "n": n,
        "unmatched_count": unmatched,
    }


# ---------------------------------------------------------------------------
# structure oracle


def train_majority(train_labels: Mapping[int, int], categories: Sequence[str]) -> int:
    """Most frequent training label; ties go to the lexicographically first name."""
    if not train_labels:
        raise ValidationError("no training labels available for the fallback")
    counts: dict[int, int] = {}
    for lab in train_labels.values():
        counts[lab] = counts.get(lab, 0) + 1
    return min(counts, key=lambda c: (-counts[c], categories[c]))


def weighted_vote(
    levels: Sequence[Sequence[int]],
    train_labels: Mapping[int, int],
    cfg: OracleConfig,
    categories: Sequence[str],
) -> Optional[int]:
    """Hop-weighted label vote over neighbor levels; None when nobody votes.

    Ties break to the label first seen at the lowest hop, then to the
    lexicographically smallest category name.
    """
    if len(levels) > len(cfg.hop_weights):
        raise ValidationError(
            f"{len(levels)} levels but only {len(cfg.hop_weights)} hop weights"
        )
    scores: dict[int, float] = {}
    first_hop: dict[int, int] = {}
    for k, lvl in enumerate(levels, start=1):
        w = cfg.hop_weights[k - 1]
        for u in lvl:
            lab = train_labels.get(u)
            if lab is None:
                continue
            scores[lab] = scores.get(lab, 0.0) + w
            first_hop.setdefault(lab, k)
    if not scores:
        return None
    best = max(scores.values())
    tied = [lab for lab, s in scores.items() if s == best]
    return min(tied, key=lambda lab: (first_hop[lab], categories[lab]))


def training_labels(g: Graph) -> dict[int, int]:
    if g.labels is None:
        raise ValidationError("graph has no labels")
    return {
        v: g.labels[v]
        for v in range(g.num_nodes)
        if g.labels[v] is not None and g.split[v] == "train"
    }


def oracle_classify(
    parsed: ParsedNeighborhood,
    train_labels: Mapping[int, int],
    cfg: OracleConfig,
    categories: Sequence[str],
    fallback: Optional[int] = None,
) -> int:
    """Classify from parsed prompt content alone."""
    vote = weighted_vote(parsed.levels, train_labels, cfg, categories)
    if vote is not None:
        return vote
    if fallback is None:
        fallback = train_majority(train_labels, categories)
    return fallback


def oracle_classify_graph(
    g: Graph,
    v: int,
    cfg: OracleConfig,
    max_hop: int = MAX_HOP,
    train_labels: Optional[Mapping[int, int]] = None,
    fallback: Optional[int] = None,
) -> int:
    """Same vote computed directly on the graph, never through text."""
    if train_labels is None:
        train_labels = training_labels(g)
    levels = khop_neighbors(g, v, max_hop).levels
    vote = weighted_vote(levels, train_labels, cfg, g.categories)
    if vote is not None:
        return vote
    if fallback is None:
        fallback = train_majority(train_labels, g.categories)
    return fallback


# ---------------------------------------------------------------------------
# predictions file I/O


def read_predictions(path: Union[str, Path]) -> list[PredictionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValidationError(f"{path}:{ln}: invalid JSON ({e.msg})") from e
            if not isinstance(d, dict):
                raise ValidationError(f"{path}:{ln}: expected an object per line")
            try:
                center, generation = d["center"], d["generation"]
            except KeyError as e:
                raise ValidationError(f"{path}:{ln}: missing key {e.args[0]!r}") from e
            if isinstance(center, bool) or not isinstance(center, int):
                raise ValidationError(f"{path}:{ln}: center must be an integer")
            if not isinstance(generation, str):
                raise ValidationError(f"{path}:{ln}: generation must be a string")
            records.append(PredictionRecord(center=center, generation=generation))
    return records


def write_predictions(
    target: Union[str, Path, IO[str]], records: Iterable[PredictionRecord]
) -> None:
    def emit(f: IO[str]) -> None:
        for rec in records:
            f.write(
                json.dumps(
                    {"center": rec.center, "generation": rec.generation},
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
            )
            f.write("\n")

    if hasattr(target, "write"):
        emit(target)
    else:
        with open(target, "w", encoding="utf-8") as f:
            emit(f)


def match_predictions(
    records: Iterable[PredictionRecord], categories: Sequence[str]
) -> list[PredictionRecord]:
    return [
        PredictionRecord(
            center=r.center,
            generation=r.generation,
            matched_label=normalize_answer(r.generation, categories),
        )
        for r in records
    ]
