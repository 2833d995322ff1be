"""Token counting and budget-constrained neighborhood sampling.

The sampler grows a neighborhood one neighbor at a time, round-robin
across hop levels, re-rendering and re-counting the whole instance after
every addition.  Re-counting the full text is the only correct way to
respect a tokenizer whose counts are not additive over concatenation.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Optional, Sequence, Union

from .errors import ValidationError
from .graph import MAX_HOP, PathFinder, cumulative_levels, khop_neighbors
from .prompts import PromptSpec, render_structure
from .seeding import derive_rng

if TYPE_CHECKING:
    from .graph import Graph, Neighborhood

COUNTER_MODES = ("whitespace", "chars_per_token", "external_table")


class TokenCounter:
    """Pluggable token counter with an optional hard budget.

    Modes: ``whitespace`` counts whitespace-separated pieces;
    ``chars_per_token`` charges ceil(len/ratio); ``external_table`` runs
    greedy longest-match over a supplied vocabulary, one token per
    unmatched character.
    """

    def __init__(
        self,
        mode: str = "whitespace",
        limit: Optional[int] = None,
        ratio: float = 4.0,
        table: Iterable[str] = (),
        source: Optional[str] = None,
    ):
        if mode not in COUNTER_MODES:
            raise ValidationError(f"unknown counter mode {mode!r}")
        if limit is not None and limit < 0:
            raise ValidationError("token limit must be non-negative")
        self.mode = mode
        self.limit = limit
        self.source = source
        if mode == "chars_per_token":
            if ratio <= 0:
                raise ValidationError("chars-per-token ratio must be positive")
            self.ratio = float(ratio)
        else:
            self.ratio = float(ratio)
        self._by_first: dict[str, list[str]] = {}
        if mode == "external_table":
            entries = [t for t in table if t]
            if not entries:
                raise ValidationError("external token table is empty")
            for tok in sorted(set(entries), key=lambda t: (-len(t), t)):
                self._by_first.setdefault(tok[0], []).append(tok)

    def count(self, text: str) -> int:
        if self.mode == "whitespace":
            return len(text.split())
        if self.mode == "chars_per_token":
            return math.ceil(len(text) / self.ratio)
        n = 0
        i = 0
        length = len(text)
        by_first = self._by_first
        while i < length:
            for tok in by_first.get(text[i], ()):
                if text.startswith(tok, i):
                    i += len(tok)
                    break
            else:
                i += 1
            n += 1
        return n

    def with_limit(self, limit: Optional[int]) -> "TokenCounter":
        clone = TokenCounter.__new__(TokenCounter)
        clone.__dict__.update(self.__dict__)
        clone.limit = limit
        return clone

    def describe(self) -> str:
        if self.mode == "whitespace":
            return "whitespace"
        if self.mode == "chars_per_token":
            return f"chars:{self.ratio:g}"
        return f"table:{self.source or '<inline>'}"


def load_token_table(path: Union[str, Path]) -> tuple[str, ...]:
    with open(path, "r", encoding="utf-8") as f:
        return tuple(line.rstrip("\n") for line in f if line.rstrip("\n"))


def parse_counter_spec(spec: str, limit: Optional[int] = None) -> TokenCounter:
    """Build a counter from a CLI spec: whitespace | chars:<r> | table:<path>."""
    if spec == "whitespace":
        return TokenCounter("whitespace", limit=limit)
    if spec.startswith("chars:"):
        try:
            ratio = float(spec.split(":", 1)[1])
        except ValueError:
            raise ValidationError(f"bad chars-per-token ratio in {spec!r}")
        return TokenCounter("chars_per_token", limit=limit, ratio=ratio)
    if spec.startswith("table:"):
        path = spec.split(":", 1)[1]
        return TokenCounter(
            "external_table", limit=limit, table=load_token_table(path), source=path
        )
    raise ValidationError(f"unknown counter spec {spec!r}")


def count_tokens(text: str, counter: TokenCounter) -> int:
    return counter.count(text)


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class Envelope:
    """Instance framing around the structure description."""

    prefix: str = ""
    query: str = ""

    def wrap(self, structure: str) -> str:
        return " ".join(p for p in (self.prefix, structure, self.query) if p)


@dataclass(frozen=True)
class NeighborhoodSample:
    """Budget-constrained subset of a neighborhood chosen for one instance.

    ``chosen[k-1]`` is sorted ascending; with paths, ``chosen_paths[k-1]``
    is aligned index-for-index with ``chosen[k-1]``  (hop 1 entry stays
    empty).  ``token_count`` is the count of the fully wrapped instance
    text under the counter used at sampling time.
    """

    center: int
    chosen: tuple[tuple[int, ...], ...]
    chosen_paths: Optional[tuple[tuple[tuple[int, ...], ...], ...]]
    token_count: int
    budget: Optional[int]
    exhaustive: bool

    def without(self, banned: Iterable[int]) -> "NeighborhoodSample":
        """Drop nodes (and any path touching them) from the sample."""
        banned = set(banned)
        new_chosen = []
        new_paths = [] if self.chosen_paths is not None else None
        changed = False
        for k in range(1, len(self.chosen) + 1):
            lvl = self.chosen[k - 1]
            if self.chosen_paths is not None and k >= 2:
                pairs = [
                    (u, p)
                    for u, p in zip(lvl, self.chosen_paths[k - 1])
                    if u not in banned and not banned.intersection(p)
                ]
                kept = tuple(u for u, _ in pairs)
                new_paths.append(tuple(p for _, p in pairs))
            else:
                kept = tuple(u for u in lvl if u not in banned)
                if new_paths is not None:
                    new_paths.append(())
            if kept != lvl:
                changed = True
            new_chosen.append(kept)
        if not changed:
            return self
        return replace(
            self,
            chosen=tuple(new_chosen),
            chosen_paths=None if new_paths is None else tuple(new_paths),
            exhaustive=False,
        )


def _eligible_levels(
    g: "Graph",
    v: int,
    spec: PromptSpec,
    neighborhood: Optional["Neighborhood"],
    exclude: frozenset[int],
    forbidden: frozenset[int],
    pathfinder: Optional[PathFinder],
    cumulative: bool,
) -> tuple[list[list[int]], dict[int, tuple[int, ...]]]:
    if cumulative and spec.include_paths:
        raise ValidationError("cumulative levels cannot include paths")
    nb = neighborhood or khop_neighbors(g, v, spec.max_hop)
    if cumulative:
        nb = cumulative_levels(nb)
    if len(nb.levels) != spec.max_hop:
        raise ValidationError("neighborhood depth does not match spec hop")
    levels = [[u for u in lvl if u not in exclude] for lvl in nb.levels]
    paths: dict[int, tuple[int, ...]] = {}
    if spec.include_paths:
        pf = pathfinder or PathFinder(g)
        for k in range(2, spec.max_hop + 1):
            kept = []
            for u in levels[k - 1]:
                p = pf.lex_first_path(v, u, k, forbidden=forbidden)
                if p is not None:
                    paths[u] = p
                    kept.append(u)
            levels[k - 1] = kept
    return levels, paths


def _assemble(
    v: int,
    chosen: Sequence[Sequence[int]],
    paths: dict[int, tuple[int, ...]],
    with_paths: bool,
    token_count: int,
    budget: Optional[int],
    exhaustive: bool,
) -> NeighborhoodSample:
    chosen_t = tuple(tuple(sorted(lvl)) for lvl in chosen)
    paths_t = None
    if with_paths:
        paths_t = tuple(
            tuple(paths[u] for u in lvl) if k >= 2 else ()
            for k, lvl in enumerate(chosen_t, start=1)
        )
    return NeighborhoodSample(
        center=v,
        chosen=chosen_t,
        chosen_paths=paths_t,
        token_count=token_count,
        budget=budget,
        exhaustive=exhaustive,
    )


def exhaustive_sample(
    g: "Graph",
    v: int,
    spec: PromptSpec,
    counter: Optional[TokenCounter] = None,
    *,
    envelope: Envelope = Envelope(),
    neighborhood: Optional["Neighborhood"] = None,
    exclude: frozenset[int] = frozenset(),
    forbidden: frozenset[int] = frozenset(),
    pathfinder: Optional[PathFinder] = None,
    cumulative: bool = False,
) -> NeighborhoodSample:
    """The unbudgeted sample: every eligible neighbor, every path."""
    levels, paths = _eligible_levels(
        g, v, spec, neighborhood, exclude, forbidden, pathfinder, cumulative
    )
    sample = _assemble(v, levels, paths, spec.include_paths, 0, None, True)
    if counter is not None:
        text = envelope.wrap(render_structure(g, sample, spec).text)
        sample = replace(sample, token_count=counter.count(text))
    return sample


def sample_neighborhood(
    g: "Graph",
    v: int,
    spec: PromptSpec,
    counter: TokenCounter,
    seed: int,
    *,
    envelope: Envelope = Envelope(),
    neighborhood: Optional["Neighborhood"] = None,
    exclude: frozenset[int] = frozenset(),
    forbidden: frozenset[int] = frozenset(),
    pathfinder: Optional[PathFinder] = None,
    cumulative: bool = False,
) -> NeighborhoodSample:
    """Greedy budgeted growth, deterministic in (seed, v, spec, counter).

    Each hop level is shuffled with its own derived RNG, then neighbors
    are admitted round-robin across levels (1, 2, 3, 1, ...) one at a
    time, re-rendering and re-counting the wrapped instance after each
    admission.  The first addition that would exceed the budget ends
    growth; sampling is without replacement.
    """
    if counter is None or counter.limit is None:
        return exhaustive_sample(
            g,
            v,
            spec,
            counter,
            envelope=envelope,
            neighborhood=neighborhood,
            exclude=exclude,
            forbidden=forbidden,
            pathfinder=pathfinder,
            cumulative=cumulative,
        )

    budget = counter.limit
    levels, paths = _eligible_levels(
        g, v, spec, neighborhood, exclude, forbidden, pathfinder, cumulative
    )

    # when the whole neighborhood already fits, greedy growth under a
    # monotone counter admits everything; skip the per-addition renders
    full = _assemble(v, levels, paths, spec.include_paths, 0, budget, True)
    full_count = counter.count(envelope.wrap(render_structure(g, full, spec).text))
    if full_count <= budget:
        return replace(full, token_count=full_count)

    empty = _assemble(v, [[] for _ in levels], paths, spec.include_paths, 0, budget, False)
    base_text = envelope.wrap(render_structure(g, empty, spec).text)
    base = counter.count(base_text)
    if base > budget:
        raise ValidationError(
            f"budget {budget} smaller than the empty-structure instance ({base} tokens)"
        )

    queues = []
    for k, lvl in enumerate(levels, start=1):
        order = list(lvl)
        derive_rng(seed, "level", k).shuffle(order)
        queues.append(deque(order))

    chosen: list[list[int]] = [[] for _ in levels]
    current = base
    rejected = False
    while not rejected and any(queues):
        for k in range(1, spec.max_hop + 1):
            q = queues[k - 1]
            if not q:
                continue
            u = q.popleft()
            trial = [list(c) for c in chosen]
            trial[k - 1].append(u)
            trial_sample = _assemble(
                v, trial, paths, spec.include_paths, 0, budget, False
            )
            cnt = counter.count(envelope.wrap(render_structure(g, trial_sample, spec).text))
            if cnt <= budget:
                chosen = trial
                current = cnt
            else:
                rejected = True
                break

    exhausted = not rejected and not any(queues)
    return _assemble(v, chosen, paths, spec.include_paths, current, budget, exhausted)
