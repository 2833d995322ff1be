"""Prompt template family and canonical structure rendering.

The template space is spanned by three choices: hop depth (1..3), meta
features on or off, and intermediate connectivity paths on or off.  Each
point gets a four-digit id.  Rendering is deterministic, one sentence per
hop level, so that equal samples always produce byte-equal text and the
text parses back losslessly (see parsing module).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

from .errors import ValidationError

if TYPE_CHECKING:
    from .budget import NeighborhoodSample
    from .graph import Graph


class Task(str, Enum):
    NODE_CLASSIFICATION = "node_classification"
    LP_GENERATIVE = "lp_generative"
    LP_DISCRIMINATIVE = "lp_discriminative"

    @property
    def is_link_prediction(self) -> bool:
        return self is not Task.NODE_CLASSIFICATION


MAX_HOP = 3
HOP_PHRASES = {1: "one hop", 2: "two hops", 3: "three hops"}
PHRASE_HOPS = {phrase: k for k, phrase in HOP_PHRASES.items()}

DEFAULT_TOKEN_FORMAT = "<node_{id}>"
NODE_TOKEN_RE = re.compile(r"<node_(\d+)>")

EMPTY_LEVEL_PHRASE = "no other nodes"


@dataclass(frozen=True, order=True)
class PromptSpec:
    """One point in the template design space."""

    task: Task
    use_features: bool
    max_hop: int
    include_paths: bool

    def __post_init__(self):
        if not (1 <= self.max_hop <= MAX_HOP):
            raise ValidationError(f"max_hop must be in 1..{MAX_HOP}, got {self.max_hop}")
        if self.include_paths and self.max_hop < 2:
            raise ValidationError("include_paths requires max_hop >= 2")

    @property
    def prompt_id(self) -> str:
        return prompt_id(self)


def prompt_id(spec: PromptSpec) -> str:
    """Four digits: task, features, hop depth, path variant."""
    d1 = "1" if spec.task is Task.NODE_CLASSIFICATION else "2"
    d2 = "2" if spec.use_features else "1"
    d3 = str(spec.max_hop)
    d4 = "2" if spec.include_paths else "1"
    return d1 + d2 + d3 + d4


def decode_prompt_id(pid: str, lp_task: Task = Task.LP_GENERATIVE) -> PromptSpec:
    """Inverse of prompt_id.

    Digit 1 only distinguishes classification from link prediction; the
    generative/discriminative split is carried in instance metadata, so
    ``lp_task`` picks which of the two a link-prediction id decodes to.
    """
    if not re.fullmatch(r"\d{4}", pid):
        raise ValidationError(f"prompt id must be 4 digits, got {pid!r}")
    d1, d2, d3, d4 = pid
    if d1 == "1":
        task = Task.NODE_CLASSIFICATION
    elif d1 == "2":
        if lp_task is Task.NODE_CLASSIFICATION:
            raise ValidationError(f"prompt id {pid} is a link-prediction id")
        task = lp_task
    else:
        raise ValidationError(f"prompt id digit 1 must be 1 or 2, got {pid!r}")
    if d2 not in "12":
        raise ValidationError(f"prompt id digit 2 must be 1 or 2, got {pid!r}")
    if d3 not in "123":
        raise ValidationError(f"prompt id digit 3 must be 1..3, got {pid!r}")
    if d4 not in "12":
        raise ValidationError(f"prompt id digit 4 must be 1 or 2, got {pid!r}")
    return PromptSpec(
        task=task,
        use_features=d2 == "2",
        max_hop=int(d3),
        include_paths=d4 == "2",
    )


def enumerate_family(tasks: Iterable[Task]) -> list[PromptSpec]:
    """Full constrained product of the design space, ordered by prompt id.

    Ten specs per task: hop 1 admits no path variant, hops 2 and 3 admit
    both, and each combination carries a features-on and features-off form.
    """
    tasks = list(tasks)
    if not tasks:
        raise ValidationError("tasks must be non-empty")
    specs = []
    for task in tasks:
        for use_features in (False, True):
            for max_hop in range(1, MAX_HOP + 1):
                for include_paths in (False, True):
                    if include_paths and max_hop < 2:
                        continue
                    specs.append(
                        PromptSpec(
                            task=task,
                            use_features=use_features,
                            max_hop=max_hop,
                            include_paths=include_paths,
                        )
                    )
    specs.sort(key=lambda s: (prompt_id(s), s.task.value))
    return specs


# ---------------------------------------------------------------------------
# token and feature-text encoding


def node_token(v: int, token_format: str = DEFAULT_TOKEN_FORMAT) -> str:
    return token_format.format(id=v)


def escape_feature_text(s: str) -> str:
    """Make a feature string safe inside a parenthesized annotation."""
    return s.replace("\\", "\\\\").replace("(", "\\(").replace(")", "\\)")


def unescape_feature_text(s: str) -> str:
    out = []
    i = 0
    while i < len(s):
        c = s[i]
        if c == "\\" and i + 1 < len(s):
            out.append(s[i + 1])
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


# ---------------------------------------------------------------------------
# rendering


@dataclass(frozen=True)
class StructureDescription:
    """Rendered neighborhood text plus the sample it came from."""

    text: str
    provenance: "NeighborhoodSample"


def _node_ref(
    g: "Graph",
    v: int,
    use_features: bool,
    edge_from: Optional[int] = None,
) -> str:
    """Node token, optionally annotated with its text and incoming-edge text."""
    parts = [node_token(v)]
    if use_features:
        text = g.text_of(v)
        if text is not None:
            parts.append(f" (its title: {escape_feature_text(text)})")
        if edge_from is not None:
            etext = g.edge_text(edge_from, v)
            if etext is not None:
                parts.append(f" (edge: {escape_feature_text(etext)})")
    return "".join(parts)


def _path_group(g: "Graph", path: Sequence[int], use_features: bool) -> str:
    # intermediates only; each annotated with the edge that leads into it
    refs = [
        _node_ref(g, w, use_features, edge_from=path[i])
        for i, w in enumerate(path[1:-1])
    ]
    return " and ".join(refs)


def render_structure(g: "Graph", sample: "NeighborhoodSample", spec: PromptSpec) -> StructureDescription:
    """Canonical text for a sampled neighborhood.

    One sentence per hop level: the hop-1 sentence is always present (an
    empty level reads "no other nodes"), deeper empty levels are omitted.
    Neighbor lists keep their sorted order; with paths on, one connecting
    path per neighbor follows in matching order.
    """
    if len(sample.chosen) != spec.max_hop:
        raise ValidationError(
            f"sample depth {len(sample.chosen)} does not match spec hop {spec.max_hop}"
        )
    if spec.include_paths and sample.chosen_paths is None:
        raise ValidationError("spec includes paths but sample carries none")

    v = sample.center
    center_ref = _node_ref(g, v, spec.use_features)
    sentences = []
    for k in range(1, spec.max_hop + 1):
        chosen = sample.chosen[k - 1]
        if not chosen:
            if k == 1:
                sentences.append(
                    f"{center_ref} is connected with {EMPTY_LEVEL_PHRASE} within one hop."
                )
            continue
        with_paths = spec.include_paths and k >= 2
        refs = []
        for i, u in enumerate(chosen):
            if with_paths:
                # final hop edge of u's path is annotated on u itself
                prev = sample.chosen_paths[k - 1][i][-2]
                refs.append(_node_ref(g, u, spec.use_features, edge_from=prev))
            elif k == 1:
                refs.append(_node_ref(g, u, spec.use_features, edge_from=v))
            else:
                refs.append(_node_ref(g, u, spec.use_features))
        sentence = f"{center_ref} is connected with {', '.join(refs)} within {HOP_PHRASES[k]}"
        if with_paths:
            groups = [
                _path_group(g, p, spec.use_features) for p in sample.chosen_paths[k - 1]
            ]
            sentence += f" through {', '.join(groups)}, respectively"
        sentences.append(sentence + ".")
    return StructureDescription(text=" ".join(sentences), provenance=sample)
