"""Grammar-strict parser inverting the canonical structure renderer.

The parser consumes rendered text component by component (node token,
annotations, literal connectives) instead of splitting on delimiters, so
feature strings containing commas, parentheses, or connective words can
never confuse it: free text only ever appears inside escaped parenthesized
annotations.  Near-miss text is rejected; leniency here would mask
renderer bugs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Optional

from .errors import StructureParseError, ValidationError
from .prompts import (
    EMPTY_LEVEL_PHRASE,
    NODE_TOKEN_RE,
    PHRASE_HOPS,
    PromptSpec,
    unescape_feature_text,
)

if TYPE_CHECKING:
    from .graph import Graph, PathFinder


@dataclass(frozen=True)
class ParsedNeighborhood:
    """Structured content recovered from a rendered description.

    ``levels`` is contiguous from hop 1; hops that were present in deeper
    sentences but skipped in between come back as empty tuples.  ``paths``
    is None when the text carried no connectivity paths, otherwise aligned
    with ``levels`` (full paths, center first).
    """

    center: int
    levels: tuple[tuple[int, ...], ...]
    paths: Optional[tuple[tuple[tuple[int, ...], ...], ...]]
    node_texts: Mapping[int, str] = field(default_factory=dict)
    edge_texts: Mapping[tuple[int, int], str] = field(default_factory=dict)


_CONNECTED = " is connected with "
_WITHIN = " within "
_THROUGH = " through "
_RESPECTIVELY = ", respectively."
_TITLE_OPEN = " (its title: "
_EDGE_OPEN = " (edge: "


def _expect(text: str, pos: int, literal: str) -> int:
    if not text.startswith(literal, pos):
        raise StructureParseError(f"expected {literal!r}", text, pos)
    return pos + len(literal)


def _scan_annotation(text: str, start: int) -> tuple[str, int]:
    """Scan escaped annotation content up to its closing paren."""
    i = start
    while i < len(text):
        c = text[i]
        if c == "\\":
            if i + 1 >= len(text):
                raise StructureParseError("dangling escape", text, i)
            i += 2
        elif c == ")":
            return text[start:i], i + 1
        elif c == "(":
            raise StructureParseError("unescaped '(' inside annotation", text, i)
        else:
            i += 1
    raise StructureParseError("unterminated annotation", text, start)


def _parse_ref(text: str, pos: int) -> tuple[int, Optional[str], Optional[str], int]:
    """Parse one node token with optional title and edge annotations."""
    m = NODE_TOKEN_RE.match(text, pos)
    if m is None:
        raise StructureParseError("malformed node token", text, pos)
    digits = m.group(1)
    if len(digits) > 1 and digits[0] == "0":
        raise StructureParseError("non-canonical node id", text, pos)
    nid = int(digits)
    pos = m.end()
    title = edge = None
    if text.startswith(_TITLE_OPEN, pos):
        raw, pos = _scan_annotation(text, pos + len(_TITLE_OPEN))
        title = unescape_feature_text(raw)
    if text.startswith(_EDGE_OPEN, pos):
        raw, pos = _scan_annotation(text, pos + len(_EDGE_OPEN))
        edge = unescape_feature_text(raw)
    return nid, title, edge, pos


def _parse_hop_phrase(text: str, pos: int) -> tuple[int, int]:
    for phrase, k in PHRASE_HOPS.items():
        if text.startswith(phrase, pos):
            return k, pos + len(phrase)
    raise StructureParseError("unknown hop phrase", text, pos)


class _Consistency:
    """Cross-sentence bookkeeping for titles and edge texts."""

    def __init__(self, text: str):
        self.text = text
        self.titled: dict[int, str] = {}
        self.plain: set[int] = set()
        self.edges: dict[tuple[int, int], str] = {}

    def note_node(self, nid: int, title: Optional[str], pos: int) -> None:
        if title is None:
            if nid in self.titled:
                raise StructureParseError(
                    f"node {nid} appears both with and without a title", self.text, pos
                )
            self.plain.add(nid)
        else:
            if nid in self.plain or self.titled.get(nid, title) != title:
                raise StructureParseError(
                    f"conflicting titles for node {nid}", self.text, pos
                )
            self.titled[nid] = title

    def note_edge(self, src: int, dst: int, etext: Optional[str], pos: int) -> None:
        if etext is None:
            return
        key = (src, dst)
        if self.edges.get(key, etext) != etext:
            raise StructureParseError(
                f"conflicting edge texts for {key}", self.text, pos
            )
        self.edges[key] = etext


def parse_structure(text: str) -> ParsedNeighborhood:
    """Exact inverse of render_structure on its image; strict elsewhere."""
    if not isinstance(text, str) or not text:
        raise StructureParseError("empty structure text")

    pos = 0
    center: Optional[int] = None
    levels: dict[int, tuple[int, ...]] = {}
    level_paths: dict[int, tuple[tuple[int, ...], ...]] = {}
    clause_flags: list[bool] = []  # one per non-empty sentence of hop >= 2
    book = _Consistency(text)
    last_k = 0

    while True:
        sent_start = pos
        c_id, c_title, c_edge, pos = _parse_ref(text, pos)
        if c_edge is not None:
            raise StructureParseError("center cannot carry an edge annotation", text, sent_start)
        if center is None:
            center = c_id
        elif c_id != center:
            raise StructureParseError(
                f"center changed from {center} to {c_id}", text, sent_start
            )
        book.note_node(c_id, c_title, sent_start)
        pos = _expect(text, pos, _CONNECTED)

        if text.startswith(EMPTY_LEVEL_PHRASE + _WITHIN, pos):
            pos += len(EMPTY_LEVEL_PHRASE)
            pos = _expect(text, pos, _WITHIN)
            k, pos = _parse_hop_phrase(text, pos)
            if k != 1:
                raise StructureParseError("empty-level marker is only valid at one hop", text, pos)
            pos = _expect(text, pos, ".")
            refs: list[tuple[int, Optional[str], Optional[str], int]] = []
            groups: list[list[tuple[int, Optional[str], Optional[str], int]]] = []
            had_clause = False
        else:
            refs = []
            while True:
                ref_pos = pos
                nid, title, edge, pos = _parse_ref(text, pos)
                refs.append((nid, title, edge, ref_pos))
                if text.startswith(", ", pos):
                    pos += 2
                elif text.startswith(_WITHIN, pos):
                    pos += len(_WITHIN)
                    break
                else:
                    raise StructureParseError(
                        "expected ', ' or ' within ' after neighbor", text, pos
                    )
            k, pos = _parse_hop_phrase(text, pos)
            groups = []
            had_clause = False
            if text.startswith(_THROUGH, pos):
                if k < 2:
                    raise StructureParseError("paths are not allowed at one hop", text, pos)
                had_clause = True
                pos += len(_THROUGH)
                while True:
                    group = []
                    while True:
                        ref_pos = pos
                        nid, title, edge, pos = _parse_ref(text, pos)
                        group.append((nid, title, edge, ref_pos))
                        if text.startswith(" and ", pos):
                            pos += len(" and ")
                        else:
                            break
                    groups.append(group)
                    if text.startswith(_RESPECTIVELY, pos):
                        pos += len(_RESPECTIVELY)
                        break
                    if text.startswith(", ", pos):
                        pos += 2
                    else:
                        raise StructureParseError(
                            "expected ', ' or ', respectively.' after path group", text, pos
                        )
            else:
                pos = _expect(text, pos, ".")

        # sentence-level validation
        if last_k == 0 and k != 1:
            raise StructureParseError("first sentence must describe one hop", text, sent_start)
        if k <= last_k:
            raise StructureParseError(
                "hop sentences must appear in strictly increasing order", text, sent_start
            )
        last_k = k

        ids = [r[0] for r in refs]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise StructureParseError("neighbor list is not sorted ascending", text, sent_start)

        if had_clause:
            if len(groups) != len(refs):
                raise StructureParseError(
                    f"path count {len(groups)} != neighbor count {len(refs)}", text, sent_start
                )
            full_paths = []
            for ref, group in zip(refs, groups):
                if len(group) != k - 1:
                    raise StructureParseError(
                        f"path group has {len(group)} intermediates, expected {k - 1}",
                        text,
                        group[0][3],
                    )
                path = (center, *(g[0] for g in group), ref[0])
                if len(set(path)) != len(path):
                    raise StructureParseError("path is not simple", text, group[0][3])
                full_paths.append(path)
                prev = center
                for nid, title, edge, rpos in group:
                    book.note_node(nid, title, rpos)
                    book.note_edge(prev, nid, edge, rpos)
                    prev = nid
                book.note_edge(prev, ref[0], ref[2], ref[3])
            level_paths[k] = tuple(full_paths)
        for nid, title, edge, rpos in refs:
            book.note_node(nid, title, rpos)
            if k == 1:
                book.note_edge(center, nid, edge, rpos)
            elif not had_clause and edge is not None:
                raise StructureParseError(
                    "edge annotation without an identified path", text, rpos
                )
        if refs and k >= 2:
            clause_flags.append(had_clause)
        levels[k] = tuple(ids)

        if pos == len(text):
            break
        pos = _expect(text, pos, " ")

    if any(clause_flags) and not all(clause_flags):
        raise StructureParseError("inconsistent path clauses across sentences", text, 0)

    max_k = last_k
    level_tuple = tuple(levels.get(k, ()) for k in range(1, max_k + 1))
    paths_tuple = None
    if any(clause_flags):
        paths_tuple = tuple(level_paths.get(k, ()) for k in range(1, max_k + 1))
    return ParsedNeighborhood(
        center=center,
        levels=level_tuple,
        paths=paths_tuple,
        node_texts=dict(book.titled),
        edge_texts=dict(book.edges),
    )


# ---------------------------------------------------------------------------
# roundtrip verification


@dataclass(frozen=True)
class RoundtripReport:
    ok: bool
    center: int
    prompt_id: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "center": self.center,
            "prompt_id": self.prompt_id,
            "detail": self.detail,
        }


def _normalize_edge_key(key: tuple[int, int], directed: bool) -> tuple[int, int]:
    return key if directed else (min(key), max(key))


def verify_roundtrip(
    g: "Graph",
    v: int,
    spec: PromptSpec,
    counter=None,
    *,
    cumulative: bool = False,
    pathfinder: Optional["PathFinder"] = None,
    neighborhood=None,
) -> RoundtripReport:
    """Render v's full neighborhood, parse it back, compare to BFS ground truth.

    Failures come back in the report, never as exceptions.
    """
    from .budget import exhaustive_sample
    from .graph import PathFinder, cumulative_levels, khop_neighbors
    from .prompts import render_structure

    pid = spec.prompt_id
    try:
        if cumulative and spec.include_paths:
            raise ValidationError("cumulative levels cannot include paths")
        nb = neighborhood or khop_neighbors(g, v, spec.max_hop)
        if cumulative:
            nb = cumulative_levels(nb)
        if pathfinder is None and spec.include_paths:
            pathfinder = PathFinder(g)
        sample = exhaustive_sample(
            g, v, spec, counter=counter, neighborhood=nb, pathfinder=pathfinder
        )
        text = render_structure(g, sample, spec).text
        parsed = parse_structure(text)
    except (StructureParseError, ValidationError) as e:
        return RoundtripReport(ok=False, center=v, prompt_id=pid, detail=str(e))

    def fail(detail: str) -> RoundtripReport:
        return RoundtripReport(ok=False, center=v, prompt_id=pid, detail=detail)

    if parsed.center != v:
        return fail(f"center {parsed.center} != {v}")
    if len(parsed.levels) > spec.max_hop:
        return fail(f"parsed {len(parsed.levels)} levels, expected <= {spec.max_hop}")
    pad = spec.max_hop - len(parsed.levels)
    parsed_levels = parsed.levels + ((),) * pad
    for k in range(1, spec.max_hop + 1):
        if parsed_levels[k - 1] != nb.levels[k - 1]:
            return fail(
                f"level {k}: parsed {parsed_levels[k - 1]} != expected {nb.levels[k - 1]}"
            )

    if spec.include_paths:
        parsed_paths = (parsed.paths or ()) + ((),) * (spec.max_hop - len(parsed.paths or ()))
        for k in range(2, spec.max_hop + 1):
            expected = tuple(
                pathfinder.lex_first_path(v, u, k) for u in nb.levels[k - 1]
            )
            if any(p is None for p in expected):
                return fail(f"level {k}: ground-truth path missing")
            if parsed_paths[k - 1] != expected:
                return fail(
                    f"level {k} paths: parsed {parsed_paths[k - 1]} != expected {expected}"
                )
    elif parsed.paths is not None:
        return fail("unexpected path clause in text")

    if spec.use_features:
        rendered_nodes = {v}
        for lvl in nb.levels:
            rendered_nodes.update(lvl)
        expected_edges: dict[tuple[int, int], str] = {}
        if spec.include_paths:
            for k in range(2, spec.max_hop + 1):
                for u in nb.levels[k - 1]:
                    path = pathfinder.lex_first_path(v, u, k)
                    rendered_nodes.update(path)
                    for a, b in zip(path, path[1:]):
                        et = g.edge_text(a, b)
                        if et is not None:
                            expected_edges[_normalize_edge_key((a, b), g.directed)] = et
        for u in nb.levels[0]:
            et = g.edge_text(v, u)
            if et is not None:
                expected_edges[_normalize_edge_key((v, u), g.directed)] = et
        expected_texts = {
            u: g.text_of(u) for u in rendered_nodes if g.text_of(u) is not None
        }
        if dict(parsed.node_texts) != expected_texts:
            return fail("node feature texts do not round-trip")
        parsed_edges = {
            _normalize_edge_key(key, g.directed): s for key, s in parsed.edge_texts.items()
        }
        if parsed_edges != expected_edges:
            return fail("edge feature texts do not round-trip")
    else:
        if parsed.node_texts or parsed.edge_texts:
            return fail("unexpected feature annotations in text")

    return RoundtripReport(ok=True, center=v, prompt_id=pid)
