"""Attributed graphs: loading, validation, k-hop neighborhoods, paths, splits.

A :class:`Graph` is immutable after construction; every function here is a
pure function of its arguments, so graphs can be shared freely across
worker processes.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ValidationError
from .seeding import derive_rng

MAX_HOP = 3
SPLIT_TAGS = ("train", "val", "test", "unassigned")
GLMF_MAGIC = b"GLMF"

PathLike = Union[str, Path]


# ---------------------------------------------------------------------------
# core types


@dataclass(frozen=True)
class LoadReport:
    """What the loader kept and what it silently dropped."""

    nodes: int
    edges: int
    self_loops: int = 0
    duplicate_edges: int = 0

    def to_dict(self) -> dict:
        return {
            "nodes": self.nodes,
            "edges": self.edges,
            "self_loops": self.self_loops,
            "duplicate_edges": self.duplicate_edges,
        }


@dataclass(frozen=True)
class Graph:
    """Immutable attributed graph.

    ``adj`` holds sorted neighbor tuples (out-neighbors when directed).
    ``features`` is a read-only (num_nodes, d) float32 matrix or None.
    ``labels`` holds category ids (or None per node); ``split`` holds one of
    SPLIT_TAGS per node.  ``edge_texts`` maps edge keys to feature strings;
    keys are (min, max) pairs for undirected graphs.
    """

    num_nodes: int
    directed: bool
    adj: tuple[tuple[int, ...], ...]
    features: Optional[np.ndarray]
    texts: Optional[tuple[Optional[str], ...]]
    labels: Optional[tuple[Optional[int], ...]]
    categories: tuple[str, ...]
    split: tuple[str, ...]
    edge_texts: Optional[Mapping[tuple[int, int], str]]

    @classmethod
    def build(
        cls,
        num_nodes: int,
        edges: Iterable[tuple[int, int]],
        *,
        directed: bool = False,
        features: Optional[np.ndarray] = None,
        texts: Optional[Sequence[Optional[str]]] = None,
        labels: Optional[Sequence[Optional[int]]] = None,
        categories: Sequence[str] = (),
        split: Optional[Sequence[str]] = None,
        edge_texts: Optional[Mapping[tuple[int, int], str]] = None,
    ) -> "Graph":
        """Construct and validate a graph; self-loops and duplicates are dropped."""
        g, _ = cls.build_with_report(
            num_nodes,
            edges,
            directed=directed,
            features=features,
            texts=texts,
            labels=labels,
            categories=categories,
            split=split,
            edge_texts=edge_texts,
        )
        return g

    @classmethod
    def build_with_report(
        cls,
        num_nodes: int,
        edges: Iterable[tuple[int, int]],
        *,
        directed: bool = False,
        features: Optional[np.ndarray] = None,
        texts: Optional[Sequence[Optional[str]]] = None,
        labels: Optional[Sequence[Optional[int]]] = None,
        categories: Sequence[str] = (),
        split: Optional[Sequence[str]] = None,
        edge_texts: Optional[Mapping[tuple[int, int], str]] = None,
    ) -> tuple["Graph", LoadReport]:
        if num_nodes < 0:
            raise ValidationError("num_nodes must be non-negative")

        kept: set[tuple[int, int]] = set()
        self_loops = 0
        duplicates = 0
        for u, v in edges:
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise ValidationError(f"edge ({u}, {v}) references unknown node id")
            if u == v:
                self_loops += 1
                continue
            key = (u, v) if directed else (min(u, v), max(u, v))
            if key in kept:
                duplicates += 1
                continue
            kept.add(key)

        nbrs: list[list[int]] = [[] for _ in range(num_nodes)]
        for u, v in kept:
            nbrs[u].append(v)
            if not directed:
                nbrs[v].append(u)
        adj = tuple(tuple(sorted(ns)) for ns in nbrs)

        if features is not None:
            features = np.asarray(features, dtype=np.float32)
            if features.ndim != 2 or features.shape[0] != num_nodes:
                raise ValidationError(
                    f"feature matrix must have {num_nodes} rows, got shape {features.shape}"
                )
            features = features.copy()
            features.setflags(write=False)

        if texts is not None:
            if len(texts) != num_nodes:
                raise ValidationError("texts length must equal num_nodes")
            texts = tuple(t if t else None for t in texts)

        categories = tuple(categories)
        if labels is not None:
            if len(labels) != num_nodes:
                raise ValidationError("labels length must equal num_nodes")
            for lab in labels:
                if lab is not None and not (0 <= lab < len(categories)):
                    raise ValidationError(f"label id {lab} does not index categories")
            labels = tuple(labels)

        if split is None:
            split = ("unassigned",) * num_nodes
        else:
            if len(split) != num_nodes:
                raise ValidationError("split length must equal num_nodes")
            for tag in split:
                if tag not in SPLIT_TAGS:
                    raise ValidationError(f"unknown split tag {tag!r}")
            split = tuple(split)

        if edge_texts is not None:
            normalized = {}
            for (u, v), s in edge_texts.items():
                key = (u, v) if directed else (min(u, v), max(u, v))
                if key not in kept:
                    raise ValidationError(f"edge text for non-edge ({u}, {v})")
                if s:
                    normalized[key] = s
            edge_texts = normalized or None

        g = cls(
            num_nodes=num_nodes,
            directed=directed,
            adj=adj,
            features=features,
            texts=texts,
            labels=labels,
            categories=categories,
            split=split,
            edge_texts=edge_texts,
        )
        report = LoadReport(
            nodes=num_nodes,
            edges=len(kept),
            self_loops=self_loops,
            duplicate_edges=duplicates,
        )
        return g, report

    @property
    def num_edges(self) -> int:
        total = sum(len(ns) for ns in self.adj)
        return total if self.directed else total // 2

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adj[v]

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def edges(self) -> Iterator[tuple[int, int]]:
        for u, ns in enumerate(self.adj):
            for v in ns:
                if self.directed or u < v:
                    yield (u, v)

    def edge_text(self, u: int, v: int) -> Optional[str]:
        if self.edge_texts is None:
            return None
        key = (u, v) if self.directed else (min(u, v), max(u, v))
        return self.edge_texts.get(key)

    def text_of(self, v: int) -> Optional[str]:
        return None if self.texts is None else self.texts[v]

    def label_of(self, v: int) -> Optional[int]:
        return None if self.labels is None else self.labels[v]

    def labeled_nodes(self) -> list[int]:
        if self.labels is None:
            return []
        return [v for v in range(self.num_nodes) if self.labels[v] is not None]


@dataclass(frozen=True)
class Neighborhood:
    """Exact-distance neighbor levels around a center node.

    ``levels[k-1]`` holds the sorted node ids at shortest-path distance
    exactly k.  Levels may be empty; once a level is empty all deeper
    levels are empty too.
    """

    center: int
    levels: tuple[tuple[int, ...], ...]

    def level(self, k: int) -> tuple[int, ...]:
        return self.levels[k - 1]

    def within(self, h: int) -> list[int]:
        """Sorted ids at distance 1..h from the center."""
        out: list[int] = []
        for lvl in self.levels[:h]:
            out.extend(lvl)
        return sorted(out)


@dataclass(frozen=True)
class PathSet:
    """Simple paths of a fixed length from a center node, lexicographic order."""

    center: int
    hop: int
    paths: tuple[tuple[int, ...], ...]
    truncated: bool


# ---------------------------------------------------------------------------
# neighborhood and path computation


def khop_neighbors(g: Graph, v: int, max_hop: int) -> Neighborhood:
    """Exact-distance BFS levels L_1..L_max_hop around v, each sorted."""
    if not (0 <= v < g.num_nodes):
        raise ValidationError(f"node id {v} out of range")
    if not (1 <= max_hop <= MAX_HOP):
        raise ValidationError(f"hop cap must be in 1..{MAX_HOP}, got {max_hop}")

    visited = {v}
    frontier = [v]
    levels: list[tuple[int, ...]] = []
    for _ in range(max_hop):
        nxt: list[int] = []
        for u in frontier:
            for w in g.adj[u]:
                if w not in visited:
                    visited.add(w)
                    nxt.append(w)
        nxt.sort()
        levels.append(tuple(nxt))
        frontier = nxt
    return Neighborhood(center=v, levels=tuple(levels))


def cumulative_levels(nb: Neighborhood) -> Neighborhood:
    """Within-k variant: level k becomes the union of levels 1..k."""
    acc: list[int] = []
    out = []
    for lvl in nb.levels:
        acc.extend(lvl)
        out.append(tuple(sorted(acc)))
    return Neighborhood(center=nb.center, levels=tuple(out))


def _iter_simple_paths(g: Graph, v: int, k: int) -> Iterator[tuple[int, ...]]:
    """All simple length-k paths from v in lexicographic node-id order."""
    path = [v]
    on_path = {v}

    def rec() -> Iterator[tuple[int, ...]]:
        if len(path) == k + 1:
            yield tuple(path)
            return
        for w in g.adj[path[-1]]:
            if w in on_path:
                continue
            path.append(w)
            on_path.add(w)
            yield from rec()
            path.pop()
            on_path.remove(w)

    yield from rec()


def paths_to_level(g: Graph, v: int, k: int, limit: Optional[int] = None) -> PathSet:
    """Simple paths of length k starting at v, truncated at ``limit``."""
    if not (0 <= v < g.num_nodes):
        raise ValidationError(f"node id {v} out of range")
    if not (2 <= k <= MAX_HOP):
        raise ValidationError(f"path hop must be in 2..{MAX_HOP}, got {k}")

    gen = _iter_simple_paths(g, v, k)
    if limit is None:
        return PathSet(center=v, hop=k, paths=tuple(gen), truncated=False)
    if limit < 0:
        raise ValidationError("limit must be non-negative")
    paths = []
    for p in gen:
        if len(paths) == limit:
            return PathSet(center=v, hop=k, paths=tuple(paths), truncated=True)
        paths.append(p)
    return PathSet(center=v, hop=k, paths=tuple(paths), truncated=False)


class PathFinder:
    """Cached lexicographic shortest-path lookup on one graph.

    Keeps per-source BFS distance maps (depth capped at MAX_HOP) so that
    repeated path queries during rendering stay cheap.
    """

    def __init__(self, g: Graph):
        self._g = g
        self._fwd: dict[int, dict[int, int]] = {}
        self._rev: dict[int, dict[int, int]] = {}
        self._radj: Optional[list[list[int]]] = None

    def _reverse_adj(self) -> list[list[int]]:
        if self._radj is None:
            radj: list[list[int]] = [[] for _ in range(self._g.num_nodes)]
            for u, ns in enumerate(self._g.adj):
                for v in ns:
                    radj[v].append(u)
            self._radj = radj
        return self._radj

    def _distances(self, src: int, reverse: bool) -> dict[int, int]:
        cache = self._rev if reverse else self._fwd
        if src in cache:
            return cache[src]
        if reverse and self._g.directed:
            adj: Sequence[Sequence[int]] = self._reverse_adj()
        else:
            adj = self._g.adj
        dist = {src: 0}
        frontier = [src]
        for d in range(1, MAX_HOP + 1):
            nxt = []
            for u in frontier:
                for w in adj[u]:
                    if w not in dist:
                        dist[w] = d
                        nxt.append(w)
            frontier = nxt
        cache[src] = dist
        return dist

    def lex_first_path(
        self, v: int, u: int, k: int, forbidden: frozenset[int] = frozenset()
    ) -> Optional[tuple[int, ...]]:
        """Lexicographically smallest length-k path from v to u, or None.

        Only defined for u at shortest-path distance exactly k from v; any
        length-k path is then a shortest path, so every position j on it
        must sit at distance j from v and k-j from u.  That pins the search
        to a thin DAG and makes smallest-first DFS both correct and fast.
        """
        dv = self._distances(v, reverse=False)
        du = self._distances(u, reverse=True)
        if dv.get(u) != k:
            return None

        g = self._g

        def search(current: int, j: int, prefix: tuple[int, ...]) -> Optional[tuple[int, ...]]:
            if j == k:
                return prefix
            for w in g.adj[current]:
                if w in forbidden:
                    continue
                if dv.get(w) != j + 1 or du.get(w) != k - j - 1:
                    continue
                found = search(w, j + 1, prefix + (w,))
                if found is not None:
                    return found
            return None

        return search(v, 0, (v,))


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class RatioSplit:
    """Fractional train/val/test assignment over all nodes."""

    train: float
    val: float
    test: float


@dataclass(frozen=True)
class PerClassSplit:
    """Fixed number of train nodes per class plus fixed-size val/test pools."""

    train_per_class: int
    val_count: int = 500
    test_count: int = 1000


SplitPolicy = Union[RatioSplit, PerClassSplit]


def make_split(g: Graph, policy: SplitPolicy, seed: int) -> Graph:
    """Return a copy of g with split tags assigned; deterministic in seed."""
    tags = ["unassigned"] * g.num_nodes

    if isinstance(policy, RatioSplit):
        total = policy.train + policy.val + policy.test
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"split fractions sum to {total}, expected 1.0")
        if min(policy.train, policy.val, policy.test) < 0:
            raise ValidationError("split fractions must be non-negative")
        order = list(range(g.num_nodes))
        derive_rng(seed, "split", "ratio").shuffle(order)
        n = g.num_nodes
        n_train = int(n * policy.train + 0.5)
        n_trainval = int(n * (policy.train + policy.val) + 0.5)
        for i, v in enumerate(order):
            if i < n_train:
                tags[v] = "train"
            elif i < n_trainval:
                tags[v] = "val"
            else:
                tags[v] = "test"
        return replace(g, split=tuple(tags))

    if isinstance(policy, PerClassSplit):
        if g.labels is None:
            raise ValidationError("per-class split requires labels")
        rng = derive_rng(seed, "split", "per-class")
        remaining = set(g.labeled_nodes())
        for cid in range(len(g.categories)):
            pool = sorted(v for v in remaining if g.labels[v] == cid)
            if len(pool) < policy.train_per_class:
                raise ValidationError(
                    f"class {g.categories[cid]!r} has {len(pool)} labeled nodes, "
                    f"need {policy.train_per_class}"
                )
            chosen = rng.sample(pool, policy.train_per_class)
            for v in chosen:
                tags[v] = "train"
                remaining.discard(v)
        for tag, count in (("val", policy.val_count), ("test", policy.test_count)):
            pool = sorted(remaining)
            if len(pool) < count:
                raise ValidationError(
                    f"not enough labeled nodes left for {tag} ({len(pool)} < {count})"
                )
            chosen = rng.sample(pool, count)
            for v in chosen:
                tags[v] = tag
                remaining.discard(v)
        return replace(g, split=tuple(tags))

    raise ValidationError(f"unknown split policy {policy!r}")


# ---------------------------------------------------------------------------
# file formats


def write_glmf(path: PathLike, matrix: np.ndarray) -> None:
    """Binary feature matrix: magic, u32 rows, u32 cols, float32 LE row-major."""
    matrix = np.asarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValidationError("feature matrix must be 2-D")
    with open(path, "wb") as f:
        f.write(GLMF_MAGIC)
        f.write(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
        f.write(matrix.tobytes(order="C"))


def read_glmf(path: PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != GLMF_MAGIC:
            raise ValidationError(f"{path}: bad magic {magic!r}, expected {GLMF_MAGIC!r}")
        header = f.read(8)
        if len(header) != 8:
            raise ValidationError(f"{path}: truncated header")
        rows, cols = struct.unpack("<II", header)
        data = f.read(rows * cols * 4)
        if len(data) != rows * cols * 4:
            raise ValidationError(f"{path}: truncated payload")
    return np.frombuffer(data, dtype="<f4").reshape(rows, cols).copy()


def read_feature_matrix(path: PathLike, expected_rows: Optional[int] = None) -> np.ndarray:
    """Read features from GLMF binary or headerless CSV (sniffed by magic)."""
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == GLMF_MAGIC:
        matrix = read_glmf(path)
    else:
        try:
            matrix = np.loadtxt(path, delimiter=",", dtype=np.float32, ndmin=2)
        except ValueError as e:
            raise ValidationError(f"{path}: cannot parse features CSV: {e}") from e
    if expected_rows is not None and matrix.shape[0] != expected_rows:
        raise ValidationError(
            f"{path}: feature rows {matrix.shape[0]} != node count {expected_rows}"
        )
    return matrix


def _read_nodes_csv(path: PathLike) -> tuple[list[Optional[str]], list[Optional[str]]]:
    """Returns (labels, texts) indexed by node id; ids must be 0..n-1."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "id" not in reader.fieldnames:
            raise ValidationError(f"{path}: missing header with 'id' column")
        rows = []
        for row in reader:
            try:
                nid = int(row["id"])
            except (TypeError, ValueError):
                raise ValidationError(f"{path}: non-integer node id {row.get('id')!r}")
            rows.append((nid, row.get("label") or None, row.get("text") or None))
    n = len(rows)
    labels: list[Optional[str]] = [None] * n
    texts: list[Optional[str]] = [None] * n
    seen = set()
    for nid, label, text in rows:
        if not (0 <= nid < n) or nid in seen:
            raise ValidationError(f"{path}: node ids must be exactly 0..{n - 1}, got {nid}")
        seen.add(nid)
        labels[nid] = label
        texts[nid] = text
    return labels, texts


def _read_edges_csv(path: PathLike) -> tuple[list[tuple[int, int]], dict[tuple[int, int], str]]:
    edges: list[tuple[int, int]] = []
    texts: dict[tuple[int, int], str] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"src", "dst"} <= set(reader.fieldnames):
            raise ValidationError(f"{path}: missing header with 'src,dst' columns")
        has_text = "text" in reader.fieldnames
        for row in reader:
            try:
                u, v = int(row["src"]), int(row["dst"])
            except (TypeError, ValueError):
                raise ValidationError(f"{path}: non-integer edge endpoint in {row!r}")
            edges.append((u, v))
            if has_text and row.get("text"):
                texts[(u, v)] = row["text"]
    return edges, texts


def read_categories(path: PathLike) -> tuple[str, ...]:
    with open(path, "r", encoding="utf-8") as f:
        return tuple(line.rstrip("\n") for line in f if line.rstrip("\n"))


def load_graph(
    nodes_path: PathLike,
    edges_path: PathLike,
    features_path: Optional[PathLike] = None,
    categories_path: Optional[PathLike] = None,
    *,
    directed: bool = False,
) -> tuple[Graph, LoadReport]:
    """Load and validate a graph from its table files.

    Raises ValidationError on dimension mismatches, out-of-range edge
    endpoints, or label names missing from the categories file.
    """
    label_names, texts = _read_nodes_csv(nodes_path)
    n = len(label_names)

    if categories_path is not None:
        categories = read_categories(categories_path)
    else:
        categories = tuple(sorted({lab for lab in label_names if lab is not None}))
    cat_index = {name: i for i, name in enumerate(categories)}

    labels: list[Optional[int]] = []
    for lab in label_names:
        if lab is None:
            labels.append(None)
        elif lab in cat_index:
            labels.append(cat_index[lab])
        else:
            raise ValidationError(f"unknown category name {lab!r} in {nodes_path}")

    edges, edge_texts = _read_edges_csv(edges_path)
    features = None
    if features_path is not None:
        features = read_feature_matrix(features_path, expected_rows=n)

    # edge_texts keyed by raw endpoints; drop entries for self-loops so
    # build_with_report's non-edge check does not trip on dropped edges
    edge_texts = {k: s for k, s in edge_texts.items() if k[0] != k[1]}
    return Graph.build_with_report(
        n,
        edges,
        directed=directed,
        features=features,
        texts=texts,
        labels=labels if any(l is not None for l in labels) else None,
        categories=categories,
        edge_texts=edge_texts or None,
    )


# ---------------------------------------------------------------------------
# normalized graph directory (CLI artifact)

GRAPH_META_FILE = "graph.json"


def save_graph_dir(g: Graph, report: LoadReport, out_dir: PathLike, meta: Optional[dict] = None) -> None:
    """Write a normalized graph directory: tables, GLMF features, metadata."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "nodes.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "label", "text"])
        for v in range(g.num_nodes):
            label = g.categories[g.labels[v]] if g.labels and g.labels[v] is not None else ""
            writer.writerow([v, label, g.text_of(v) or ""])

    with open(out / "edges.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        has_etext = g.edge_texts is not None
        writer.writerow(["src", "dst", "text"] if has_etext else ["src", "dst"])
        for u, v in g.edges():
            if has_etext:
                writer.writerow([u, v, g.edge_text(u, v) or ""])
            else:
                writer.writerow([u, v])

    if g.features is not None:
        write_glmf(out / "features.glmf", g.features)
    if g.categories:
        with open(out / "categories.txt", "w", encoding="utf-8") as f:
            for name in g.categories:
                f.write(name + "\n")

    info = {
        "directed": g.directed,
        "report": report.to_dict(),
        "feature_dim": None if g.features is None else int(g.features.shape[1]),
    }
    if meta:
        info["_meta"] = meta
    with open(out / GRAPH_META_FILE, "w", encoding="utf-8") as f:
        json.dump(info, f, indent=2, sort_keys=True)
        f.write("\n")


def load_graph_dir(graph_dir: PathLike, splits_path: Optional[PathLike] = None) -> Graph:
    """Load a graph previously written by save_graph_dir."""
    d = Path(graph_dir)
    meta_path = d / GRAPH_META_FILE
    if not meta_path.exists():
        raise ValidationError(f"{graph_dir}: not a graph directory (missing {GRAPH_META_FILE})")
    with open(meta_path, "r", encoding="utf-8") as f:
        info = json.load(f)
    features = d / "features.glmf"
    categories = d / "categories.txt"
    g, _ = load_graph(
        d / "nodes.csv",
        d / "edges.csv",
        features if features.exists() else None,
        categories if categories.exists() else None,
        directed=bool(info.get("directed", False)),
    )
    if splits_path is not None:
        g = apply_splits_file(g, splits_path)
    return g


def write_splits_csv(g: Graph, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "split"])
        for v in range(g.num_nodes):
            writer.writerow([v, g.split[v]])


def apply_splits_file(g: Graph, path: PathLike) -> Graph:
    tags = ["unassigned"] * g.num_nodes
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"id", "split"} <= set(reader.fieldnames):
            raise ValidationError(f"{path}: missing header with 'id,split' columns")
        for row in reader:
            try:
                v = int(row["id"])
            except (TypeError, ValueError):
                raise ValidationError(f"{path}: non-integer node id {row.get('id')!r}")
            if not (0 <= v < g.num_nodes):
                raise ValidationError(f"{path}: node id {v} out of range")
            tag = row["split"]
            if tag not in SPLIT_TAGS:
                raise ValidationError(f"{path}: unknown split tag {tag!r}")
            tags[v] = tag
    return replace(g, split=tuple(tags))
