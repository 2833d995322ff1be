"""Shared graph builders and fixtures for the test suite."""

from __future__ import annotations

import random

import pytest

from graphtext import Graph

# feature strings chosen to collide with every grammar delimiter
ADVERSARIAL_TEXTS = [
    "plain title",
    "commas, everywhere, here",
    "is connected with trickery",
    "within two hops through nothing",
    "ends with respectively",
    "parens (nested (deep)) and \\ backslash",
    "node token lookalike <node_3> inside",
    "its title: recursive (edge: fake)",
    "trailing dot.",
    "and featured paths, respectively.",
    "",  # empty collapses to no annotation
    "unicode café 数据 τίτλος",
]


def path_graph(n: int = 4, **kwargs) -> Graph:
    return Graph.build(n, [(i, i + 1) for i in range(n - 1)], **kwargs)


def star_graph(leaves: int, **kwargs) -> Graph:
    return Graph.build(leaves + 1, [(0, i) for i in range(1, leaves + 1)], **kwargs)


def complete_graph(n: int, **kwargs) -> Graph:
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return Graph.build(n, edges, **kwargs)


def triangle_plus_tail() -> Graph:
    # triangle 0-1-2 plus edge 2-3
    return Graph.build(4, [(0, 1), (0, 2), (1, 2), (2, 3)])


def random_graph(
    n: int,
    avg_degree: float,
    seed: int,
    *,
    with_texts: bool = False,
    with_edge_texts: bool = False,
    num_labels: int = 0,
    isolated_ok: bool = True,
) -> Graph:
    """Erdos-Renyi-style graph with optional labels and adversarial texts."""
    rng = random.Random(seed)
    target_edges = int(n * avg_degree / 2)
    edges = set()
    attempts = 0
    while len(edges) < target_edges and attempts < 20 * target_edges + 100:
        attempts += 1
        u, v = rng.randrange(n), rng.randrange(n)
        if u != v:
            edges.add((min(u, v), max(u, v)))
    if not isolated_ok:
        covered = {x for e in edges for x in e}
        for v in range(n):
            if v not in covered and n > 1:
                u = rng.choice([x for x in range(n) if x != v])
                edges.add((min(u, v), max(u, v)))
    texts = None
    if with_texts:
        texts = [rng.choice(ADVERSARIAL_TEXTS) for _ in range(n)]
    edge_texts = None
    if with_edge_texts:
        edge_texts = {
            e: rng.choice(ADVERSARIAL_TEXTS) for e in edges if rng.random() < 0.6
        }
    labels = None
    categories = ()
    if num_labels:
        labels = [rng.randrange(num_labels) for _ in range(n)]
        categories = tuple(f"Category {chr(65 + i)}" for i in range(num_labels))
    return Graph.build(
        n, edges, texts=texts, labels=labels, categories=categories, edge_texts=edge_texts
    )


def sbm_graph(
    n: int, p_in: float, p_out: float, seed: int, blocks: int = 2
) -> Graph:
    """Stochastic block model with block id as label."""
    rng = random.Random(seed)
    labels = [v * blocks // n for v in range(n)]
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            p = p_in if labels[u] == labels[v] else p_out
            if rng.random() < p:
                edges.append((u, v))
    categories = tuple(f"Block {i}" for i in range(blocks))
    return Graph.build(n, edges, labels=labels, categories=categories)


def golden_graph() -> Graph:
    """Fully attributed 7-node graph whose node 0 has three non-empty hop levels.

    Distances from node 0: {1, 2} at hop one, {3, 4} at hop two, {5, 6} at
    hop three, giving multi-node levels, multi-intermediate paths, and a mix
    of present/absent titles and edge features.
    """
    import numpy as np

    return Graph.build(
        7,
        [(0, 1), (0, 2), (1, 3), (2, 3), (2, 4), (3, 5), (4, 6)],
        features=np.arange(14, dtype=np.float32).reshape(7, 2),
        texts=[
            "alpha paper",
            "beta, survey",
            "gamma (review)",
            None,
            "delta: methods",
            "epsilon\\study",
            None,
        ],
        labels=[0, 1, 0, None, 1, 0, None],
        categories=["Theory", "Systems"],
        split=["train", "train", "test", "unassigned", "val", "test", "unassigned"],
        edge_texts={
            (0, 1): "cites",
            (0, 2): "cites",
            (1, 3): "extends (sec. 2)",
            (2, 4): "refutes",
            (3, 5): "builds\\on",
        },
    )


@pytest.fixture
def small_attributed_graph() -> Graph:
    return golden_graph()
