"""Instruction-instance assembly: prefix + structure + query, target.

Covers node classification plus generative and discriminative link
prediction, and the mixed-dataset builder that interleaves them into one
deterministic, byte-stable JSONL stream.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence, Union

from .budget import Envelope, NeighborhoodSample, TokenCounter, parse_counter_spec, sample_neighborhood
from .errors import ValidationError
from .graph import MAX_HOP, Graph, Neighborhood, PathFinder, khop_neighbors
from .prompts import PromptSpec, Task, enumerate_family, node_token, render_structure
from .seeding import derive_rng, derive_seed

NC_PREFIX_TEMPLATE = (
    "Classify the central node into one of the following categories: [{categories}]. "
    "Pay attention to the multi-hop link relationships between the nodes."
)
NC_QUERY_TEMPLATE = "Which category should {v} be classified as?"
LP_PREFIX = (
    "Perform link prediction for the central node. "
    "Pay attention to the multi-hop link relationships between the nodes."
)
LP_GEN_QUERY_TEMPLATE = "Which other node will be connected to {v} within {h} hop?"
LP_DISC_QUERY_TEMPLATE = "Will {u} be connected to {v} within {h} hop?"

TASK_NC = "nc"
TASK_LP_GEN = "lp_gen"
TASK_LP_DISC = "lp_disc"


def nc_prefix(categories: Sequence[str]) -> str:
    return NC_PREFIX_TEMPLATE.format(categories=", ".join(categories))


def nc_query(v: int) -> str:
    return NC_QUERY_TEMPLATE.format(v=node_token(v))


def lp_gen_query(v: int, h: int) -> str:
    return LP_GEN_QUERY_TEMPLATE.format(v=node_token(v), h=h)


def lp_disc_query(candidate: int, v: int, h: int) -> str:
    return LP_DISC_QUERY_TEMPLATE.format(u=node_token(candidate), v=node_token(v), h=h)


@dataclass(frozen=True)
class Instance:
    """One training/eval record; ``input`` is prefix + structure + query."""

    prompt_id: str
    task: str
    center: int
    input: str
    target: str
    hop: Optional[int] = None
    candidate: Optional[int] = None
    split: str = "unassigned"

    def to_json(self) -> str:
        record = {
            "prompt_id": self.prompt_id,
            "task": self.task,
            "center": self.center,
            "input": self.input,
            "target": self.target,
            "hop": self.hop,
            "candidate": self.candidate,
            "split": self.split,
        }
        return json.dumps(record, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "Instance":
        d = json.loads(line)
        return cls(
            prompt_id=d["prompt_id"],
            task=d["task"],
            center=d["center"],
            input=d["input"],
            target=d["target"],
            hop=d.get("hop"),
            candidate=d.get("candidate"),
            split=d.get("split", "unassigned"),
        )


def instance_structure(inst: Instance, categories: Sequence[str]) -> str:
    """Recover the structure section by stripping the known prefix and query."""
    if inst.task == TASK_NC:
        prefix, query = nc_prefix(categories), nc_query(inst.center)
    elif inst.task == TASK_LP_GEN:
        prefix, query = LP_PREFIX, lp_gen_query(inst.center, inst.hop)
    elif inst.task == TASK_LP_DISC:
        prefix, query = LP_PREFIX, lp_disc_query(inst.candidate, inst.center, inst.hop)
    else:
        raise ValidationError(f"unknown task tag {inst.task!r}")
    head = prefix + " "
    tail = " " + query
    if not inst.input.startswith(head) or not inst.input.endswith(tail):
        raise ValidationError(f"instance input does not frame with its prefix/query: {inst.prompt_id}/{inst.center}")
    return inst.input[len(head) : len(inst.input) - len(tail)]


# ---------------------------------------------------------------------------
# single-instance builders


def build_nc_instance(g: Graph, v: int, spec: PromptSpec, sample: NeighborhoodSample) -> Instance:
    if spec.task is not Task.NODE_CLASSIFICATION:
        raise ValidationError("spec is not a node-classification spec")
    label = g.label_of(v)
    if label is None:
        raise ValidationError(f"node {v} has no label")
    structure = render_structure(g, sample, spec).text
    return Instance(
        prompt_id=spec.prompt_id,
        task=TASK_NC,
        center=v,
        input=" ".join([nc_prefix(g.categories), structure, nc_query(v)]),
        target=g.categories[label],
        split=g.split[v],
    )


def _within_pool(
    g: Graph, v: int, h: int, exact_level: bool, neighborhood: Optional[Neighborhood]
) -> list[int]:
    nb = neighborhood or khop_neighbors(g, v, h)
    if exact_level:
        return list(nb.levels[h - 1])
    return nb.within(h)


def draw_lp_target(
    g: Graph,
    v: int,
    h: int,
    seed: int,
    *,
    exact_level: bool = False,
    neighborhood: Optional[Neighborhood] = None,
) -> int:
    """Seeded uniform draw of a true neighbor within (or exactly at) hop h."""
    pool = _within_pool(g, v, h, exact_level, neighborhood)
    if not pool:
        raise ValidationError(f"node {v} has no eligible neighbor within {h} hops")
    return derive_rng(seed, "lp-target", v, h).choice(pool)


def draw_lp_candidate(
    g: Graph,
    v: int,
    h: int,
    seed: int,
    positive: bool,
    *,
    exact_level: bool = False,
    neighborhood: Optional[Neighborhood] = None,
) -> int:
    """Seeded uniform draw of a discriminative candidate node."""
    nb = neighborhood or khop_neighbors(g, v, h)
    if positive:
        pool = list(nb.levels[h - 1]) if exact_level else nb.within(h)
    else:
        # negatives are "not within h" under either level reading
        blocked = set(nb.within(h))
        blocked.add(v)
        pool = [u for u in range(g.num_nodes) if u not in blocked]
    if not pool:
        raise ValidationError(
            f"empty {'positive' if positive else 'negative'} candidate pool for node {v} at hop {h}"
        )
    return derive_rng(seed, "lp-candidate", v, h, positive).choice(pool)


def build_lp_generative(
    g: Graph,
    v: int,
    h: int,
    spec: PromptSpec,
    sample: NeighborhoodSample,
    seed: int,
    *,
    exact_level: bool = False,
    neighborhood: Optional[Neighborhood] = None,
) -> Instance:
    if not spec.task.is_link_prediction:
        raise ValidationError("spec is not a link-prediction spec")
    if not (1 <= h <= spec.max_hop):
        raise ValidationError(f"hop {h} outside 1..{spec.max_hop}")
    target = draw_lp_target(g, v, h, seed, exact_level=exact_level, neighborhood=neighborhood)
    structure = render_structure(g, sample.without({target}), spec).text
    return Instance(
        prompt_id=spec.prompt_id,
        task=TASK_LP_GEN,
        center=v,
        input=" ".join([LP_PREFIX, structure, lp_gen_query(v, h)]),
        target=node_token(target),
        hop=h,
        split=g.split[v],
    )


def build_lp_discriminative(
    g: Graph,
    v: int,
    h: int,
    spec: PromptSpec,
    sample: NeighborhoodSample,
    seed: int,
    positive: bool,
    *,
    exact_level: bool = False,
    neighborhood: Optional[Neighborhood] = None,
) -> Instance:
    if not spec.task.is_link_prediction:
        raise ValidationError("spec is not a link-prediction spec")
    if not (1 <= h <= spec.max_hop):
        raise ValidationError(f"hop {h} outside 1..{spec.max_hop}")
    candidate = draw_lp_candidate(
        g, v, h, seed, positive, exact_level=exact_level, neighborhood=neighborhood
    )
    structure = render_structure(g, sample.without({candidate}), spec).text
    return Instance(
        prompt_id=spec.prompt_id,
        task=TASK_LP_DISC,
        center=v,
        input=" ".join([LP_PREFIX, structure, lp_disc_query(candidate, v, h)]),
        target="yes" if positive else "no",
        hop=h,
        candidate=candidate,
        split=g.split[v],
    )


# ---------------------------------------------------------------------------
# dataset builder


@dataclass(frozen=True)
class DatasetConfig:
    """Everything that determines dataset content (and nothing that doesn't).

    The hash of ``describe()`` identifies a build; worker counts and output
    paths are deliberately not part of it.
    """

    tasks: tuple[str, ...] = ("nc", "lp")
    splits: tuple[str, ...] = ("train",)
    seed: int = 0
    budget: Optional[int] = None
    counter_spec: str = "whitespace"
    lp_mix_ratio: float = 1.0
    neg_ratio: float = 0.5
    max_hop: int = MAX_HOP
    features_filter: Optional[bool] = None
    paths_filter: Optional[bool] = None
    prompt_ids: Optional[tuple[str, ...]] = None
    cumulative: bool = False
    lp_exact_level: bool = False

    def describe(self) -> str:
        parts = []
        for key in sorted(self.__dataclass_fields__):
            value = getattr(self, key)
            if isinstance(value, tuple):
                value = ",".join(str(x) for x in value)
            parts.append(f"{key}={value}")
        return "\n".join(parts)

    def config_hash(self) -> str:
        return hashlib.sha256(self.describe().encode("utf-8")).hexdigest()[:16]

    def make_counter(self) -> TokenCounter:
        return parse_counter_spec(self.counter_spec, limit=self.budget)

    def select_specs(self, task: Task) -> list[PromptSpec]:
        specs = enumerate_family([task])
        out = []
        for s in specs:
            if s.max_hop > self.max_hop:
                continue
            if self.features_filter is not None and s.use_features != self.features_filter:
                continue
            if self.paths_filter is not None and s.include_paths != self.paths_filter:
                continue
            if self.cumulative and s.include_paths:
                continue
            if self.prompt_ids is not None and s.prompt_id not in self.prompt_ids:
                continue
            out.append(s)
        return out


def _validate_config(g: Graph, config: DatasetConfig) -> None:
    if not config.tasks:
        raise ValidationError("empty task list")
    for t in config.tasks:
        if t not in ("nc", "lp"):
            raise ValidationError(f"unknown task {t!r} (expected nc or lp)")
    if not (0 <= config.neg_ratio <= 1):
        raise ValidationError("neg_ratio must be in [0, 1]")
    if config.lp_mix_ratio < 0:
        raise ValidationError("lp_mix_ratio must be non-negative")
    if not (1 <= config.max_hop <= MAX_HOP):
        raise ValidationError(f"max_hop must be in 1..{MAX_HOP}")
    if "nc" in config.tasks:
        if g.labels is None:
            raise ValidationError("node classification requested but graph has no labels")
        for s in config.splits:
            if not any(
                g.labels[v] is not None and g.split[v] == s for v in range(g.num_nodes)
            ):
                raise ValidationError(f"split {s!r} has no labeled nodes")


@dataclass
class _BuildContext:
    g: Graph
    config: DatasetConfig
    counter: TokenCounter
    pathfinder: PathFinder
    nb_cache: dict
    nc_specs: dict
    lp_specs: dict

    def neighborhood(self, v: int, depth: int) -> Neighborhood:
        nb = self.nb_cache.get(v)
        if nb is None:
            nb = khop_neighbors(self.g, v, MAX_HOP)
            self.nb_cache[v] = nb
        return Neighborhood(center=v, levels=nb.levels[:depth])


def _make_context(g: Graph, config: DatasetConfig) -> _BuildContext:
    return _BuildContext(
        g=g,
        config=config,
        counter=config.make_counter(),
        pathfinder=PathFinder(g),
        nb_cache={},
        nc_specs={s.prompt_id: s for s in config.select_specs(Task.NODE_CLASSIFICATION)},
        lp_specs={s.prompt_id: s for s in config.select_specs(Task.LP_GENERATIVE)},
    )


def _build_one(ctx: _BuildContext, desc: tuple) -> Instance:
    g, config = ctx.g, ctx.config
    if desc[0] == TASK_NC:
        _, v, pid = desc
        spec = ctx.nc_specs[pid]
        item_seed = derive_seed(config.seed, "sample", TASK_NC, v, pid)
        sample = sample_neighborhood(
            g,
            v,
            spec,
            ctx.counter,
            item_seed,
            envelope=Envelope(nc_prefix(g.categories), nc_query(v)),
            neighborhood=ctx.neighborhood(v, spec.max_hop),
            pathfinder=ctx.pathfinder,
            cumulative=config.cumulative,
        )
        return build_nc_instance(g, v, spec, sample)

    _, slot, v, pid, kind, h, excluded, positive = desc
    spec = ctx.lp_specs[pid]
    slot_seed = derive_seed(config.seed, "lp", slot)
    item_seed = derive_seed(config.seed, "sample", "lp", slot, v, pid)
    nb = ctx.neighborhood(v, spec.max_hop)
    if kind == TASK_LP_GEN:
        envelope = Envelope(LP_PREFIX, lp_gen_query(v, h))
    else:
        envelope = Envelope(LP_PREFIX, lp_disc_query(excluded, v, h))
    sample = sample_neighborhood(
        g,
        v,
        spec,
        ctx.counter,
        item_seed,
        envelope=envelope,
        neighborhood=nb,
        exclude=frozenset({excluded}),
        forbidden=frozenset({excluded}),
        pathfinder=ctx.pathfinder,
        cumulative=config.cumulative,
    )
    if kind == TASK_LP_GEN:
        spec = replace(spec, task=Task.LP_GENERATIVE)
        return build_lp_generative(
            g, v, h, spec, sample, slot_seed,
            exact_level=config.lp_exact_level, neighborhood=nb,
        )
    spec = replace(spec, task=Task.LP_DISCRIMINATIVE)
    return build_lp_discriminative(
        g, v, h, spec, sample, slot_seed, positive,
        exact_level=config.lp_exact_level, neighborhood=nb,
    )


def _plan_lp_slots(ctx: _BuildContext, nc_count: int) -> list[tuple]:
    """Pre-draw every link-prediction slot so workers get pure work items."""
    g, config = ctx.g, ctx.config
    lp_specs = sorted(ctx.lp_specs.values(), key=lambda s: s.prompt_id)
    if "lp" not in config.tasks or config.lp_mix_ratio == 0 or not lp_specs:
        if "lp" in config.tasks and config.lp_mix_ratio > 0 and not lp_specs:
            raise ValidationError("no link-prediction prompt specs selected")
        return []
    if "nc" in config.tasks:
        total = int(config.lp_mix_ratio * nc_count + 0.5)
    else:
        total = int(config.lp_mix_ratio * g.num_nodes * len(lp_specs) + 0.5)

    candidates = [(v, spec) for v in range(g.num_nodes) for spec in lp_specs]
    descriptors: list[tuple] = []
    cursor = 0
    failures = 0
    while len(descriptors) < total and failures < len(candidates):
        v, spec = candidates[cursor % len(candidates)]
        cursor += 1
        slot = len(descriptors)
        slot_seed = derive_seed(config.seed, "lp", slot)
        h = derive_rng(slot_seed, "hop").randint(1, spec.max_hop)
        nb = ctx.neighborhood(v, spec.max_hop)
        kind = TASK_LP_GEN if slot % 2 == 0 else TASK_LP_DISC
        try:
            if kind == TASK_LP_GEN:
                excluded = draw_lp_target(
                    g, v, h, slot_seed,
                    exact_level=config.lp_exact_level, neighborhood=nb,
                )
                desc = ("lp", slot, v, spec.prompt_id, kind, h, excluded, None)
            else:
                negative = derive_rng(slot_seed, "polarity").random() < config.neg_ratio
                positive = not negative
                try:
                    excluded = draw_lp_candidate(
                        g, v, h, slot_seed, positive,
                        exact_level=config.lp_exact_level, neighborhood=nb,
                    )
                except ValidationError:
                    # drawn polarity infeasible on this node; try the other
                    positive = not positive
                    excluded = draw_lp_candidate(
                        g, v, h, slot_seed, positive,
                        exact_level=config.lp_exact_level, neighborhood=nb,
                    )
                desc = ("lp", slot, v, spec.prompt_id, kind, h, excluded, positive)
        except ValidationError:
            failures += 1
            continue
        failures = 0
        descriptors.append(desc)
    return descriptors


_POOL_CTX: dict = {}


def _pool_init(g: Graph, config: DatasetConfig) -> None:
    _POOL_CTX["ctx"] = _make_context(g, config)


def _pool_build(desc: tuple) -> Instance:
    return _build_one(_POOL_CTX["ctx"], desc)


def build_dataset(g: Graph, config: DatasetConfig, workers: int = 1) -> list[Instance]:
    """Build the full instance list, sorted by (center, prompt id, task).

    Every instance is a pure function of (graph, config); the worker count
    only spreads the rendering work and never changes a byte of output.
    """
    _validate_config(g, config)
    ctx = _make_context(g, config)

    descriptors: list[tuple] = []
    nc_count = 0
    if "nc" in config.tasks:
        if not ctx.nc_specs:
            raise ValidationError("no node-classification prompt specs selected")
        split_set = set(config.splits)
        nc_nodes = [
            v
            for v in range(g.num_nodes)
            if g.labels[v] is not None and g.split[v] in split_set
        ]
        for v in nc_nodes:
            for pid in sorted(ctx.nc_specs):
                descriptors.append((TASK_NC, v, pid))
        nc_count = len(descriptors)

    descriptors.extend(_plan_lp_slots(ctx, nc_count))

    if workers > 1 and len(descriptors) > 1:
        with multiprocessing.Pool(
            processes=workers, initializer=_pool_init, initargs=(g, config)
        ) as pool:
            instances = pool.map(_pool_build, descriptors, chunksize=64)
    else:
        instances = [_build_one(ctx, d) for d in descriptors]

    instances.sort(key=lambda i: (i.center, i.prompt_id, i.task))
    return instances


# ---------------------------------------------------------------------------
# JSONL serialization

HEADER_KEY = "_header"


def write_dataset(
    target: Union[str, Path, IO[str]],
    instances: Iterable[Instance],
    header: Optional[dict] = None,
) -> None:
    """Write instances as JSONL with an optional in-band header line."""

    def emit(f: IO[str]) -> None:
        if header is not None:
            f.write(json.dumps({HEADER_KEY: header}, ensure_ascii=False, separators=(",", ":")))
            f.write("\n")
        for inst in instances:
            f.write(inst.to_json())
            f.write("\n")

    if hasattr(target, "write"):
        emit(target)
    else:
        with open(target, "w", encoding="utf-8") as f:
            emit(f)


def read_dataset(path: Union[str, Path]) -> tuple[Optional[dict], list[Instance]]:
    header = None
    instances = []
    with open(path, "r", encoding="utf-8") as f:
        for i, line in enumerate(f):
            line = line.rstrip("\n")
            if not line:
                continue
            if i == 0 and f'"{HEADER_KEY}"' in line[: len(HEADER_KEY) + 4]:
                header = json.loads(line)[HEADER_KEY]
                continue
            instances.append(Instance.from_json(line))
    return header, instances
