"""Command-line pipeline: ingest, split, build, verify, vocab, oracle, eval.

Artifacts are written atomically (temp file + rename) and every dataset
carries an in-band header with the config hash, seed, and tool version so
a build can be reproduced from its own output.  Exit codes: 0 success,
1 validation failure, 2 I/O failure.
"""

from __future__ import annotations

import json
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

import click

from . import __version__
from .budget import parse_counter_spec
from .errors import ValidationError
from .evaluate import (
    OracleConfig,
    accuracy,
    match_predictions,
    oracle_classify,
    oracle_classify_graph,
    read_predictions,
    train_majority,
    training_labels,
)
from .graph import (
    Graph,
    PerClassSplit,
    RatioSplit,
    load_graph,
    load_graph_dir,
    make_split,
    save_graph_dir,
    write_splits_csv,
)
from .instances import (
    TASK_NC,
    DatasetConfig,
    Instance,
    build_dataset,
    instance_structure,
    read_dataset,
    write_dataset,
)
from .parsing import parse_structure, verify_roundtrip
from .prompts import DEFAULT_TOKEN_FORMAT, Task, decode_prompt_id, enumerate_family
from .seeding import derive_seed
from .vocab import build_vocab_manifest, write_vocab_manifest


def _atomic_write(path, writer: Callable) -> None:
    """Write via a temp file in the target directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            writer(f)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _emit(obj) -> None:
    click.echo(json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True))


def load_config_file(path) -> dict[str, str]:
    """key=value lines; blank lines and #-comments ignored."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{ln}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _as_bool(s: str, key: str) -> bool:
    low = s.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValidationError(f"config key {key}: expected boolean, got {s!r}")


class _Settings:
    """CLI flag values with config-file fallback."""

    def __init__(self, config_path: Optional[str]):
        self.file = load_config_file(config_path) if config_path else {}

    def get(self, key: str, cli_value, default, cast=str):
        if cli_value is not None:
            return cli_value
        if key in self.file:
            raw = self.file[key]
            if cast is bool:
                return _as_bool(raw, key)
            return cast(raw)
        return default


@dataclass(frozen=True)
class RunConfig:
    """One build invocation: dataset semantics plus plumbing.

    Only ``dataset`` participates in the config hash; worker count and
    paths can vary without changing a byte of the artifact.
    """

    dataset: DatasetConfig
    graph_dir: str
    splits_file: Optional[str]
    out: Optional[str]
    workers: int

    def header(self, g: Graph) -> dict:
        return {
            "config_hash": self.dataset.config_hash(),
            "seed": self.dataset.seed,
            "version": __version__,
            "categories": list(g.categories),
        }


def _parse_split_policy(spec: str):
    if spec.startswith("ratio:"):
        parts = spec.split(":", 1)[1].split(",")
        if len(parts) != 3:
            raise ValidationError(f"ratio policy needs three fractions, got {spec!r}")
        try:
            train, val, test = (float(p) for p in parts)
        except ValueError:
            raise ValidationError(f"bad fraction in {spec!r}")
        return RatioSplit(train=train, val=val, test=test)
    if spec.startswith("per-class:"):
        parts = spec.split(":", 1)[1].split(",")
        try:
            nums = [int(p) for p in parts]
        except ValueError:
            raise ValidationError(f"bad count in {spec!r}")
        if len(nums) == 1:
            return PerClassSplit(train_per_class=nums[0])
        if len(nums) == 3:
            return PerClassSplit(
                train_per_class=nums[0], val_count=nums[1], test_count=nums[2]
            )
        raise ValidationError(f"per-class policy needs 1 or 3 counts, got {spec!r}")
    raise ValidationError(f"unknown split policy {spec!r}")


def _csv_tuple(s: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in s.split(",") if p.strip())


@click.group()
@click.version_option(version=__version__)
def cli():
    """Compile attributed graphs into instruction-prompt datasets."""


@cli.command()
@click.option("--nodes", "nodes_path", required=True, type=click.Path(exists=True))
@click.option("--edges", "edges_path", required=True, type=click.Path(exists=True))
@click.option("--features", "features_path", type=click.Path(exists=True))
@click.option("--categories", "categories_path", type=click.Path(exists=True))
@click.option("--directed", is_flag=True, default=False)
@click.argument("out_dir", type=click.Path())
def ingest(nodes_path, edges_path, features_path, categories_path, directed, out_dir):
    """Load raw tables, validate, and write a normalized graph directory."""
    g, report = load_graph(
        nodes_path,
        edges_path,
        features_path,
        categories_path,
        directed=directed,
    )
    save_graph_dir(g, report, out_dir)
    _emit({"out_dir": str(out_dir), **report.to_dict()})


@cli.command()
@click.argument("graph_dir", type=click.Path(exists=True))
@click.option("--splits-file", type=click.Path(exists=True))
def stats(graph_dir, splits_file):
    """Summarize a normalized graph directory."""
    g = load_graph_dir(graph_dir, splits_file)
    degrees = [g.degree(v) for v in range(g.num_nodes)]
    label_counts = {}
    if g.labels is not None:
        for v in range(g.num_nodes):
            lab = g.labels[v]
            if lab is not None:
                name = g.categories[lab]
                label_counts[name] = label_counts.get(name, 0) + 1
    split_counts = {}
    for tag in g.split:
        split_counts[tag] = split_counts.get(tag, 0) + 1
    _emit(
        {
            "nodes": g.num_nodes,
            "edges": g.num_edges,
            "directed": g.directed,
            "degree_min": min(degrees, default=0),
            "degree_max": max(degrees, default=0),
            "degree_mean": (sum(degrees) / len(degrees)) if degrees else 0.0,
            "feature_dim": None if g.features is None else int(g.features.shape[1]),
            "categories": list(g.categories),
            "label_counts": label_counts,
            "split_counts": split_counts,
        }
    )


@cli.command("split")
@click.argument("graph_dir", type=click.Path(exists=True))
@click.option("--policy", required=True, help="ratio:TR,VA,TE or per-class:N[,VAL,TEST]")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
def split_cmd(graph_dir, policy, seed, out_path, config_path):
    """Assign split tags and write them as a splits CSV."""
    settings = _Settings(config_path)
    seed = settings.get("seed", seed, 0, int)
    g = load_graph_dir(graph_dir)
    g = make_split(g, _parse_split_policy(policy), seed)
    _atomic_write(out_path, lambda f: _write_splits(g, f))
    counts = {}
    for tag in g.split:
        counts[tag] = counts.get(tag, 0) + 1
    _emit({"out": str(out_path), "seed": seed, "counts": counts})


def _write_splits(g: Graph, f) -> None:
    f.write("id,split\n")
    for v in range(g.num_nodes):
        f.write(f"{v},{g.split[v]}\n")


def _dataset_config_from_flags(settings, tasks, splits, seed, budget, counter, lp_mix,
                               neg_ratio, max_hop, features, paths, prompt_ids,
                               cumulative, lp_exact_level) -> DatasetConfig:
    return DatasetConfig(
        tasks=_csv_tuple(settings.get("tasks", tasks, "nc,lp")),
        splits=_csv_tuple(settings.get("splits", splits, "train")),
        seed=settings.get("seed", seed, 0, int),
        budget=settings.get("budget", budget, None, int),
        counter_spec=settings.get("counter", counter, "whitespace"),
        lp_mix_ratio=settings.get("lp_mix", lp_mix, 1.0, float),
        neg_ratio=settings.get("neg_ratio", neg_ratio, 0.5, float),
        max_hop=settings.get("max_hop", max_hop, 3, int),
        features_filter=settings.get("features", features, None, bool),
        paths_filter=settings.get("paths", paths, None, bool),
        prompt_ids=(
            _csv_tuple(settings.get("prompt_ids", prompt_ids, "")) or None
        ),
        cumulative=settings.get("cumulative_levels", cumulative, False, bool),
        lp_exact_level=settings.get("lp_exact_level", lp_exact_level, False, bool),
    )


@cli.command()
@click.argument("graph_dir", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--splits-file", type=click.Path(exists=True))
@click.option("--tasks", default=None, help="comma list from {nc,lp}")
@click.option("--splits", default=None, help="splits whose labeled nodes get NC instances")
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--budget", type=int, default=None)
@click.option("--counter", default=None, help="whitespace | chars:<r> | table:<path>")
@click.option("--lp-mix", "lp_mix", type=float, default=None)
@click.option("--neg-ratio", "neg_ratio", type=float, default=None)
@click.option("--max-hop", "max_hop", type=int, default=None)
@click.option("--features/--no-features", "features", default=None)
@click.option("--paths/--no-paths", "paths", default=None)
@click.option("--prompt-ids", "prompt_ids", default=None, help="comma list of 4-digit ids")
@click.option("--cumulative-levels", "cumulative", is_flag=True, default=None)
@click.option("--lp-exact-level", "lp_exact_level", is_flag=True, default=None)
@click.option("--resample-epochs", "resample_epochs", type=int, default=None,
              help="emit N independently sampled copies, suffixed .epochK")
@click.option("--config", "config_path", type=click.Path(exists=True))
def build(graph_dir, out_path, splits_file, tasks, splits, seed, workers, budget,
          counter, lp_mix, neg_ratio, max_hop, features, paths, prompt_ids,
          cumulative, lp_exact_level, resample_epochs, config_path):
    """Build the instruction dataset JSONL."""
    settings = _Settings(config_path)
    dataset_config = _dataset_config_from_flags(
        settings, tasks, splits, seed, budget, counter, lp_mix, neg_ratio,
        max_hop, features, paths, prompt_ids, cumulative, lp_exact_level,
    )
    workers = settings.get("workers", workers, 1, int)
    epochs = settings.get("resample_epochs", resample_epochs, 1, int)
    if epochs < 1:
        raise ValidationError(f"resample_epochs must be >= 1, got {epochs}")
    g = load_graph_dir(graph_dir, splits_file)

    def build_one(config: DatasetConfig, out) -> dict[str, int]:
        run = RunConfig(
            dataset=config,
            graph_dir=str(graph_dir),
            splits_file=splits_file,
            out=str(out),
            workers=workers,
        )
        instances = build_dataset(g, config, workers=workers)
        header = run.header(g)
        _atomic_write(out, lambda f: write_dataset(f, instances, header))
        by_task: dict[str, int] = {}
        for inst in instances:
            by_task[inst.task] = by_task.get(inst.task, 0) + 1
        return {"instances": len(instances), "by_task": by_task}

    if epochs == 1:
        report = build_one(dataset_config, out_path)
        _emit(
            {
                "out": str(out_path),
                "config_hash": dataset_config.config_hash(),
                "seed": dataset_config.seed,
                **report,
            }
        )
        return

    base = Path(out_path)
    epoch_reports = []
    for e in range(epochs):
        epoch_config = replace(
            dataset_config, seed=derive_seed(dataset_config.seed, "epoch", e)
        )
        out = base.parent / f"{base.stem}.epoch{e}{base.suffix}"
        report = build_one(epoch_config, out)
        epoch_reports.append(
            {
                "out": str(out),
                "config_hash": epoch_config.config_hash(),
                "seed": epoch_config.seed,
                **report,
            }
        )
    _emit(
        {
            "epochs": epoch_reports,
            "instances": sum(r["instances"] for r in epoch_reports),
            "seed": dataset_config.seed,
        }
    )


@cli.command()
@click.argument("graph_dir", type=click.Path(exists=True))
@click.option("--node", type=int, required=True)
@click.option("--prompt-id", "pid", required=True)
@click.option("--splits-file", type=click.Path(exists=True))
@click.option("--seed", type=int, default=0)
@click.option("--budget", type=int, default=None)
@click.option("--counter", default="whitespace")
@click.option("--hop", type=int, default=None, help="query hop for link prediction")
@click.option("--cumulative-levels", "cumulative", is_flag=True, default=False)
def render(graph_dir, node, pid, splits_file, seed, budget, counter, hop, cumulative):
    """Preview a single rendered instance."""
    from .budget import Envelope, sample_neighborhood
    from .instances import (
        build_lp_generative,
        build_nc_instance,
        lp_gen_query,
        nc_prefix,
        nc_query,
        LP_PREFIX,
    )
    from .seeding import derive_seed

    g = load_graph_dir(graph_dir, splits_file)
    spec = decode_prompt_id(pid)
    tok_counter = parse_counter_spec(counter, limit=budget)
    item_seed = derive_seed(seed, "sample", "preview", node, pid)
    if spec.task is Task.NODE_CLASSIFICATION:
        envelope = Envelope(nc_prefix(g.categories), nc_query(node))
        sample = sample_neighborhood(
            g, node, spec, tok_counter, item_seed, envelope=envelope, cumulative=cumulative
        )
        inst = build_nc_instance(g, node, spec, sample)
    else:
        h = hop if hop is not None else spec.max_hop
        envelope = Envelope(LP_PREFIX, lp_gen_query(node, h))
        sample = sample_neighborhood(
            g, node, spec, tok_counter, item_seed, envelope=envelope, cumulative=cumulative
        )
        inst = build_lp_generative(g, node, h, spec, sample, seed)
    _emit(
        {
            "prompt_id": inst.prompt_id,
            "task": inst.task,
            "input": inst.input,
            "target": inst.target,
            "token_count": sample.token_count,
            "exhaustive": sample.exhaustive,
        }
    )


@cli.command("verify-roundtrip")
@click.argument("graph_dir", type=click.Path(exists=True))
@click.option("--prompt-ids", "pids", default=None, help="defaults to all classification specs")
@click.option("--max-nodes", type=int, default=None)
@click.option("--cumulative-levels", "cumulative", is_flag=True, default=False)
@click.option("--out", "out_path", type=click.Path(), default=None)
def verify_roundtrip_cmd(graph_dir, pids, max_nodes, cumulative, out_path):
    """Render, parse, and compare every node's full neighborhood."""
    from .graph import PathFinder

    g = load_graph_dir(graph_dir)
    if pids:
        specs = [decode_prompt_id(p) for p in _csv_tuple(pids)]
    else:
        specs = enumerate_family([Task.NODE_CLASSIFICATION])
    if cumulative:
        specs = [s for s in specs if not s.include_paths]
    pf = PathFinder(g)
    nodes = range(g.num_nodes if max_nodes is None else min(max_nodes, g.num_nodes))
    failures = []
    total = 0
    for spec in specs:
        for v in nodes:
            total += 1
            report = verify_roundtrip(g, v, spec, cumulative=cumulative, pathfinder=pf)
            if not report.ok:
                failures.append(report.to_dict())
    result = {"total": total, "ok": total - len(failures), "failures": failures}
    if out_path:
        _atomic_write(out_path, lambda f: json.dump(result, f, indent=2, sort_keys=True))
    _emit(result)
    if failures:
        raise ValidationError(f"{len(failures)} of {total} roundtrips failed")


@cli.command()
@click.argument("graph_dir", type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--token-format", default=DEFAULT_TOKEN_FORMAT, show_default=True)
def vocab(graph_dir, out_dir, token_format):
    """Write the node-token manifest and feature-initialized embeddings."""
    g = load_graph_dir(graph_dir)
    manifest = build_vocab_manifest(g, token_format)
    located = write_vocab_manifest(manifest, out_dir)
    _emit(
        {
            "out_dir": str(out_dir),
            "tokens": len(located.tokens),
            "embedding_dim": located.embedding_dim,
            "embedding_file": located.embedding_file,
        }
    )


@cli.command()
@click.argument("graph_dir", type=click.Path(exists=True))
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--splits-file", type=click.Path(exists=True))
@click.option("--split", "eval_split", default="test", show_default=True)
@click.option("--prompt-id", "pid", default=None, help="restrict to one prompt spec")
@click.option("--weights", default=None, help="comma list of per-hop vote weights")
@click.option("--route", type=click.Choice(["text", "graph"]), default="text", show_default=True)
def oracle(graph_dir, dataset_path, splits_file, eval_split, pid, weights, route):
    """Label-propagation oracle over prompts (or the graph, for comparison)."""
    g = load_graph_dir(graph_dir, splits_file)
    cfg = (
        OracleConfig(hop_weights=tuple(float(w) for w in _csv_tuple(weights)))
        if weights
        else OracleConfig()
    )
    _, instances = read_dataset(dataset_path)
    selected = [
        inst
        for inst in instances
        if inst.task == TASK_NC
        and inst.split == eval_split
        and (pid is None or inst.prompt_id == pid)
    ]
    if not selected:
        raise ValidationError("no matching classification instances in the dataset")
    labels = training_labels(g)
    fallback = train_majority(labels, g.categories)
    correct = 0
    for inst in selected:
        gold = list(g.categories).index(inst.target)
        if route == "text":
            parsed = parse_structure(instance_structure(inst, g.categories))
            pred = oracle_classify(parsed, labels, cfg, g.categories, fallback)
        else:
            spec = decode_prompt_id(inst.prompt_id)
            pred = oracle_classify_graph(
                g, inst.center, cfg, max_hop=spec.max_hop,
                train_labels=labels, fallback=fallback,
            )
        if pred == gold:
            correct += 1
    _emit(
        {
            "route": route,
            "split": eval_split,
            "n": len(selected),
            "accuracy": correct / len(selected),
        }
    )


@cli.command("eval")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--predictions", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--split", "eval_split", default="test", show_default=True)
def eval_cmd(dataset_path, pred_path, eval_split):
    """Score a predictions file against dataset gold targets."""
    header, instances = read_dataset(dataset_path)
    gold_instances = [
        i for i in instances if i.task == TASK_NC and i.split == eval_split
    ]
    if not gold_instances:
        raise ValidationError(f"no classification instances in split {eval_split!r}")
    if header and "categories" in header:
        categories = list(header["categories"])
    else:
        categories = sorted({i.target for i in gold_instances})
    gold = {}
    for inst in gold_instances:
        cid = categories.index(inst.target)
        if gold.setdefault(inst.center, cid) != cid:
            raise ValidationError(f"conflicting gold labels for center {inst.center}")
    records = match_predictions(read_predictions(pred_path), categories)
    _emit(accuracy(records, gold))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except ValidationError as e:
        click.echo(f"error: {e}", err=True)
        return 1
    except OSError as e:
        click.echo(f"i/o error: {e}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
