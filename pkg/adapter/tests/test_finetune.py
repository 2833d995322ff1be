"""End-to-end acceptance: fine-tune on a low-label dataset and beat majority.

The graphtext pipeline is driven purely through its command line — this
package never imports it — and the resulting predictions are scored by
the same command line, proving the file contracts line up end to end.
"""

from __future__ import annotations

import functools
import json
import subprocess
import sys
from collections import Counter

import pytest

from graphtext_adapter import AdapterConfig, finetune, initialize, predict, read_dataset

from toygraph import CATEGORIES, FEATURE_DIM, write_raw_tables

EPOCHS = 4
BUDGET = 160


def run_graphtext(*args) -> dict:
    proc = subprocess.run(
        [sys.executable, "-m", "graphtext", *map(str, args)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, f"graphtext {args[0]} failed:\n{proc.stderr or proc.stdout}"
    return json.loads(proc.stdout)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Raw tables -> graph -> 20-per-class split -> train/eval JSONL -> manifest."""
    root = tmp_path_factory.mktemp("toy")
    raw = root / "raw"
    write_raw_tables(raw, n=300, seed=0)

    graph_dir = root / "graph"
    run_graphtext(
        "ingest",
        "--nodes", raw / "nodes.csv",
        "--edges", raw / "edges.csv",
        "--features", raw / "features.csv",
        "--categories", raw / "categories.txt",
        graph_dir,
    )
    splits_file = root / "splits.csv"
    split_report = run_graphtext(
        "split", graph_dir, "--policy", "per-class:20,40,100", "--seed", 5,
        "--out", splits_file,
    )
    assert split_report["counts"]["train"] == 60

    train_path = root / "train.jsonl"
    run_graphtext(
        "build", graph_dir, "--splits-file", splits_file, "--out", train_path,
        "--tasks", "nc", "--splits", "train", "--seed", 11, "--budget", BUDGET,
    )
    eval_path = root / "eval.jsonl"
    run_graphtext(
        "build", graph_dir, "--splits-file", splits_file, "--out", eval_path,
        "--tasks", "nc", "--splits", "test", "--prompt-ids", "1131",
        "--seed", 11, "--budget", BUDGET,
    )
    vocab_dir = root / "vocab"
    vocab_report = run_graphtext("vocab", graph_dir, "--out-dir", vocab_dir)
    assert vocab_report["tokens"] == 300
    assert vocab_report["embedding_dim"] == FEATURE_DIM

    return {
        "root": root,
        "train": train_path,
        "eval": eval_path,
        "vocab": vocab_dir,
        "config": AdapterConfig(
            train_dataset=str(train_path),
            manifest_dir=str(vocab_dir),
            eval_dataset=str(eval_path),
            epochs=EPOCHS,
            batch_size=16,
            learning_rate=3e-3,
            max_input_tokens=BUDGET + 48,
            seed=1,
        ),
    }


def eval_majority_baseline(eval_path) -> float:
    """Accuracy of always answering the most common gold category."""
    _, records = read_dataset(eval_path)
    gold = {r.center: r.target for r in records}
    counts = Counter(gold.values())
    return max(counts.values()) / len(gold)


def score_with_graphtext(eval_path, predictions_path) -> dict:
    return run_graphtext(
        "eval", "--dataset", eval_path, "--predictions", predictions_path,
        "--split", "test",
    )


def criterion(name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(capsys, *args, **kwargs):
            try:
                detail = fn(capsys, *args, **kwargs)
            except BaseException as e:
                with capsys.disabled():
                    print(f"\n[FAIL] {name}: {e}")
                raise
            with capsys.disabled():
                print(f"\n[PASS] {name}" + (f" ({detail})" if detail else ""))

        return wrapper

    return deco


def test_training_set_is_low_label_sixty_nodes(pipeline):
    _, records = read_dataset(pipeline["train"])
    centers = {r.center for r in records}
    assert len(centers) == 60
    assert len(records) == 600  # ten prompt variants per training node
    per_class = Counter(r.target for r in records if r.prompt_id == "1131")
    assert per_class == Counter({c: 20 for c in CATEGORIES})


@criterion("toy fine-tune: test accuracy beats majority baseline; loss falls over 4 epochs")
def test_acceptance_toy_finetune(capsys, pipeline, tmp_path):
    config = pipeline["config"]
    checkpoint = finetune(config)
    assert len(checkpoint.history) == EPOCHS
    assert checkpoint.history[-1] < checkpoint.history[0], (
        f"loss did not fall: {checkpoint.history}"
    )

    predictions = tmp_path / "predictions.jsonl"
    records = predict(checkpoint, pipeline["eval"], predictions)
    _, eval_records = read_dataset(pipeline["eval"])
    assert len(records) == len(eval_records)

    result = score_with_graphtext(pipeline["eval"], predictions)
    baseline = eval_majority_baseline(pipeline["eval"])
    assert result["n"] == len({r.center for r in eval_records})
    assert result["accuracy"] > baseline, (
        f"accuracy {result['accuracy']:.3f} does not beat majority {baseline:.3f}"
    )
    return (
        f"accuracy {result['accuracy']:.3f} > majority {baseline:.3f} on {result['n']} "
        f"test nodes; nll {checkpoint.history[0]:.3f} -> {checkpoint.history[-1]:.3f}"
    )


def test_untrained_model_scores_at_or_below_trained(pipeline, tmp_path):
    config = pipeline["config"]
    untrained_preds = tmp_path / "untrained.jsonl"
    predict(initialize(config), pipeline["eval"], untrained_preds)
    untrained = score_with_graphtext(pipeline["eval"], untrained_preds)

    trained_preds = tmp_path / "trained.jsonl"
    predict(finetune(config), pipeline["eval"], trained_preds)
    trained = score_with_graphtext(pipeline["eval"], trained_preds)
    assert untrained["accuracy"] <= trained["accuracy"]
    assert trained["unmatched_count"] < trained["n"]


def test_predictions_file_aligns_with_scorer_without_modification(pipeline, tmp_path):
    predictions = tmp_path / "predictions.jsonl"
    predict(initialize(pipeline["config"]), pipeline["eval"], predictions)
    result = score_with_graphtext(pipeline["eval"], predictions)
    assert set(result) == {"accuracy", "n", "unmatched_count"}
    assert result["n"] == 100
