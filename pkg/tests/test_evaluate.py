"""Answer normalization, accuracy scoring, and the structure oracle."""

from __future__ import annotations

import pytest

from graphtext import (
    Graph,
    OracleConfig,
    PredictionRecord,
    ValidationError,
    accuracy,
    khop_neighbors,
    match_predictions,
    normalize_answer,
    oracle_classify,
    oracle_classify_graph,
    parse_structure,
    read_predictions,
    train_majority,
    training_labels,
    weighted_vote,
    write_predictions,
)

from conftest import random_graph

CATS = ["Diabetes Mellitus Type 1", "Diabetes Mellitus Type 2", "Diabetes Mellitus Experimental"]


# ---------------------------------------------------------------------------
# normalization


def test_normalize_exact_with_noise():
    assert normalize_answer(" diabetes mellitus type 2.\n", CATS) == 1
    assert normalize_answer("DIABETES MELLITUS TYPE 1", CATS) == 0
    assert normalize_answer('"Diabetes Mellitus Experimental;"', CATS) == 2


def test_normalize_containment_unique_only():
    # generation contains exactly one category
    assert normalize_answer("It is Diabetes Mellitus Experimental, I think", CATS) == 2
    # "type 2" generation is contained in two categories? it is a substring
    # of neither; a bare prefix shared by all three matches nothing
    assert normalize_answer("Diabetes Mellitus", CATS) is None
    assert normalize_answer("no idea", CATS) is None


def test_normalize_generation_inside_category():
    cats = ["Neural Networks", "Rule Learning"]
    assert normalize_answer("neural networks!", cats) == 0
    assert normalize_answer("Networks", cats) == 0  # substring of one category only


def test_normalize_empty_and_idempotent():
    assert normalize_answer("", CATS) is None
    assert normalize_answer("  .,;  ", CATS) is None
    for text in ("diabetes mellitus type 2.", "x", CATS[0]):
        once = normalize_answer(text, CATS)
        again = normalize_answer(text, CATS)
        assert once == again


def test_normalize_requires_categories():
    with pytest.raises(ValidationError):
        normalize_answer("anything", [])


# ---------------------------------------------------------------------------
# accuracy


def _recs(pairs):
    return [PredictionRecord(center=c, generation=g) for c, g in pairs]


def test_accuracy_perfect():
    preds = match_predictions(_recs([(0, CATS[0]), (1, CATS[1])]), CATS)
    result = accuracy(preds, {0: 0, 1: 1})
    assert result == {"accuracy": 1.0, "n": 2, "unmatched_count": 0}


def test_accuracy_half_and_unmatched():
    preds = match_predictions(
        _recs([(0, CATS[0]), (1, CATS[0]), (2, "???"), (3, CATS[2])]), CATS
    )
    result = accuracy(preds, {0: 0, 1: 1, 2: 2, 3: 2})
    assert result["accuracy"] == 0.5
    assert result["n"] == 4
    assert result["unmatched_count"] == 1


def test_accuracy_permutation_invariant():
    preds = match_predictions(_recs([(0, CATS[0]), (1, CATS[1]), (2, CATS[2])]), CATS)
    gold = {0: 0, 1: 1, 2: 0}
    assert accuracy(preds, gold) == accuracy(list(reversed(preds)), gold)


def test_accuracy_unknown_center():
    preds = match_predictions(_recs([(7, CATS[0])]), CATS)
    with pytest.raises(ValidationError):
        accuracy(preds, {0: 0})


def test_accuracy_missing_gold_coverage():
    preds = match_predictions(_recs([(0, CATS[0])]), CATS)
    with pytest.raises(ValidationError):
        accuracy(preds, {0: 0, 1: 1})


# ---------------------------------------------------------------------------
# oracle votes


def test_train_majority_and_ties():
    assert train_majority({1: 0, 2: 0, 3: 1}, ["A", "B"]) == 0
    # tie on counts: lexicographically first category name wins
    assert train_majority({1: 1, 2: 0}, ["Zeta", "Alpha"]) == 1
    assert train_majority({1: 1, 2: 0}, ["Alpha", "Zeta"]) == 0
    with pytest.raises(ValidationError):
        train_majority({}, ["A"])


def test_weighted_vote_prefers_near_neighbors():
    cfg = OracleConfig()
    train = {1: 0, 2: 1, 3: 1}
    # hop1 node votes A with 1.0; two hop2 nodes vote B with 0.5 each -> tie;
    # tie breaks to the label seen at the lowest hop
    assert weighted_vote([(1,), (2, 3)], train, cfg, ["A", "B"]) == 0
    # a third hop2 voter pushes B past A
    train[4] = 1
    assert weighted_vote([(1,), (2, 3, 4)], train, cfg, ["A", "B"]) == 1


def test_weighted_vote_ignores_unlabeled():
    cfg = OracleConfig()
    assert weighted_vote([(9, 10)], {10: 1}, cfg, ["A", "B"]) == 1
    assert weighted_vote([(9,)], {10: 1}, cfg, ["A", "B"]) is None
    assert weighted_vote([()], {10: 1}, cfg, ["A", "B"]) is None


def test_weighted_vote_same_hop_tie_uses_names():
    cfg = OracleConfig()
    train = {1: 0, 2: 1}
    assert weighted_vote([(1, 2)], train, cfg, ["Beta", "Alpha"]) == 1
    assert weighted_vote([(1, 2)], train, cfg, ["Alpha", "Beta"]) == 0


def test_weighted_vote_custom_weights():
    cfg = OracleConfig(hop_weights=(0.1, 10.0))
    train = {1: 0, 2: 1}
    assert weighted_vote([(1,), (2,)], train, cfg, ["A", "B"]) == 1


def test_weighted_vote_level_count_guard():
    cfg = OracleConfig(hop_weights=(1.0,))
    with pytest.raises(ValidationError):
        weighted_vote([(1,), (2,)], {1: 0}, cfg, ["A"])


def test_oracle_config_validation():
    with pytest.raises(ValidationError):
        OracleConfig(hop_weights=())
    with pytest.raises(ValidationError):
        OracleConfig(hop_weights=(1.0, -0.5))
    with pytest.raises(ValidationError):
        OracleConfig(tie_break="random")


def test_oracle_fallback_when_no_votes():
    cfg = OracleConfig()
    parsed = parse_structure("<node_0> is connected with no other nodes within one hop.")
    train = {5: 1, 6: 1, 7: 0}
    assert oracle_classify(parsed, train, cfg, ["A", "B"]) == 1
    assert oracle_classify(parsed, train, cfg, ["A", "B"], fallback=0) == 0


def test_training_labels_filters_split():
    g = Graph.build(
        4,
        [(0, 1), (1, 2), (2, 3)],
        labels=[0, 1, None, 1],
        categories=["A", "B"],
        split=["train", "test", "train", "train"],
    )
    assert training_labels(g) == {0: 0, 3: 1}
    with pytest.raises(ValidationError):
        training_labels(Graph.build(2, [(0, 1)]))


def test_text_route_equals_graph_route():
    cfg = OracleConfig()
    for seed in range(6):
        g = random_graph(40, avg_degree=4.0, seed=1000 + seed, num_labels=3, isolated_ok=False)
        split = ["train" if v % 3 else "test" for v in range(40)]
        g = Graph.build(40, g.edges(), labels=g.labels, categories=g.categories, split=split)
        train = training_labels(g)
        from graphtext import PromptSpec, Task, exhaustive_sample, render_structure

        spec = PromptSpec(Task.NODE_CLASSIFICATION, use_features=False, max_hop=3, include_paths=False)
        for v in range(g.num_nodes):
            text = render_structure(g, exhaustive_sample(g, v, spec), spec).text
            via_text = oracle_classify(parse_structure(text), train, cfg, g.categories)
            via_graph = oracle_classify_graph(g, v, cfg, max_hop=3, train_labels=train)
            assert via_text == via_graph, (seed, v)


# ---------------------------------------------------------------------------
# predictions I/O


def test_predictions_roundtrip(tmp_path):
    path = tmp_path / "preds.jsonl"
    records = [
        PredictionRecord(center=0, generation="Diabetes Mellitus Type 2."),
        PredictionRecord(center=1, generation="unicode café"),
    ]
    write_predictions(path, records)
    loaded = read_predictions(path)
    assert [(r.center, r.generation) for r in loaded] == [
        (0, "Diabetes Mellitus Type 2."),
        (1, "unicode café"),
    ]
    matched = match_predictions(loaded, CATS)
    assert matched[0].matched_label == 1
    assert matched[1].matched_label is None


@pytest.mark.parametrize(
    "line, message",
    [
        ("not json at all", "invalid JSON"),
        ("[1, 2]", "expected an object"),
        ('{"center": 0}', "missing key 'generation'"),
        ('{"generation": "x"}', "missing key 'center'"),
        ('{"center": "0", "generation": "x"}', "center must be an integer"),
        ('{"center": true, "generation": "x"}', "center must be an integer"),
        ('{"center": 0, "generation": 7}', "generation must be a string"),
    ],
)
def test_read_predictions_rejects_malformed_lines(tmp_path, line, message):
    path = tmp_path / "preds.jsonl"
    path.write_text('{"center": 0, "generation": "ok"}\n' + line + "\n", encoding="utf-8")
    with pytest.raises(ValidationError, match=message) as exc:
        read_predictions(path)
    assert ":2:" in str(exc.value)
