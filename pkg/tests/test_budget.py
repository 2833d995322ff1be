"""Token counting and budgeted neighborhood sampling."""

from __future__ import annotations

import math

import pytest

from graphtext import (
    Envelope,
    Graph,
    PathFinder,
    PromptSpec,
    Task,
    TokenCounter,
    ValidationError,
    count_tokens,
    enumerate_family,
    exhaustive_sample,
    khop_neighbors,
    load_token_table,
    parse_counter_spec,
    render_structure,
    sample_neighborhood,
)

from conftest import golden_graph, random_graph, star_graph

NC = Task.NODE_CLASSIFICATION
ALL_SPECS = enumerate_family([NC])


# ---------------------------------------------------------------------------
# counters


def test_whitespace_counter():
    c = TokenCounter("whitespace")
    assert c.count("a b  c") == 3
    assert c.count("") == 0
    assert c.count("   ") == 0
    assert c.count("one") == 1


def test_chars_per_token_counter():
    c = TokenCounter("chars_per_token", ratio=4.0)
    assert c.count("x" * 100) == 25
    assert c.count("x" * 101) == 26
    assert c.count("abc") == 1
    assert c.count("") == 0
    c = TokenCounter("chars_per_token", ratio=2.5)
    assert c.count("abcdef") == math.ceil(6 / 2.5)


def test_external_table_counter_greedy_longest_match():
    c = TokenCounter("external_table", table=["ab", "abc", "c"])
    assert c.count("abcc") == 2  # "abc" + "c"
    assert c.count("abc") == 1
    assert c.count("ababc") == 2  # "ab" + "abc"
    assert c.count("xabc") == 2  # unmatched "x" charges one token
    assert c.count("") == 0


def test_counter_validation():
    with pytest.raises(ValidationError):
        TokenCounter("subword")
    with pytest.raises(ValidationError):
        TokenCounter("whitespace", limit=-1)
    with pytest.raises(ValidationError):
        TokenCounter("chars_per_token", ratio=0)
    with pytest.raises(ValidationError):
        TokenCounter("external_table", table=[])
    with pytest.raises(ValidationError):
        TokenCounter("external_table", table=["", ""])


def test_with_limit_clones():
    c = TokenCounter("chars_per_token", ratio=3.0)
    limited = c.with_limit(128)
    assert limited.limit == 128 and c.limit is None
    assert limited.ratio == 3.0
    assert limited.count("abcdef") == c.count("abcdef")


def test_describe_round_trips_through_spec():
    assert TokenCounter("whitespace").describe() == "whitespace"
    assert TokenCounter("chars_per_token", ratio=3.5).describe() == "chars:3.5"
    for spec in ("whitespace", "chars:3.5"):
        assert parse_counter_spec(spec).describe() == spec


def test_parse_counter_spec_table(tmp_path):
    table_file = tmp_path / "vocab.txt"
    table_file.write_text("ab\nabc\n\nc\n", encoding="utf-8")
    assert load_token_table(table_file) == ("ab", "abc", "c")
    c = parse_counter_spec(f"table:{table_file}", limit=16)
    assert c.count("abcc") == 2
    assert c.limit == 16
    assert c.describe() == f"table:{table_file}"


def test_parse_counter_spec_errors(tmp_path):
    with pytest.raises(ValidationError):
        parse_counter_spec("bogus")
    with pytest.raises(ValidationError):
        parse_counter_spec("chars:fast")
    with pytest.raises(OSError):
        parse_counter_spec(f"table:{tmp_path / 'missing.txt'}")


def test_count_tokens_helper():
    assert count_tokens("a b", TokenCounter("whitespace")) == 2


def test_envelope_wrap():
    env = Envelope(prefix="Do the task.", query="What now?")
    assert env.wrap("STRUCT") == "Do the task. STRUCT What now?"
    assert Envelope().wrap("STRUCT") == "STRUCT"
    assert Envelope(prefix="P").wrap("S") == "P S"


# ---------------------------------------------------------------------------
# sampling

SPEC_H1 = PromptSpec(NC, use_features=False, max_hop=1, include_paths=False)
SPEC_H2P = PromptSpec(NC, use_features=False, max_hop=2, include_paths=True)
SPEC_H3P = PromptSpec(NC, use_features=True, max_hop=3, include_paths=True)


def test_star_graph_takes_largest_fitting_prefix():
    # every hop-1 neighbor adds exactly one whitespace token, so the greedy
    # result size has a closed form: limit - framing tokens
    g = star_graph(40)
    counter = TokenCounter("whitespace", limit=30)
    sample = sample_neighborhood(g, 0, SPEC_H1, counter, 9)
    assert len(sample.chosen[0]) == 30 - 7
    assert sample.token_count == 30
    assert not sample.exhaustive
    text = render_structure(g, sample, SPEC_H1).text
    assert counter.count(text) == 30


def test_star_graph_exhaustive_when_budget_allows():
    g = star_graph(40)
    counter = TokenCounter("whitespace", limit=47)
    sample = sample_neighborhood(g, 0, SPEC_H1, counter, 9)
    assert sample.chosen[0] == tuple(range(1, 41))
    assert sample.exhaustive
    assert sample.token_count == 47


def test_budget_equals_empty_render():
    g = Graph.build(3, [(1, 2)])  # node 0 isolated
    counter = TokenCounter("whitespace", limit=10)
    sample = sample_neighborhood(g, 0, SPEC_H1, counter, 0)
    assert sample.chosen == ((),)
    assert sample.token_count == 10  # "<node_0> is connected with no other nodes within one hop."


def test_budget_below_empty_render_errors():
    g = Graph.build(3, [(1, 2)])
    counter = TokenCounter("whitespace", limit=9)
    with pytest.raises(ValidationError):
        sample_neighborhood(g, 0, SPEC_H1, counter, 0)


def test_unlimited_counter_is_exhaustive():
    g = random_graph(25, avg_degree=4.0, seed=10)
    counter = TokenCounter("whitespace")  # no limit
    for spec in (SPEC_H1, SPEC_H2P):
        budgeted = sample_neighborhood(g, 3, spec, counter, 1, pathfinder=PathFinder(g))
        full = exhaustive_sample(g, 3, spec, counter, pathfinder=PathFinder(g))
        assert budgeted == full
        assert budgeted.exhaustive


def test_envelope_tokens_count_against_budget():
    g = star_graph(40)
    env = Envelope(prefix="Answer the question.", query="Well?")
    counter = TokenCounter("whitespace", limit=30)
    bare = sample_neighborhood(g, 0, SPEC_H1, counter, 9)
    framed = sample_neighborhood(g, 0, SPEC_H1, counter, 9, envelope=env)
    assert len(framed.chosen[0]) == len(bare.chosen[0]) - 4
    assert framed.token_count == 30


def test_sample_properties_random_graphs():
    for seed in range(8):
        g = random_graph(30, avg_degree=4.0, seed=500 + seed, with_texts=True)
        pf = PathFinder(g)
        counter = TokenCounter("whitespace", limit=45)
        for spec in ALL_SPECS:
            for v in range(0, g.num_nodes, 4):
                sample = sample_neighborhood(g, v, spec, counter, seed, pathfinder=pf)
                text = render_structure(g, sample, spec).text
                # recount never exceeds the budget and matches the recorded count
                assert counter.count(text) == sample.token_count <= 45
                truth = khop_neighbors(g, v, spec.max_hop)
                for k, lvl in enumerate(sample.chosen, start=1):
                    assert len(set(lvl)) == len(lvl)
                    assert set(lvl) <= set(truth.levels[k - 1])
                    assert tuple(sorted(lvl)) == lvl
                # determinism: same inputs, same sample
                again = sample_neighborhood(g, v, spec, counter, seed, pathfinder=pf)
                assert again == sample


def test_sample_seed_changes_selection_under_pressure():
    g = star_graph(40)
    counter = TokenCounter("whitespace", limit=20)
    first = sample_neighborhood(g, 0, SPEC_H1, counter, 1)
    second = sample_neighborhood(g, 0, SPEC_H1, counter, 2)
    assert len(first.chosen[0]) == len(second.chosen[0]) == 13
    assert first.chosen != second.chosen


def test_chars_counter_budget_respected():
    g = random_graph(30, avg_degree=5.0, seed=60, with_texts=True)
    counter = TokenCounter("chars_per_token", ratio=4.0, limit=64)
    pf = PathFinder(g)
    for v in range(0, 30, 5):
        sample = sample_neighborhood(g, v, SPEC_H3P, counter, 7, pathfinder=pf)
        text = render_structure(g, sample, SPEC_H3P).text
        assert counter.count(text) <= 64


def test_exclude_and_forbidden_filtering():
    g = Graph.build(3, [(0, 1), (1, 2)])
    sample = exhaustive_sample(g, 0, SPEC_H2P, exclude=frozenset({2}))
    assert sample.chosen == ((1,), ())
    # node 2's only path runs through node 1; forbidding 1 removes node 2
    sample = exhaustive_sample(g, 0, SPEC_H2P, forbidden=frozenset({1}))
    assert sample.chosen == ((1,), ())
    plain = PromptSpec(NC, use_features=False, max_hop=2, include_paths=False)
    sample = exhaustive_sample(g, 0, plain, forbidden=frozenset({1}))
    assert sample.chosen == ((1,), (2,))  # without paths, forbidden is inert


def test_neighborhood_depth_mismatch():
    g = Graph.build(3, [(0, 1), (1, 2)])
    nb = khop_neighbors(g, 0, 3)
    with pytest.raises(ValidationError):
        exhaustive_sample(g, 0, SPEC_H2P, neighborhood=nb)


def test_without_drops_nodes_and_their_paths():
    g = golden_graph()
    spec = PromptSpec(NC, use_features=True, max_hop=3, include_paths=True)
    sample = exhaustive_sample(g, 0, spec, pathfinder=PathFinder(g))
    assert sample.chosen == ((1, 2), (3, 4), (5, 6))
    pruned = sample.without({3})
    assert pruned.chosen == ((1, 2), (4,), (6,))
    assert pruned.chosen_paths == ((), ((0, 2, 4),), ((0, 2, 4, 6),))
    assert not pruned.exhaustive
    untouched = sample.without({99})
    assert untouched is sample
    assert untouched.exhaustive


def test_without_on_pathless_sample():
    g = golden_graph()
    spec = PromptSpec(NC, use_features=False, max_hop=2, include_paths=False)
    sample = exhaustive_sample(g, 0, spec)
    pruned = sample.without({1})
    assert pruned.chosen == ((2,), (3, 4))
    assert pruned.chosen_paths is None
