"""Predicate selection, tree construction, convergence driver, persistence."""

import pytest

from parseforge.errors import ConvergenceError, InterpretError
from parseforge.formats import (BmpSpec, FwcSpec, WavSpec, build_file,
                                oracle_parse, traced_parse)
from parseforge.store import dump_tree, load_tree
from parseforge.tree import (Leaf, Node, Predicate, build_tree,
                             expand_logs_until_converged, export_dot,
                             pick_a_hew, route, run_tree, tree_predicates)
from parseforge.tree import test_parser as check_parser

HEADER_SIZES = [64, 128]


def make_corpus(named_specs, seed=200):
    corpus = []
    for i, (name, spec) in enumerate(named_specs):
        corpus.append((name, build_file(spec, seed + i)))
    return corpus


def tracer(fid, data):
    return traced_parse(data, fid)[1]


MIXED = make_corpus([
    ("wav8-a", WavSpec(1, 8, 30)), ("wav8-b", WavSpec(1, 8, 35)),
    ("wav16-a", WavSpec(2, 16, 25)), ("wav16-b", WavSpec(2, 16, 30)),
    ("bmp24-a", BmpSpec("V3", 24, False, width=61, height=47)),
    ("bmp24-b", BmpSpec("V3", 24, False, width=63, height=48)),
    ("fwc-a", FwcSpec(40, 24)), ("fwc-b", FwcSpec(48, 28)),
])


def test_predicate_fails_short_files():
    p = Predicate(10, 0)
    assert not p.matches(b"\x00" * 10)
    assert p.matches(b"\x00" * 11)


def test_pick_a_hew_finds_separating_byte():
    good = [b"RIFF" + bytes([i]) for i in range(4)]
    bad = [b"RIFX" + bytes([i]) for i in range(4)]
    p = pick_a_hew(good, bad, header_size=8)
    assert (p.index, p.value) == (3, ord("F"))


def test_pick_a_hew_ties_break_to_lowest_index():
    good = [b"AB"]
    bad = [b"CD"]
    p = pick_a_hew(good, bad, header_size=8)
    assert (p.index, p.value) == (0, ord("A"))


def test_single_type_corpus_is_one_leaf():
    corpus = MIXED[:2]
    logs = {fid: tracer(fid, d) for fid, d in corpus}
    tree = build_tree(corpus, logs, oracle_parse, header_size=64)
    assert isinstance(tree, Leaf)
    assert tree.note == "2 files"


def test_unlogged_region_becomes_reject_leaf():
    corpus = MIXED[:4]                       # wav8 + wav16
    logs = {fid: tracer(fid, d) for fid, d in corpus[:2]}   # wav8 only
    tree = build_tree(corpus, logs, oracle_parse, header_size=64)
    assert isinstance(tree, Node)
    report = check_parser(tree, corpus, oracle_parse)
    kinds = {fid: v[0] for fid, v in report.verdicts.items()}
    assert kinds["wav8-a"] == kinds["wav8-b"] == "parsed-exact"
    assert "no-parser" in kinds.values()
    with pytest.raises(InterpretError, match="no-parser"):
        run_tree(tree, dict(corpus)["wav16-a"])


def test_convergence_on_mixed_corpus():
    conv = expand_logs_until_converged(MIXED, oracle_parse, tracer,
                                       header_sizes=HEADER_SIZES)
    report = check_parser(conv.tree, MIXED, oracle_parse)
    assert not report.unparseable
    assert len(tree_predicates(conv.tree)) >= 3
    assert conv.rounds[-1].unparseable == 0
    # traced bytes only ever grow
    traced = [r.traced_bytes for r in conv.rounds]
    assert traced == sorted(traced)


def test_strategies_differ_in_traced_bytes():
    smallest = expand_logs_until_converged(
        MIXED, oracle_parse, tracer, batch=1, strategy="smallest",
        header_sizes=HEADER_SIZES)
    largest = expand_logs_until_converged(
        MIXED, oracle_parse, tracer, batch=1, strategy="largest",
        header_sizes=HEADER_SIZES)
    assert smallest.rounds[0].traced_bytes < largest.rounds[0].traced_bytes


def test_random_strategy_is_seeded():
    a = expand_logs_until_converged(MIXED, oracle_parse, tracer, batch=2,
                                    strategy="random", seed=5,
                                    header_sizes=HEADER_SIZES)
    b = expand_logs_until_converged(MIXED, oracle_parse, tracer, batch=2,
                                    strategy="random", seed=5,
                                    header_sizes=HEADER_SIZES)
    assert [r.new_logs for r in a.rounds] == [r.new_logs for r in b.rounds]


def test_empty_corpus_rejected():
    with pytest.raises(ConvergenceError):
        expand_logs_until_converged([], oracle_parse, tracer)


def test_unknown_strategy_rejected():
    with pytest.raises(ValueError):
        expand_logs_until_converged(MIXED, oracle_parse, tracer,
                                    strategy="sideways",
                                    header_sizes=HEADER_SIZES)


def test_tree_round_trips_through_json():
    conv = expand_logs_until_converged(MIXED, oracle_parse, tracer,
                                       header_sizes=HEADER_SIZES)
    text = dump_tree(conv.tree)
    again = load_tree(text)
    assert dump_tree(again) == text
    for fid, data in MIXED:
        assert run_tree(again, data) == run_tree(conv.tree, data)
    assert tree_predicates(again) == tree_predicates(conv.tree)


def test_route_follows_predicates():
    leaf_a, leaf_b = Leaf(None, "a"), Leaf(None, "b")
    tree = Node(Predicate(0, ord("R")), leaf_a, leaf_b)
    assert route(tree, b"RIFF") is leaf_a
    assert route(tree, b"BM..") is leaf_b


def test_export_dot_is_deterministic_and_marks_rejects():
    tree = Node(Predicate(0, 66), Leaf(None), Leaf(None, "x"))
    dot = export_dot(tree)
    assert dot == export_dot(tree)
    assert "in[0] == 66" in dot
    assert "reject" in dot and "dashed" in dot
