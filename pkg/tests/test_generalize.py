"""Constant rewriting, voting, and header binding."""

import pytest
from hypothesis import given, settings, strategies as st

from parseforge.formats import BmpSpec, FwcSpec, WavSpec, build_file, traced_parse
from parseforge.generalize import (VoteCapExceeded, consistent_assignment,
                                   enumerate_rewrites, estimate_header_size,
                                   generalize, keep_key, vote_cartesian)
from parseforge.interp import interpret
from parseforge.ir import eval_sym
from parseforge.summarize import choose_stride, summarize


def summarize_file(spec, seed=17):
    data = build_file(spec, seed)
    _, log = traced_parse(data, "t")
    return summarize(log, choose_stride(log)), data


def test_header_size_schedule_doubles():
    assert estimate_header_size() == [32, 64, 128, 256, 512, 1024]
    assert estimate_header_size(64, 200) == [64, 128]


# --- rewriting templates ---


def test_enumerate_rewrites_finds_products_and_padding():
    scope = [("W", 5), ("H", 4)]
    found = enumerate_rewrites(20, scope)
    assert "W * H" in found
    found = enumerate_rewrites(-20, scope)
    assert "-(W * H)" in found
    # 5 * 3 = 15 pads to 16
    found = enumerate_rewrites(16, [("W", 5), ("H", 3)])
    assert "pad4(W * H)" in found
    found = enumerate_rewrites(-4, [("N", 5)])
    assert "-N + 1" in found


def test_enumerate_rewrites_skips_degenerate_symbols():
    # 0 and +-1 valued symbols match almost anything; they are excluded
    assert enumerate_rewrites(1, [("Z", 0), ("U", 1), ("M", -1)]) == {}
    found = enumerate_rewrites(6, [("U", 1), ("W", 6)])
    assert all("U" not in k for k in found)


@given(st.lists(st.tuples(st.sampled_from("ABCDE"), st.integers(-12, 12)),
                max_size=4, unique_by=lambda t: t[0]),
       st.integers(-200, 200))
def test_rewrites_are_sound(scope, value):
    env = dict(scope)
    for key, expr in enumerate_rewrites(value, scope).items():
        assert eval_sym(expr, env) == value, key


# --- voting ---


def test_vote_cartesian_majority_wins():
    fc = [{"x": ["a", "b"]}, {"x": ["a"]}, {"x": ["b"]}]
    ca = vote_cartesian(fc, ["x"])
    assert ca.assignments == {"x": "a"}      # 2 votes each; lexicographic tie
    assert ca.votes == 2
    assert ca.supporting == [0, 1]


def test_vote_cartesian_prefers_generalizing_over_keeping():
    keep = keep_key(7)
    fc = [{"x": ["W * H", keep]}, {"x": ["W * H", keep]}]
    ca = vote_cartesian(fc, ["x"])
    assert ca.assignments == {"x": "W * H"}


def test_vote_cartesian_joint_consistency():
    # jointly, only (a2, b1) is consistent with both files
    fc = [{"x": ["a1", "a2"], "y": ["b1"]},
          {"x": ["a2"], "y": ["b1", "b2"]}]
    ca = vote_cartesian(fc, ["x", "y"])
    assert ca.assignments == {"x": "a2", "y": "b1"}
    assert ca.supporting == [0, 1]


def test_vote_cartesian_cap():
    fc = [{"x": [str(i) for i in range(2000)],
           "y": [str(i) for i in range(2000)]}]
    with pytest.raises(VoteCapExceeded):
        vote_cartesian(fc, ["x", "y"], cap=10 ** 6)


# --- consistent assignment variants ---


@st.composite
def assignment_instances(draw):
    nf = draw(st.integers(1, 5))
    nv = draw(st.integers(1, 4))
    ne = draw(st.integers(1, 5))
    F = list(range(nf))
    V = [f"v{i}" for i in range(nv)]
    E = [(v, f"e{j}") for v in V for j in range(ne)]
    W: dict = {}
    weight = 0
    for v in V:
        for e in (e for e in E if e[0] == v):
            for f in F:
                if draw(st.booleans()):
                    W.setdefault(v, {}).setdefault(e, {})[f] = 1
                    weight += 1
    # a weightless instance is degenerate: nothing constrains the files
    if weight == 0:
        W.setdefault(V[0], {})[(V[0], "e0")] = {F[0]: 1}
    return F, V, E, W


@settings(max_examples=200)
@given(assignment_instances())
def test_optimized_variant_matches_conceptual(instance):
    F, V, E, W = instance
    a = consistent_assignment("conceptual", F, V, E, W)
    b = consistent_assignment("optimized", F, V, E, W)
    assert a.assignments == b.assignments
    assert a.compatible_files == b.compatible_files


@settings(max_examples=200)
@given(assignment_instances())
def test_prune_count_is_linear(instance):
    F, V, E, W = instance
    res = consistent_assignment("optimized", F, V, E, W)
    assert res.prune_count <= (len(V) + len(F)) * len(E)


@given(assignment_instances())
def test_simplest_variant_covers_its_exemplar(instance):
    F, V, E, W = instance
    res = consistent_assignment("simplest", F, V, E, W)
    for v, e in res.assignments:
        assert W.get(v, {}).get(e, {}).get(F[0], 0) == 1 or not any(
            W.get(v, {}).get(e2, {}).get(F[0], 0) for e2 in E if e2[0] == v)


# --- end-to-end generalization ---


def test_bmp_binds_width_and_height_fields():
    progs, datas = zip(*[summarize_file(
        BmpSpec("V3", 24, False, width=w, height=h), seed=40 + w)
        for w, h in [(61, 47), (13, 9), (22, 31)]])
    res = generalize(list(progs), list(datas), header_size=64)
    assert res.supporting == [0, 1, 2]
    assert "read_le(18, 32, signed)" in res.bindings.values()
    assert "read_le(22, 32, signed)" in res.bindings.values()
    # row stride is rewritten, not bound
    assert any("pad4" in v for v in res.rewrites.values())
    # the generalized program parses an unseen size
    unseen = build_file(BmpSpec("V3", 24, False, width=19, height=5), 99)
    want, _ = traced_parse(unseen, "u")
    assert interpret(res.program, unseen) == want


def test_wav_bound_binds_to_data_size_field():
    progs, datas = zip(*[summarize_file(WavSpec(2, 16, n), seed=50 + n)
                         for n in (9, 23)])
    res = generalize(list(progs), list(datas), header_size=64)
    bound = [v for k, v in res.bindings.items() if k.startswith("LOOP_BOUND")]
    assert bound == ["read_le(40, 32, signed) / 4"]
    unseen = build_file(WavSpec(2, 16, 57), 1)
    want, _ = traced_parse(unseen, "u")
    assert interpret(res.program, unseen) == want


def test_fwc_second_chunk_base_is_adjacency():
    progs, datas = zip(*[summarize_file(FwcSpec(a, b), seed=60 + a)
                         for a, b in [(40, 24), (9, 80), (120, 3)]])
    res = generalize(list(progs), list(datas), header_size=64)
    base_keys = {k: v for k, v in res.bindings.items() if k.startswith("MIN_Y")}
    assert len(base_keys) == 2
    values = sorted(base_keys.values())
    assert values[0] == "32"                      # first chunk starts fixed
    assert "+" in values[1]                       # second chunk chains off it
    unseen = build_file(FwcSpec(77, 31), 2)
    want, _ = traced_parse(unseen, "u")
    assert interpret(res.program, unseen) == want


def test_single_file_generalization_still_binds_sizes():
    prog, data = summarize_file(BmpSpec("V3", 24, False, width=61, height=47))
    res = generalize([prog], [data], header_size=64)
    unseen = build_file(BmpSpec("V3", 24, False, width=14, height=6), 5)
    want, _ = traced_parse(unseen, "u")
    assert interpret(res.program, unseen) == want


def test_incompatible_file_is_reported_not_absorbed():
    p1, d1 = summarize_file(FwcSpec(8, 8), seed=1)
    p2, d2 = summarize_file(FwcSpec(8, 8), seed=2)
    # same sizes, so everything stays concrete and both files agree
    res = generalize([p1, p2], [d1, d2], header_size=64)
    assert res.supporting == [0, 1]
