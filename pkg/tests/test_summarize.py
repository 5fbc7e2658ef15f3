"""Loop recovery from flat traces, plus interpreter replay fidelity."""

import pytest
from hypothesis import given, strategies as st

from parseforge.errors import InterpretError, SummarizeError
from parseforge.formats import (BmpSpec, FwcSpec, WavSpec, build_file,
                                traced_parse)
from parseforge.interp import interpret
from parseforge.ir import Lit
from parseforge.summarize import (DEFAULT_STRIDES, choose_stride, interpolate,
                                  summarize)
from parseforge.trace import TraceLog

SPECS = [
    WavSpec(1, 8, 10),
    WavSpec(2, 16, 7),
    BmpSpec("V3", 24, False, width=5, height=4),
    BmpSpec("V3", 24, True, width=5, height=4),
    BmpSpec("V3", 16, False, layout16="565", width=5, height=3),
    BmpSpec("V4", 32, False, order32="BGRA", width=4, height=3),
    BmpSpec("V5", 32, True, order32="RGBA", width=4, height=3),
    FwcSpec(13, 6),
]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind + str(SPECS.index(s)))
@pytest.mark.parametrize("stride", DEFAULT_STRIDES)
def test_exact_replay_at_every_stride(spec, stride):
    """Summaries are lossless: any stride replays the trace byte-exactly."""
    data = build_file(spec, 31)
    out, log = traced_parse(data, "t")
    program = summarize(log, stride)
    assert interpret(program, data) == out


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind + str(SPECS.index(s)))
def test_chosen_stride_minimizes_size(spec):
    data = build_file(spec, 31)
    _, log = traced_parse(data, "t")
    best = choose_stride(log)
    sizes = {s: len(summarize(log, s).serialize()) for s in DEFAULT_STRIDES}
    assert sizes[best] == min(sizes.values())
    # ties break toward the smaller stride
    assert all(sizes[s] > sizes[best] for s in DEFAULT_STRIDES if s < best)


def test_wav_channels_share_one_loop_group():
    data = build_file(WavSpec(2, 16, 7), 3)
    _, log = traced_parse(data, "t")
    program = summarize(log, choose_stride(log))
    assert len(program.groups) == 1
    assert len(program.groups[0].body) == 2
    assert len(program.groups[0].levels) == 1


def test_bottom_up_image_gets_negative_step_and_addend():
    data = build_file(BmpSpec("V3", 24, False, width=5, height=4), 3)
    _, log = traced_parse(data, "t")
    program = summarize(log, choose_stride(log))
    env = {d.name: d.value.value for d in program.decls}
    stmt = program.groups[0].body[0]
    steps = [env[e.name] for e in stmt.in_steps]
    assert any(s < 0 for s in steps)
    # the base points at the lowest read offset, paired with -(count-1)
    assert env[stmt.in_base.name] >= 0
    addends = [a for a in stmt.in_addends if not isinstance(a, Lit)]
    assert addends, "negative step must come with an addend declaration"


def test_top_down_image_has_no_addend():
    data = build_file(BmpSpec("V3", 24, True, width=5, height=4), 3)
    _, log = traced_parse(data, "t")
    program = summarize(log, choose_stride(log))
    for g in program.groups:
        for s in g.body:
            assert all(isinstance(a, Lit) and a.value == 0 for a in s.in_addends)


def test_empty_log_rejected():
    with pytest.raises(SummarizeError):
        summarize(TraceLog("f", 4, []), 1)


# --- interpolation ---


@st.composite
def affine_pairs(draw):
    """Concatenation of a few exact affine runs over increasing out indices."""
    pairs = []
    out = 0
    for _ in range(draw(st.integers(1, 4))):
        base = draw(st.integers(0, 500))
        factor = draw(st.integers(-6, 6))
        dout = draw(st.integers(1, 4))
        count = draw(st.integers(1, 6))
        for k in range(count):
            pairs.append((out + k * dout, base + k * factor))
        out = pairs[-1][0] + draw(st.integers(1, 3))
    return pairs


@given(affine_pairs())
def test_interpolation_partitions_points_exactly(pairs):
    segs = interpolate(pairs)
    rebuilt = []
    for s in segs:
        for k in range(s.count):
            rebuilt.append((s.out_start + k * s.out_step, s.base + k * s.factor))
    assert rebuilt == pairs
    assert sum(s.count for s in segs) == len(pairs)
    # only a trailing remainder may be a single point
    assert all(s.count >= 2 for s in segs[:-1])


# --- interpreter hardening basics ---


def test_interpreter_rejects_corrupt_bound_quickly():
    data = bytearray(build_file(FwcSpec(13, 6), 3))
    _, log = traced_parse(bytes(data), "t")
    program = summarize(log, choose_stride(log))
    # inflate the first chunk's loop bound way past the input size
    program.decls[0].value = Lit(10 ** 9)
    with pytest.raises(InterpretError) as info:
        interpret(program, bytes(data))
    assert info.value.kind in ("read-past-end", "output-cap")


def test_interpreter_clamps_negative_bounds():
    data = build_file(FwcSpec(13, 6), 3)
    _, log = traced_parse(data, "t")
    program = summarize(log, choose_stride(log))
    program.decls[0].value = Lit(-5)
    out = interpret(program, data)
    assert out[program.groups[0].body[0].array] == b""
