"""Fold a flat trace log into nested affine loops.

The stride reinterprets the input as stride-wide records: consecutive
output bytes whose reads fall inside one stride-sized window become a
single record statement with one offset placeholder.  Records with
identical member structure are grouped, then repeatedly merged by linear
interpolation (fit a line through the first two items, extend while
exact) until a fixed point; each merge pass adds one loop level.

The best stride is the one whose summarized program serializes shortest:
a too-narrow stride shatters reversed channel orders into unmergeable
segments, a too-wide one duplicates member writes.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bitexpr import abstract_expr
from .errors import SummarizeError
from .ir import (BodyStmt, IrProgram, Lit, LoopGroup, LoopLevel, MemberWrite,
                 name_program)
from .trace import TraceLog

DEFAULT_STRIDES = tuple(range(1, 9))


@dataclass(frozen=True)
class AffineSegment:
    """A maximal run of points where inputOffset = base + factor * k."""

    out_start: int
    out_step: int
    count: int
    factor: int
    base: int


def interpolate(pairs) -> list[AffineSegment]:
    """Greedy segmentation of sorted (outputIndex, inputOffset) pairs.

    Every segment covers at least two points unless only one remains;
    a trailing single point becomes a degenerate factor-0 segment.
    """
    segs = []
    i, n = 0, len(pairs)
    while i < n:
        o0, b0 = pairs[i]
        if i + 1 == n:
            segs.append(AffineSegment(o0, 0, 1, 0, b0))
            break
        dout = pairs[i + 1][0] - o0
        dfac = pairs[i + 1][1] - b0
        k = 2
        while i + k < n and pairs[i + k] == (o0 + k * dout, b0 + k * dfac):
            k += 1
        segs.append(AffineSegment(o0, dout, k, dfac, b0))
        i += k
    return segs


@dataclass(frozen=True)
class Nest:
    """A loop nest over one record statement; levels are outermost first
    as (count, out_step, in_step)."""

    key: tuple
    levels: tuple[tuple[int, int, int], ...]
    out_base: int
    in_base: int


def _merge_pass(items: list[Nest]) -> list[Nest]:
    out = []
    i = 0
    while i < len(items):
        a = items[i]
        if (i + 1 < len(items) and items[i + 1].key == a.key
                and items[i + 1].levels == a.levels):
            dout = items[i + 1].out_base - a.out_base
            din = items[i + 1].in_base - a.in_base
            k = 2
            while i + k < len(items):
                c = items[i + k]
                if (c.key == a.key and c.levels == a.levels
                        and c.out_base == a.out_base + k * dout
                        and c.in_base == a.in_base + k * din):
                    k += 1
                else:
                    break
            out.append(Nest(a.key, ((k, dout, din),) + a.levels,
                            a.out_base, a.in_base))
            i += k
        else:
            out.append(a)
            i += 1
    return out


def _fixpoint(items: list[Nest]) -> list[Nest]:
    while True:
        merged = _merge_pass(items)
        if len(merged) == len(items):
            return merged
        items = merged


def nest(segments: list[AffineSegment]) -> list[Nest]:
    """Interpolate segment parameters into outer loops until a fixed point."""
    items = []
    for s in segments:
        levels = () if s.count == 1 else ((s.count, s.out_step, s.factor),)
        items.append(Nest((), levels, s.out_start, s.base))
    return _fixpoint(items)


def _form_records(entries, stride):
    """Chunk consecutive entries into stride-wide records.

    A record grows while the union of its read offsets spans at most
    ``stride`` bytes; an entry whose own span exceeds the stride still
    forms a singleton record.  Returns (first out index, window base,
    members) triples.
    """
    shapes = [abstract_expr(e.expr) for e in entries]
    records = []
    i = 0
    while i < len(entries):
        if not shapes[i].offsets:
            raise SummarizeError(
                f"({entries[i].array!r}, {entries[i].index}) reads no input byte")
        lo = min(shapes[i].offsets)
        hi = max(shapes[i].offsets)
        j = i + 1
        while j < len(entries):
            s = shapes[j]
            if not s.offsets:
                break
            nlo = min(lo, min(s.offsets))
            nhi = max(hi, max(s.offsets))
            if nhi - nlo + 1 > stride:
                break
            lo, hi = nlo, nhi
            j += 1
        members = tuple(
            MemberWrite(entries[k].index - entries[i].index, shapes[k].key,
                        tuple(o - lo for o in shapes[k].offsets))
            for k in range(i, j))
        records.append((entries[i].index, lo, members))
        i = j
    return records


def summarize(log: TraceLog, stride: int) -> IrProgram:
    """Build a concrete loop program that replays ``log`` exactly."""
    if not log.entries:
        raise SummarizeError(f"empty trace log for {log.file_id!r}")
    nests = []  # (array, Nest, members)
    for array in sorted(log.by_array()):
        entries = log.by_array()[array]
        records = _form_records(entries, stride)
        groups: dict[tuple, list] = {}
        for out0, base, members in records:
            groups.setdefault(members, []).append((out0, base))
        order = sorted(groups, key=lambda m: groups[m][0][0])
        for members in order:
            items = [Nest(members, (), o, b) for o, b in groups[members]]
            for item in _fixpoint(items):
                nests.append((array, _normalize(item), members))

    # Nests with identical iteration counts share one loop group, so a
    # single bound drives, say, both channels of an audio stream.
    nests.sort(key=lambda t: (t[0], t[1].out_base, t[1].in_base))
    by_counts: dict[tuple, LoopGroup] = {}
    group_list = []
    for array, item, members in nests:
        counts = tuple(c for c, _, _ in item.levels)
        if counts not in by_counts:
            g = LoopGroup([LoopLevel(Lit(c)) for c in counts], [])
            by_counts[counts] = g
            group_list.append(g)
        addends = tuple(
            Lit(-(c - 1)) if din < 0 else Lit(0) for c, _, din in item.levels)
        by_counts[counts].body.append(BodyStmt(
            array=array,
            members=members,
            out_base=Lit(item.out_base),
            out_steps=tuple(Lit(d) for _, d, _ in item.levels),
            in_base=Lit(item.in_base),
            in_steps=tuple(Lit(d) for _, _, d in item.levels),
            in_addends=addends,
        ))
    return name_program(group_list)


def _normalize(item: Nest) -> Nest:
    """Shift the record base so levels with negative input steps start
    from their smallest offset; the interpreter pairs this with an addend
    of -(count - 1) at those levels.  Bottom-up images then keep their
    base at the first data byte."""
    base = item.in_base
    for count, _, din in item.levels:
        if din < 0:
            base += (count - 1) * din
    if base == item.in_base:
        return item
    return Nest(item.key, item.levels, item.out_base, base)


def choose_stride(log: TraceLog, candidates=DEFAULT_STRIDES) -> int:
    """Pick the stride minimizing serialized program length (ties: smaller)."""
    best = None
    for s in candidates:
        size = len(summarize(log, s).serialize())
        if best is None or size < best[0]:
            best = (size, s)
    if best is None:
        raise SummarizeError("no stride candidates")
    return best[1]
