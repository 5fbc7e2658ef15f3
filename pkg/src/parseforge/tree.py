"""Decision trees over header-byte predicates, one leaf parser per type.

A single generalized loop program only covers files that share its
structure.  The tree builder tests the best available program, splits
the corpus on the header byte that best separates parsed from unparsed
files, and recurses; the driver acquires trace logs in small batches
until every corpus file parses byte-exactly.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import ConvergenceError, HeaderSizeError, InterpretError
from .generalize import GeneralizeResult, estimate_header_size, generalize
from .interp import interpret
from .ir import IrProgram
from .summarize import choose_stride, summarize


@dataclass(frozen=True)
class Predicate:
    """byte[index] == value; files too short to have that byte fail it."""

    index: int
    value: int

    def matches(self, data: bytes) -> bool:
        return len(data) > self.index and data[self.index] == self.value

    def render(self) -> str:
        return f"in[{self.index}] == {self.value}"


@dataclass
class Leaf:
    program: IrProgram | None
    note: str = ""


@dataclass
class Node:
    pred: Predicate
    yes: "ParserTree"
    no: "ParserTree"


ParserTree = Leaf | Node


def route(tree: ParserTree, data: bytes) -> Leaf:
    while isinstance(tree, Node):
        tree = tree.yes if tree.pred.matches(data) else tree.no
    return tree


def run_tree(tree: ParserTree, data: bytes) -> dict[str, bytes]:
    """Parse ``data`` with the leaf its header routes to."""
    leaf = route(tree, data)
    if leaf.program is None:
        raise InterpretError("no-parser", "no leaf parser covers this file")
    return interpret(leaf.program, data)


def tree_predicates(tree: ParserTree) -> list[Predicate]:
    if isinstance(tree, Leaf):
        return []
    return [tree.pred] + tree_predicates(tree.yes) + tree_predicates(tree.no)


# ---------------------------------------------------------------------------
# Testing a candidate tree against the oracle


@dataclass
class ParseReport:
    # verdict: (kind, detail); kinds parsed-exact / mismatch / error / no-parser
    verdicts: dict[str, tuple]
    parseable: list[str]
    unparseable: list[str]


def _first_diff(got: dict, want: dict):
    for name in sorted(set(got) | set(want)):
        a = got.get(name, b"")
        b = want.get(name, b"")
        if a == b:
            continue
        n = min(len(a), len(b))
        for i in range(n):
            if a[i] != b[i]:
                return name, i
        return name, n
    return None


def test_parser(tree: ParserTree, corpus, oracle) -> ParseReport:
    """Verdict per file: byte-exact parse, first mismatch, or error kind."""
    verdicts = {}
    parseable, unparseable = [], []
    for fid, data in corpus:
        leaf = route(tree, data)
        if leaf.program is None:
            verdicts[fid] = ("no-parser", None)
        else:
            try:
                got = interpret(leaf.program, data)
            except InterpretError as exc:
                verdicts[fid] = ("error", exc.kind)
            else:
                diff = _first_diff(got, oracle(data))
                if diff is None:
                    verdicts[fid] = ("parsed-exact", None)
                else:
                    verdicts[fid] = ("mismatch", diff)
        (parseable if verdicts[fid][0] == "parsed-exact" else unparseable).append(fid)
    return ParseReport(verdicts, parseable, unparseable)


# ---------------------------------------------------------------------------
# Predicate selection


def pick_a_hew(good, bad, header_size: int) -> Predicate:
    """Byte-equality predicate that best separates the two file sets.

    Scores every (index, value) pair by the fraction of good files
    sharing it minus the fraction of bad files sharing it; the winner
    maximizes the absolute score.  Exact rational arithmetic keeps ties
    exact; ties break toward the smaller index, then the smaller value.
    """
    freq: dict[tuple[int, int], Fraction] = {}
    for data in good:
        for i in range(min(header_size, len(data))):
            freq[(i, data[i])] = freq.get((i, data[i]), Fraction(0)) + Fraction(1, len(good))
    for data in bad:
        for i in range(min(header_size, len(data))):
            freq[(i, data[i])] = freq.get((i, data[i]), Fraction(0)) - Fraction(1, len(bad))
    if not freq:
        return Predicate(0, 0)
    index, value = min(freq, key=lambda k: (-abs(freq[k]), k))
    return Predicate(index, value)


# ---------------------------------------------------------------------------
# Building the tree from available logs


def summarize_log(log, strides=None):
    if strides is None:
        return summarize(log, choose_stride(log))
    return summarize(log, choose_stride(log, strides))


def build_indiv_parser(summaries, datas, header_size: int,
                       variant: str = "optimized") -> GeneralizeResult:
    """Generalize the largest structurally identical group of summaries.

    ``summaries`` is a list of concrete programs (one per logged file),
    ``datas`` the matching input bytes.  Files outside the winning group
    are left for the caller to split off.
    """
    groups: dict[tuple, list[int]] = {}
    for i, prog in enumerate(summaries):
        # signature erases addend declarations, so key on decl names too
        key = (prog.signature(), tuple(d.name for d in prog.decls))
        groups.setdefault(key, []).append(i)
    chosen = max(groups.values(), key=lambda idxs: (len(idxs), -idxs[0]))
    result = generalize([summaries[i] for i in chosen],
                        [datas[i] for i in chosen], header_size,
                        variant=variant)
    result.supporting = [chosen[i] for i in result.supporting]
    return result


def build_tree(corpus, logs, oracle, header_size: int,
               summaries=None, variant: str = "optimized") -> ParserTree:
    """Recursive split-and-conquer over the corpus (files as (id, bytes)).

    ``logs`` maps a subset of file ids to trace logs.  Leaves hold a
    generalized parser covering every file routed to them, or None when
    no logs reached that region yet.
    """
    if summaries is None:
        summaries = {fid: summarize_log(log) for fid, log in logs.items()}
    by_id = dict(corpus)
    logged = [fid for fid, _ in corpus if fid in summaries]
    if not logged:
        return Leaf(None)
    result = build_indiv_parser([summaries[f] for f in logged],
                                [by_id[f] for f in logged], header_size, variant)
    leaf = Leaf(result.program)
    report = test_parser(leaf, corpus, oracle)
    if not report.unparseable:
        leaf.note = f"{len(report.parseable)} files"
        return leaf
    pred = pick_a_hew([by_id[f] for f in report.parseable],
                      [by_id[f] for f in report.unparseable], header_size)
    yes = [(f, d) for f, d in corpus if pred.matches(d)]
    no = [(f, d) for f, d in corpus if not pred.matches(d)]
    if not yes or not no:
        raise HeaderSizeError(
            f"no header predicate under {header_size} bytes separates "
            f"{len(report.parseable)} parsed from {len(report.unparseable)} unparsed files")
    return Node(pred,
                build_tree(yes, logs, oracle, header_size, summaries, variant),
                build_tree(no, logs, oracle, header_size, summaries, variant))


# ---------------------------------------------------------------------------
# Iterative log acquisition


@dataclass
class Round:
    index: int
    header_size: int
    new_logs: list[str]
    traced_bytes: int           # cumulative
    unparseable: int


@dataclass
class Convergence:
    tree: ParserTree
    logs: dict
    rounds: list[Round] = field(default_factory=list)

    @property
    def traced_bytes(self) -> int:
        return self.rounds[-1].traced_bytes if self.rounds else 0


def _select(unparsed, corpus_by_id, batch, strategy, seed, round_index):
    sized = [(fid, len(corpus_by_id[fid])) for fid in unparsed]
    if strategy == "smallest":
        sized.sort(key=lambda t: (t[1], t[0]))
    elif strategy == "largest":
        sized.sort(key=lambda t: (-t[1], t[0]))
    elif strategy == "random":
        rng = random.Random(f"{seed}:{round_index}")
        rng.shuffle(sized)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return [fid for fid, _ in sized[:batch]]


def expand_logs_until_converged(corpus, oracle, tracer, batch: int = 10,
                                strategy: str = "smallest", seed: int = 0,
                                header_sizes=None, variant: str = "optimized",
                                strides=None) -> Convergence:
    """Trace small batches of still-unparsed files until the corpus parses.

    ``tracer(fid, data)`` produces a trace log on demand; logging is the
    expensive step, so rounds are recorded with cumulative traced bytes.
    A round that makes no progress escalates the header size; running
    out of schedule raises ConvergenceError.
    """
    if not corpus:
        raise ConvergenceError("empty corpus")
    header_sizes = list(header_sizes or estimate_header_size())
    by_id = dict(corpus)
    logs: dict = {}
    summaries: dict = {}
    state = Convergence(Leaf(None), logs)
    hs = 0
    traced = 0
    unparsed = [fid for fid, _ in corpus]
    while unparsed:
        picked = _select(unparsed, by_id, batch, strategy, seed, len(state.rounds))
        fresh = [fid for fid in picked if fid not in logs]
        for fid in fresh:
            logs[fid] = tracer(fid, by_id[fid])
            summaries[fid] = summarize_log(logs[fid], strides)
            traced += len(by_id[fid])
        while True:
            try:
                state.tree = build_tree(corpus, logs, oracle,
                                        header_sizes[hs], summaries, variant)
                break
            except HeaderSizeError as exc:
                hs += 1
                if hs >= len(header_sizes):
                    raise ConvergenceError(
                        f"header schedule exhausted at {header_sizes[-1]}: {exc}")
        report = test_parser(state.tree, corpus, oracle)
        state.rounds.append(Round(len(state.rounds), header_sizes[hs],
                                  fresh, traced, len(report.unparseable)))
        if report.unparseable and len(report.unparseable) >= len(unparsed):
            # logs are not the bottleneck; widen the header window
            hs += 1
            if hs >= len(header_sizes):
                raise ConvergenceError(
                    f"{len(report.unparseable)} files still unparseable at "
                    f"header size {header_sizes[-1]}")
        unparsed = report.unparseable
    return state


# ---------------------------------------------------------------------------
# Rendering


def export_dot(tree: ParserTree, title: str = "parser") -> str:
    lines = [f'digraph "{title}" {{', "  node [shape=box];"]
    counter = [0]

    def walk(t) -> str:
        name = f"n{counter[0]}"
        counter[0] += 1
        if isinstance(t, Leaf):
            if t.program is None:
                lines.append(f'  {name} [label="reject", style=dashed];')
            else:
                arrays = ",".join(t.program.arrays())
                label = f"parser[{arrays}]"
                if t.note:
                    label += f"\\n{t.note}"
                lines.append(f'  {name} [label="{label}"];')
            return name
        lines.append(f'  {name} [label="{t.pred.render()}", shape=diamond];')
        lines.append(f'  {name} -> {walk(t.yes)} [label="true"];')
        lines.append(f'  {name} -> {walk(t.no)} [label="false"];')
        return name

    walk(tree)
    lines.append("}")
    return "\n".join(lines) + "\n"
