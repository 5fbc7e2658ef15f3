"""Turn one file's concrete loop program into a size-generic parser.

Two passes over a set of structurally identical programs (one per
training file):

1. Constant rewriting: FACTOR and ADDEND declarations are re-expressed
   through a fixed template set over earlier symbols, chosen by n-fold
   Cartesian voting across files (with a polynomial greedy fallback when
   the product explodes).
2. Header binding: LOOP_BOUND and MIN_Y declarations become reads of
   little-endian header fields, products of two fields, adjacency sums
   over an earlier statement's extent, or stay literal constants.

Both passes only ever pick assignments compatible with at least one
file; incompatible files are reported back so the caller can route them
to a different parser.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, field

from .ir import (IrProgram, Lit, Ref, SymAdd, SymExpr, SymField, SymMul,
                 SymNeg, SymPad4, eval_sym, render_sym)

VOTE_CAP = 10 ** 6
FIELD_WIDTHS = (8, 16, 32, 64)
PRODUCT_WIDTHS = (16, 32)
PRODUCT_MULTIPLIERS = range(1, 9)


def pad4(x: int) -> int:
    """Round the magnitude up to a multiple of 4, preserving sign."""
    if x >= 0:
        return (x + 3) & ~3
    return -((-x + 3) & ~3)


def estimate_header_size(start: int = 32, cap: int = 1024) -> list[int]:
    """Doubling schedule of header sizes to try, starting small."""
    sizes = [start]
    while sizes[-1] * 2 <= cap:
        sizes.append(sizes[-1] * 2)
    return sizes


# ---------------------------------------------------------------------------
# Constant rewriting templates


def enumerate_rewrites(value: int, scope) -> dict[str, SymExpr]:
    """All template instantiations over in-scope symbols matching ``value``.

    ``scope`` is an ordered list of (name, concrete value) for symbols
    declared before the variable.  Templates: -x + 1, x*y, -x*y,
    pad4(x*y) and pad4(-x*y).  Symbols valued 0 or +-1 only produce
    degenerate instances (x*1 = x, -0+1 = 1), so they are skipped.
    """
    out: dict[str, SymExpr] = {}
    scope = [(n, v) for n, v in scope if abs(v) > 1]

    def add(expr):
        out.setdefault(render_sym(expr), expr)

    for name, v in scope:
        if -v + 1 == value:
            add(SymAdd(SymNeg(Ref(name)), Lit(1)))
    for i, (xn, xv) in enumerate(scope):
        for yn, yv in scope[i:]:
            prod = SymMul(Ref(xn), Ref(yn))
            p = xv * yv
            if p == value:
                add(prod)
            if -p == value:
                add(SymNeg(prod))
            if pad4(p) == value:
                add(SymPad4(prod))
            if pad4(-p) == value:
                add(SymPad4(SymNeg(prod)))
    return out


# ---------------------------------------------------------------------------
# Cartesian voting


class VoteCapExceeded(Exception):
    """A single file's tuple space is too large; use the greedy fallback."""


@dataclass
class CandidateAssignment:
    assignments: dict[str, str]     # variable -> winning expression key
    votes: int
    supporting: list[int]           # indices of consistent files


KEEP_PREFIX = "="      # sentinel key: keep the file's concrete value


def keep_key(value: int) -> str:
    return f"{KEEP_PREFIX}{value}"


def vote_cartesian(file_candidates, var_order=None,
                   cap: int = VOTE_CAP) -> CandidateAssignment:
    """One vote per file per fully consistent assignment tuple.

    ``file_candidates`` maps, per file, variable -> list of expression
    keys consistent with that file.  Ties prefer fewer keep-concrete
    sentinels (generalize where possible), then shortest aggregate key
    text, then lexicographic order.
    """
    variables = var_order or sorted({v for fc in file_candidates for v in fc})
    votes: dict[tuple, int] = {}
    for fc in file_candidates:
        sets = [fc.get(v) or () for v in variables]
        if any(not s for s in sets):
            continue
        total = 1
        for s in sets:
            total *= len(s)
        if total > cap:
            raise VoteCapExceeded(f"{total} tuples for one file (cap {cap})")
        for tup in itertools.product(*sets):
            votes[tup] = votes.get(tup, 0) + 1
    if not votes:
        return CandidateAssignment({}, 0, [])
    best = min(votes, key=lambda t: (
        -votes[t], sum(k.startswith(KEEP_PREFIX) for k in t),
        sum(map(len, t)), t))
    supporting = [
        i for i, fc in enumerate(file_candidates)
        if all(best[k] in (fc.get(v) or ()) for k, v in enumerate(variables))]
    return CandidateAssignment(dict(zip(variables, best)), votes[best], supporting)


# ---------------------------------------------------------------------------
# Consistent assignments (exemplar / greedy / optimized greedy)


@dataclass
class AssignmentResult:
    compatible_files: list
    assignments: list[tuple]
    prune_count: int = 0


def _w(W, v, e, f):
    return W.get(v, {}).get(e, {}).get(f, 0)


def consistent_assignment(variant: str, F, V, E, W) -> AssignmentResult:
    """Find (compatible files, variable assignments) from a weight matrix.

    ``W[v][e][f]`` is positive iff file f is compatible with assigning
    expression e to variable v.  Variants: ``simplest`` fixes F[0] as an
    exemplar; ``conceptual`` greedily takes the heaviest assignment over
    the still-compatible files; ``optimized`` computes the same result
    with precomputed per-assignment weight sums and incremental pruning.
    Ties break by (V order, E order) so the two greedy variants agree.
    """
    if variant == "simplest":
        return _assign_simplest(F, V, E, W)
    if variant == "conceptual":
        return _assign_conceptual(F, V, E, W)
    if variant == "optimized":
        return _assign_optimized(F, V, E, W)
    raise ValueError(f"unknown variant {variant!r}")


def _assign_simplest(F, V, E, W):
    exemplar = F[0]
    assignments = []
    compat = list(F)
    for v in V:
        choices = [e for e in E if _w(W, v, e, exemplar) > 0]
        if choices:
            e = choices[0]
            assignments.append((v, e))
            compat = [f for f in compat if _w(W, v, e, f) > 0]
    return AssignmentResult(compat, assignments)


def _assign_conceptual(F, V, E, W):
    assignments = []
    compat = list(F)
    unassigned = list(V)
    while True:
        best = None
        best_weight = 0
        for v in unassigned:
            for e in E:
                s = sum(_w(W, v, e, f) for f in compat)
                if s > best_weight:
                    best, best_weight = (v, e), s
        if best is None:
            return AssignmentResult(compat, assignments)
        v, e = best
        assignments.append(best)
        unassigned.remove(v)
        compat = [f for f in compat if _w(W, v, e, f) > 0]


def _assign_optimized(F, V, E, W):
    v_order = {v: i for i, v in enumerate(V)}
    e_order = {e: i for i, e in enumerate(E)}
    weights: dict[tuple, int] = {}
    per_file: dict[object, dict] = {}
    for v in V:
        for e in E:
            for f, w in W.get(v, {}).get(e, {}).items():
                if w > 0:
                    weights[(v, e)] = weights.get((v, e), 0) + w
                    per_file.setdefault(f, {})[(v, e)] = 1

    result = AssignmentResult([], [])

    def prune(v, e, f):
        result.prune_count += 1
        weights[(v, e)] -= W[v][e][f]
        if weights[(v, e)] == 0:
            del weights[(v, e)]

    assigned: set = set()
    remaining = list(F)
    compatible: list = []
    while weights:
        v, e = min(weights, key=lambda a: (-weights[a], v_order[a[0]], e_order[a[1]]))
        result.assignments.append((v, e))
        row = W[v][e]
        compatible = [f for f in remaining if row.get(f, 0) > 0]
        compat_set = set(compatible)
        for e2 in E:
            for f in W.get(v, {}).get(e2, {}):
                if f in compat_set and (v, e2) in weights:
                    prune(v, e2, f)
        for f in list(remaining):
            if f not in compat_set:
                remaining.remove(f)
                for v2, e2 in per_file.get(f, {}):
                    if v2 not in assigned and (v2, e2) in weights:
                        prune(v2, e2, f)
        assigned.add(v)
    result.compatible_files = compatible
    return result


# ---------------------------------------------------------------------------
# Header binding candidates

_REWRITE_PREFIXES = ("FACTOR_", "ADDEND_")
_BIND_PREFIXES = ("LOOP_BOUND_", "MIN_Y_")


def _field_entries(data: bytes, header_size: int, widths):
    """Every little-endian integer readable inside the header window."""
    limit = min(header_size, len(data))
    out = []
    for width in widths:
        nbytes = width // 8
        for signed in (True, False):
            fmt = "<" + {1: "bB", 2: "hH", 4: "iI", 8: "qQ"}[nbytes][0 if signed else 1]
            for off in range(limit - nbytes + 1):
                raw = struct.unpack_from(fmt, data, off)[0]
                out.append((off, width, signed, raw))
    return out


def _field_candidates(value, entries, scales, add):
    for off, width, signed, raw in entries:
        for scale in scales:
            if raw // scale == value:
                # unscaled reads outrank scaled ones of the same width
                add(SymField(off, width, signed, scale),
                    (1, -width, 0 if signed else 1, scale, off))


def _product_candidates(value, entries, add):
    """m * f1 * f2 (optionally negated) matching ``value``, m in 1..8."""
    narrow = [e for e in entries if e[1] in PRODUCT_WIDTHS]
    by_value: dict[int, list] = {}
    for i, e in enumerate(narrow):
        by_value.setdefault(e[3], []).append((i, e))
    for m in PRODUCT_MULTIPLIERS:
        if value % m:
            continue
        t = value // m
        for i, (o1, w1, s1, r1) in enumerate(narrow):
            if r1 == 0:
                continue
            for target, negated in ((t, False), (-t, True)):
                if target % r1:
                    continue
                for j, (o2, w2, s2, r2) in by_value.get(target // r1, ()):
                    if j < i:
                        continue    # unordered pair; emit once
                    expr = SymMul(SymField(o1, w1, s1), SymField(o2, w2, s2))
                    if m > 1:
                        expr = SymMul(expr, Lit(m))
                    if negated:
                        expr = SymNeg(expr)
                    add(expr, (2, -(w1 + w2), 0 if (s1 or s2) else 1, min(o1, o2)))


@dataclass
class _StmtInfo:
    min_y: str                      # name of the statement's offset base
    bound_names: tuple[str, ...]    # loop bounds, outermost first
    step_names: tuple[str, ...]     # input factors, outermost first
    max_delta: int                  # widest member read within the record
    decl_index: int


def _collect_structure(program: IrProgram):
    """Per-statement names needed for scales and adjacency candidates."""
    order = {d.name: i for i, d in enumerate(program.decls)}
    stmts = []
    for g in program.groups:
        bounds = tuple(l.count.name for l in g.levels)
        for s in g.body:
            max_delta = max((max(m.read_deltas) for m in s.members
                             if m.read_deltas), default=0)
            stmts.append(_StmtInfo(s.in_base.name, bounds,
                                   tuple(e.name for e in s.in_steps),
                                   max_delta, order[s.in_base.name]))
    return stmts


def _adjacency_exprs(target: _StmtInfo, stmts, env):
    """End-of-extent sums over statements declared before ``target``.

    The extent of a statement runs from its offset base through the last
    byte its widest iteration reads; the byte after that is a natural
    base for whatever the format lays out next.  Step signs come from
    the exemplar file; negative steps appear negated so the sum tracks
    the maximal offset.
    """
    out = []
    for s in stmts:
        if s.decl_index >= target.decl_index:
            continue
        expr: SymExpr = Ref(s.min_y)
        for bound, step in zip(s.bound_names, s.step_names):
            term = Ref(step) if env[step] >= 0 else SymNeg(Ref(step))
            expr = SymAdd(expr, SymMul(SymAdd(Ref(bound), Lit(-1)), term))
        out.append(SymAdd(expr, Lit(s.max_delta + 1)))
    return out


def _bind_scales(var: str, program: IrProgram, env) -> list[int]:
    """Divisors for header fields bound to ``var``: 1, plus the innermost
    record step of each statement the bound drives (a byte-count field
    divided by the frame size yields the frame count)."""
    scales = [1]
    if var.startswith("LOOP_BOUND_"):
        for g in program.groups:
            if any(l.count.name == var for l in g.levels):
                for s in g.body:
                    step = abs(env[s.in_steps[-1].name]) if s.in_steps else 0
                    if step > 1 and step not in scales:
                        scales.append(step)
    return scales


# ---------------------------------------------------------------------------
# Full generalization over a set of same-shaped programs


@dataclass
class GeneralizeResult:
    program: IrProgram
    supporting: list[int]           # indices into the input program list
    rewrites: dict[str, str] = field(default_factory=dict)
    bindings: dict[str, str] = field(default_factory=dict)


def generalize(programs, datas, header_size: int,
               vote_cap: int = VOTE_CAP,
               variant: str = "optimized") -> GeneralizeResult:
    """Rewrite factors over earlier symbols, then bind bounds and offset
    bases to the first ``header_size`` input bytes.

    All programs must share one structural signature.  Returns the
    generalized program together with the indices of the files it stays
    consistent with; the caller routes the rest elsewhere.
    """
    if not programs:
        raise ValueError("no programs to generalize")
    names = [d.name for d in programs[0].decls]
    for p in programs[1:]:
        if [d.name for d in p.decls] != names:
            raise ValueError("programs differ in structure")
    envs = [{d.name: d.value.value for d in p.decls} for p in programs]

    # Stage 1: template rewriting of factors and addends by voting.
    expr_map: dict[tuple, SymExpr] = {}
    file_cands = []
    for env in envs:
        scope: list = []
        fc = {}
        for name in names:
            value = env[name]
            if name.startswith(_REWRITE_PREFIXES):
                cands = enumerate_rewrites(value, scope)
                keys = sorted(cands, key=lambda k: (len(k), k))
                for k in keys:
                    expr_map[(name, k)] = cands[k]
                fc[name] = keys + [keep_key(value)]
            scope.append((name, value))
        file_cands.append(fc)

    votable = [n for n in names
               if any(len(fc.get(n, [])) > 1 for fc in file_cands)]
    rewrites: dict[str, str] = {}
    supporting = list(range(len(programs)))
    if votable:
        sub = [{v: fc[v] for v in votable} for fc in file_cands]
        try:
            ca = vote_cartesian(sub, votable, vote_cap)
            chosen, supporting = ca.assignments, ca.supporting
        except VoteCapExceeded:
            E = []
            W: dict = {}
            for v in votable:
                seen = {}
                for fc in sub:
                    for rank, k in enumerate(fc[v]):
                        seen.setdefault(k, (k.startswith(KEEP_PREFIX), len(k), k))
                for k in sorted(seen, key=seen.get):
                    E.append((v, k))
                for fi, fc in enumerate(sub):
                    for k in fc[v]:
                        W.setdefault(v, {}).setdefault((v, k), {})[fi] = 1
            res = consistent_assignment(variant, supporting, votable, E, W)
            chosen = {v: k for v, (_, k) in res.assignments}
            supporting = res.compatible_files
        rewrites = {v: k for v, k in chosen.items()
                    if not k.startswith(KEEP_PREFIX)}

    # Stage 2: declarations that stay concrete must agree across files.
    base = supporting[0]
    concrete = [n for n in names
                if n not in rewrites and not n.startswith(_BIND_PREFIXES)]
    supporting = [f for f in supporting
                  if all(envs[f][n] == envs[base][n] for n in concrete)]

    # Stage 3: bind loop bounds and offset bases to the header.
    structure = programs[0]
    stmts = _collect_structure(structure)
    bind_vars = [n for n in names if n.startswith(_BIND_PREFIXES)]
    bind_expr: dict[tuple, SymExpr] = {}
    E = []
    W = {}
    for v in bind_vars:
        union: dict[str, tuple] = {}
        per_file: dict[int, set] = {}
        target = next((s for s in stmts if s.min_y == v), None)
        scales = _bind_scales(v, structure, envs[base])
        for f in supporting:
            value = envs[f][v]
            mine: set = set()

            def add(expr, rank, _mine=mine, _union=union):
                key = render_sym(expr)
                _union.setdefault(key, (rank + (key,), expr))
                _mine.add(key)

            if target is not None:
                for expr in _adjacency_exprs(target, stmts, envs[base]):
                    if eval_sym(expr, envs[f]) == value:
                        add(expr, (0, 0, 0, 0))
            entries = _field_entries(datas[f], header_size, FIELD_WIDTHS)
            _field_candidates(value, entries, scales, add)
            if v.startswith("LOOP_BOUND_"):
                _product_candidates(value, entries, add)
            add(Lit(value), (3, 0, 0, 0))
            per_file[f] = mine
        for key in sorted(union, key=lambda k: union[k][0]):
            E.append((v, key))
            bind_expr[(v, key)] = union[key][1]
            for f in supporting:
                if key in per_file[f]:
                    W.setdefault(v, {}).setdefault((v, key), {})[f] = 1

    res = consistent_assignment(variant, supporting, bind_vars, E, W)
    bindings = {v: k for v, (_, k) in res.assignments}
    final = res.compatible_files
    if not final:
        final = [base]

    out = programs[final[0]].copy()
    env_final = envs[final[0]]
    for v, key in rewrites.items():
        d = out.decl(v)
        d.value = expr_map[(v, key)]
        d.exemplar = env_final[v]
    for v, key in bindings.items():
        d = out.decl(v)
        d.value = bind_expr[(v, key)]
        d.exemplar = env_final[v]
    return GeneralizeResult(out, final, rewrites, bindings)
