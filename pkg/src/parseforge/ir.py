"""Loop-structured parser programs.

A program is an ordered list of named declarations followed by loop
groups.  A group is a perfect loop nest whose body is a list of record
statements.  Each statement reads one stride-wide input record per
iteration and writes a fixed set of member bytes; the record offset and
the output index are affine in the loop indices:

    offset = MIN_Y + sum over levels l of (idx_l + ADDEND_Y_l) * FACTOR_Y_l
    out    = MIN_X + sum over levels l of idx_l * FACTOR_X_l

Member writes sit at fixed small deltas from (offset, out), so every
size-dependent number lives in a declared symbol.  A later pass rewrites
declaration values into expressions over earlier symbols or binds them to
little-endian header fields; declaration order therefore defines which
symbols are in scope for a rewrite.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

from .errors import InterpretError


# ---------------------------------------------------------------------------
# Value expressions for parameters


class SymExpr:
    """Base for parameter value expressions."""


@dataclass(frozen=True)
class Lit(SymExpr):
    value: int


@dataclass(frozen=True)
class Ref(SymExpr):
    name: str


@dataclass(frozen=True)
class SymNeg(SymExpr):
    a: SymExpr


@dataclass(frozen=True)
class SymAdd(SymExpr):
    a: SymExpr
    b: SymExpr


@dataclass(frozen=True)
class SymMul(SymExpr):
    a: SymExpr
    b: SymExpr


@dataclass(frozen=True)
class SymPad4(SymExpr):
    """Magnitude rounded up to a multiple of 4, sign preserved."""

    a: SymExpr


@dataclass(frozen=True)
class SymField(SymExpr):
    """Little-endian header field; its value divided by ``scale`` supplies
    the parameter at run time."""

    offset: int
    width: int          # bits: 8, 16, 32 or 64
    signed: bool
    scale: int = 1


_FIELD_PACK = {(8, False): "<B", (8, True): "<b", (16, False): "<H",
               (16, True): "<h", (32, False): "<I", (32, True): "<i",
               (64, False): "<Q", (64, True): "<q"}


def read_field(f: SymField, data: bytes) -> int:
    nbytes = f.width // 8
    if f.offset + nbytes > len(data):
        raise InterpretError(
            "read-past-end",
            f"header field at {f.offset} ({nbytes} bytes) "
            f"outside {len(data)}-byte input")
    raw = struct.unpack_from(_FIELD_PACK[(f.width, f.signed)], data, f.offset)[0]
    return raw // f.scale


def eval_sym(e: SymExpr, env: dict[str, int], data: bytes | None = None) -> int:
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, Ref):
        if e.name not in env:
            raise KeyError(e.name)
        return env[e.name]
    if isinstance(e, SymNeg):
        return -eval_sym(e.a, env, data)
    if isinstance(e, SymAdd):
        return eval_sym(e.a, env, data) + eval_sym(e.b, env, data)
    if isinstance(e, SymMul):
        return eval_sym(e.a, env, data) * eval_sym(e.b, env, data)
    if isinstance(e, SymPad4):
        v = eval_sym(e.a, env, data)
        return (v + 3) & ~3 if v >= 0 else -((-v + 3) & ~3)
    if isinstance(e, SymField):
        if data is None:
            raise InterpretError("unbound-symbol",
                                 "header field read without an input file")
        return read_field(e, data)
    raise TypeError(f"unknown value expression {type(e).__name__}")


def sym_refs(e: SymExpr) -> set[str]:
    if isinstance(e, Ref):
        return {e.name}
    if isinstance(e, (SymNeg, SymPad4)):
        return sym_refs(e.a)
    if isinstance(e, (SymAdd, SymMul)):
        return sym_refs(e.a) | sym_refs(e.b)
    return set()


def render_sym(e: SymExpr) -> str:
    if isinstance(e, Lit):
        return str(e.value)
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, SymNeg):
        return f"-{_atom(e.a)}"
    if isinstance(e, SymAdd):
        rhs = e.b
        if isinstance(rhs, Lit) and rhs.value < 0:
            return f"{render_sym(e.a)} - {-rhs.value}"
        if isinstance(rhs, SymNeg):
            return f"{render_sym(e.a)} - {_atom(rhs.a)}"
        return f"{render_sym(e.a)} + {render_sym(rhs)}"
    if isinstance(e, SymMul):
        return f"{_atom(e.a)} * {_atom(e.b)}"
    if isinstance(e, SymPad4):
        return f"pad4({render_sym(e.a)})"
    if isinstance(e, SymField):
        sign = "signed" if e.signed else "unsigned"
        text = f"read_le({e.offset}, {e.width}, {sign})"
        return f"{text} / {e.scale}" if e.scale != 1 else text
    raise TypeError(f"unknown value expression {type(e).__name__}")


def _atom(e: SymExpr) -> str:
    s = render_sym(e)
    if (isinstance(e, (SymAdd, SymMul)) or (isinstance(e, Lit) and e.value < 0)
            or (isinstance(e, SymField) and e.scale != 1)):
        return f"({s})"
    return s


def _is_zero(e: SymExpr) -> bool:
    return isinstance(e, Lit) and e.value == 0


# ---------------------------------------------------------------------------
# Declarations


@dataclass
class Decl:
    name: str
    value: SymExpr            # concrete, or a derivation from earlier names
    exemplar: int | None = None   # concrete value in the originating file

    def render(self) -> str:
        line = f"{self.name} := {render_sym(self.value)};"
        if self.exemplar is not None and not isinstance(self.value, Lit):
            line += f"  // {self.exemplar}"
        return line


# ---------------------------------------------------------------------------
# Loop nests


@dataclass(frozen=True)
class MemberWrite:
    """One output byte per iteration: array[out + out_delta] gets the
    shape evaluated at record offset + read_deltas."""

    out_delta: int
    shape_key: str
    read_deltas: tuple[int, ...]


@dataclass
class LoopLevel:
    count: SymExpr


@dataclass
class BodyStmt:
    array: str
    members: tuple[MemberWrite, ...]
    out_base: SymExpr
    out_steps: tuple[SymExpr, ...]      # one per loop level
    in_base: SymExpr
    in_steps: tuple[SymExpr, ...]       # one per loop level
    in_addends: tuple[SymExpr, ...] = ()
    label: str = ""                     # letter id from the naming pass

    def __post_init__(self):
        if not self.in_addends:
            self.in_addends = tuple(Lit(0) for _ in self.in_steps)

    def _affine_text(self, base, steps, addends, index_names):
        parts = [render_sym(base)]
        for lvl, idx in enumerate(index_names):
            step = steps[lvl]
            if _is_zero(step):
                continue
            term = idx
            if addends is not None and not _is_zero(addends[lvl]):
                term = f"({idx} + {render_sym(addends[lvl])})"
            if not (isinstance(step, Lit) and step.value == 1):
                term += f" * {_atom(step)}"
            parts.append(term)
        return " + ".join(parts)

    def render(self, index_names: list[str], indent: str) -> list[str]:
        off = f"off_{self.label}"
        out = f"out_{self.label}"
        lines = [
            f"{indent}{off} := "
            f"{self._affine_text(self.in_base, self.in_steps, self.in_addends, index_names)};",
            f"{indent}{out} := "
            f"{self._affine_text(self.out_base, self.out_steps, None, index_names)};",
        ]
        for m in self.members:
            body = m.shape_key
            for d in m.read_deltas:
                at = off if d == 0 else f"{off} + {d}"
                body = body.replace("(read @)", f"(read {at})", 1)
            target = out if m.out_delta == 0 else f"{out} + {m.out_delta}"
            lines.append(f"{indent}{self.array}[{target}] := {body}")
        return lines


@dataclass
class LoopGroup:
    levels: list[LoopLevel]
    body: list[BodyStmt]


@dataclass
class IrProgram:
    decls: list[Decl] = field(default_factory=list)
    groups: list[LoopGroup] = field(default_factory=list)

    def arrays(self) -> list[str]:
        seen = []
        for g in self.groups:
            for s in g.body:
                if s.array not in seen:
                    seen.append(s.array)
        return seen

    def decl(self, name: str) -> Decl:
        for d in self.decls:
            if d.name == name:
                return d
        raise KeyError(name)

    def serialize(self) -> str:
        """Canonical text form; its length is the parsimony measure."""
        lines = [d.render() for d in self.decls]
        for g in self.groups:
            idx_names = [f"i{l}" for l in range(len(g.levels))]
            indent = ""
            for l, level in enumerate(g.levels):
                lines.append(f"{indent}for ({idx_names[l]} := 0; "
                             f"{idx_names[l]} < {render_sym(level.count)}; "
                             f"{idx_names[l]} += 1) {{")
                indent += "  "
            for s in g.body:
                lines.extend(s.render(idx_names, indent))
            for l in range(len(g.levels) - 1, -1, -1):
                lines.append("  " * l + "}")
        return "\n".join(lines) + "\n"

    def signature(self) -> str:
        """Loop and body structure with every parameter value erased.

        Two logs whose summaries share a signature differ only in
        parameter values, so they are candidates for one generalized
        parser.
        """
        parts = []
        for g in self.groups:
            stmts = ";".join(
                f"{s.array}:" + ",".join(
                    f"{m.out_delta}@{m.shape_key}@{m.read_deltas}" for m in s.members)
                for s in g.body)
            parts.append(f"[{len(g.levels)}]{{{stmts}}}")
        return "|".join(parts)

    def copy(self) -> IrProgram:
        groups = [LoopGroup([replace(l) for l in g.levels],
                            [replace(s) for s in g.body])
                  for g in self.groups]
        return IrProgram([replace(d) for d in self.decls], groups)


# ---------------------------------------------------------------------------
# Naming pass: hoist every parameter into a declared symbol


def _letters():
    i = 0
    while True:
        name = ""
        n = i
        while True:
            name = chr(ord("A") + n % 26) + name
            n = n // 26 - 1
            if n < 0:
                break
        yield name
        i += 1


def name_program(groups: list[LoopGroup]) -> IrProgram:
    """Replace concrete parameters with references to fresh declarations.

    Letters run through loop levels then statements, group by group.
    Per-statement factors are declared innermost level first, so an outer
    factor may later be rewritten in terms of an inner one (a row stride
    in terms of a pixel stride).
    """
    decls: list[Decl] = []
    letters = _letters()

    def declare(name, value):
        exemplar = value.value if isinstance(value, Lit) else None
        decls.append(Decl(name, value, exemplar))
        return Ref(name)

    for g in groups:
        bound_names = [next(letters) for _ in g.levels]
        for level, ln in zip(g.levels, bound_names):
            level.count = declare(f"LOOP_BOUND_{ln}", level.count)
        for s in g.body:
            s.label = next(letters)
            s.out_base = declare(f"MIN_X_{s.label}", s.out_base)
            s.in_base = declare(f"MIN_Y_{s.label}", s.in_base)
            out_steps, in_steps, addends = (list(s.out_steps), list(s.in_steps),
                                            list(s.in_addends))
            for lvl in range(len(g.levels) - 1, -1, -1):
                out_steps[lvl] = declare(f"FACTOR_X_{s.label}_{lvl}", out_steps[lvl])
                in_steps[lvl] = declare(f"FACTOR_Y_{s.label}_{lvl}", in_steps[lvl])
                if not _is_zero(addends[lvl]):
                    addends[lvl] = declare(f"ADDEND_Y_{s.label}_{lvl}", addends[lvl])
            s.out_steps = tuple(out_steps)
            s.in_steps = tuple(in_steps)
            s.in_addends = tuple(addends)
    return IrProgram(decls, groups)
