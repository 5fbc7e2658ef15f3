"""Flat execution-trace logs: one expression per output byte.

Wire format (UTF-8, line-delimited)::

    IN <file-id> <length>
    OUT <array-name> <index> := <s-expression>

Parsing canonicalizes every expression, so serialize(parse(text)) is a
stable fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import bitexpr
from .bitexpr import Expr
from .errors import TraceFormatError


@dataclass(frozen=True)
class TraceEntry:
    array: str
    index: int
    expr: Expr


@dataclass
class TraceLog:
    file_id: str
    length: int
    entries: list[TraceEntry]

    def by_array(self) -> dict[str, list[TraceEntry]]:
        """Entries grouped by output array, sorted by index."""
        out: dict[str, list[TraceEntry]] = {}
        for e in self.entries:
            out.setdefault(e.array, []).append(e)
        for entries in out.values():
            entries.sort(key=lambda e: e.index)
        return out

    def validate(self):
        """Check index uniqueness and contiguity per array, and read bounds."""
        for array, entries in self.by_array().items():
            indices = [e.index for e in entries]
            if len(set(indices)) != len(indices):
                dup = next(i for i in indices if indices.count(i) > 1)
                raise TraceFormatError(f"duplicate entry for ({array!r}, {dup})")
            if indices and indices != list(range(indices[-1] + 1)):
                raise TraceFormatError(f"array {array!r} indices are not contiguous from 0")
        for e in self.entries:
            for off in bitexpr.abstract_expr(e.expr).offsets:
                if off >= self.length:
                    raise TraceFormatError(
                        f"({e.array!r}, {e.index}) reads offset {off} "
                        f">= input length {self.length}")


def serialize_trace(log: TraceLog) -> str:
    lines = [f"IN {log.file_id} {log.length}"]
    for e in sorted(log.entries, key=lambda e: (e.array, e.index)):
        lines.append(f"OUT {e.array} {e.index} := {bitexpr.serialize(e.expr)}")
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> TraceLog:
    """Parse and validate a trace log; errors carry the offending line number."""
    log = None
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(None, 1)
        if fields[0] == "IN":
            if log is not None:
                raise TraceFormatError("duplicate IN header", lineno)
            parts = line.split()
            if len(parts) != 3:
                raise TraceFormatError("malformed IN header", lineno)
            try:
                length = int(parts[2])
            except ValueError:
                raise TraceFormatError("bad input length", lineno)
            log = TraceLog(parts[1], length, entries)
        elif fields[0] == "OUT":
            if log is None:
                raise TraceFormatError("OUT record before IN header", lineno)
            head, sep, sexpr = line.partition(":=")
            parts = head.split()
            if not sep or len(parts) != 3:
                raise TraceFormatError("malformed OUT record", lineno)
            try:
                index = int(parts[2])
            except ValueError:
                raise TraceFormatError("bad output index", lineno)
            if index < 0:
                raise TraceFormatError("negative output index", lineno)
            try:
                expr = bitexpr.canonicalize(bitexpr.parse_sexpr(sexpr))
            except TraceFormatError as exc:
                raise TraceFormatError(str(exc), lineno) from exc
            entries.append(TraceEntry(parts[1], index, expr))
        else:
            raise TraceFormatError(f"unknown record {fields[0]!r}", lineno)
    if log is None:
        raise TraceFormatError("missing IN header")
    log.validate()
    return log
