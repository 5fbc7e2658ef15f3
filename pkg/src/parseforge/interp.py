"""Reference interpreter for loop programs.

This is the authoritative backend: every compiled backend must match its
output byte for byte.  It is hardened against corrupt inputs; failures
surface as InterpretError with a structured kind instead of crashes or
unbounded loops.  Before entering a loop nest the interpreter bounds the
affine offset ranges of each statement, so a corrupt loop bound fails
immediately rather than after millions of iterations.
"""

from __future__ import annotations

import itertools

from . import bitexpr
from .errors import InterpretError, TraceEvalError
from .ir import BodyStmt, IrProgram, eval_sym

DEFAULT_OUTPUT_CAP = 1 << 26


class _Window:
    """Read-only view of the input shifted by a record base offset."""

    __slots__ = ("data", "base")

    def __init__(self, data, base):
        self.data = data
        self.base = base

    def __len__(self):
        return len(self.data) - self.base

    def __getitem__(self, i):
        return self.data[self.base + i]


def _affine_range(base, counts, steps, addends):
    """Inclusive (lo, hi) of base + sum of (idx + addend) * step."""
    lo = hi = base
    for count, step, addend in zip(counts, steps, addends):
        a = addend * step
        b = (count - 1 + addend) * step
        lo += min(a, b)
        hi += max(a, b)
    return lo, hi


def _check_stmt(s: BodyStmt, counts, env, data_len, cap):
    steps = [eval_sym(e, env) for e in s.in_steps]
    addends = [eval_sym(e, env) for e in s.in_addends]
    in_base = eval_sym(s.in_base, env)
    lo, hi = _affine_range(in_base, counts, steps, addends)
    max_delta = max((max(m.read_deltas) for m in s.members if m.read_deltas),
                    default=0)
    if lo < 0:
        raise InterpretError("read-past-end",
                             f"negative input offset {lo} in {s.array!r} loop")
    if hi + max_delta >= data_len:
        raise InterpretError(
            "read-past-end",
            f"input offset {hi + max_delta} beyond {data_len}-byte input "
            f"in {s.array!r} loop")

    osteps = [eval_sym(e, env) for e in s.out_steps]
    out_base = eval_sym(s.out_base, env)
    olo, ohi = _affine_range(out_base, counts, osteps, [0] * len(counts))
    max_odelta = max(m.out_delta for m in s.members)
    if olo < 0:
        raise InterpretError("negative-output-index",
                             f"output index {olo} in {s.array!r} loop")
    if ohi + max_odelta >= cap:
        raise InterpretError(
            "output-cap",
            f"output index {ohi + max_odelta} in {s.array!r} exceeds cap {cap}")
    return in_base, steps, addends, out_base, osteps


def interpret(program: IrProgram, data: bytes,
              output_cap: int = DEFAULT_OUTPUT_CAP) -> dict[str, bytes]:
    env: dict[str, int] = {}
    for d in program.decls:
        try:
            env[d.name] = eval_sym(d.value, env, data)
        except KeyError as exc:
            raise InterpretError("unbound-symbol",
                                 f"{d.name} uses undeclared {exc.args[0]}")

    buffers: dict[str, bytearray] = {a: bytearray() for a in program.arrays()}
    for g in program.groups:
        try:
            counts = [max(0, eval_sym(l.count, env)) for l in g.levels]
        except KeyError as exc:
            raise InterpretError("unbound-symbol",
                                 f"loop bound uses undeclared {exc.args[0]}")
        if any(c == 0 for c in counts):
            continue
        plans = []
        for s in g.body:
            in_base, steps, addends, out_base, osteps = _check_stmt(
                s, counts, env, len(data), output_cap)
            exprs = [(m.out_delta,
                      bitexpr.substitute(m.shape_key, m.read_deltas))
                     for m in s.members]
            plans.append((s, in_base, steps, addends, out_base, osteps, exprs))

        for idx in itertools.product(*(range(c) for c in counts)):
            for s, in_base, steps, addends, out_base, osteps, exprs in plans:
                off = in_base
                out = out_base
                for i, step, addend, ostep in zip(idx, steps, addends, osteps):
                    off += (i + addend) * step
                    out += i * ostep
                buf = buffers[s.array]
                window = _Window(data, off)
                for out_delta, expr in exprs:
                    try:
                        value = bitexpr.eval_expr(expr, window)
                    except TraceEvalError as exc:
                        raise InterpretError("read-past-end", str(exc))
                    pos = out + out_delta
                    if pos >= len(buf):
                        buf.extend(b"\x00" * (pos + 1 - len(buf)))
                    buf[pos] = value
    return {a: bytes(b) for a, b in buffers.items()}
