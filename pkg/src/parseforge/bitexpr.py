"""Width-tagged expression trees over input-file bytes.

Every node carries a result width from ``WIDTHS``; evaluation uses
two's-complement fixed-width semantics (values are held as unsigned
integers masked to the node width).  Expressions are immutable and
hashable, so they can be shared freely across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import TraceEvalError, TraceFormatError

WIDTHS = (8, 16, 32, 64, 128)


def fit_width(nbits: int) -> int:
    """Smallest supported width that can hold ``nbits`` bits."""
    for w in WIDTHS:
        if w >= nbits:
            return w
    raise ValueError(f"no supported width holds {nbits} bits")


def _mask(width: int) -> int:
    return (1 << width) - 1


def _to_signed(value: int, width: int) -> int:
    if value & (1 << (width - 1)):
        return value - (1 << width)
    return value


@dataclass(frozen=True)
class Expr:
    """Base node; ``width`` is the result width in bits."""

    width: int

    def __post_init__(self):
        if self.width not in WIDTHS:
            raise ValueError(f"unsupported width {self.width}")


@dataclass(frozen=True)
class Read(Expr):
    """One byte of the input file; always 8 bits wide."""

    offset: int

    def __init__(self, offset: int):
        object.__setattr__(self, "width", 8)
        object.__setattr__(self, "offset", offset)
        if offset < 0:
            raise ValueError("negative read offset")


@dataclass(frozen=True)
class Const(Expr):
    value: int

    def __init__(self, value: int, width: int):
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "value", value & _mask(width))
        super().__post_init__()


@dataclass(frozen=True)
class ZExt(Expr):
    child: Expr

    def __init__(self, width: int, child: Expr):
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "child", child)
        super().__post_init__()
        if width < child.width:
            raise ValueError("zext must not narrow")


@dataclass(frozen=True)
class SExt(Expr):
    child: Expr

    def __init__(self, width: int, child: Expr):
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "child", child)
        super().__post_init__()
        if width < child.width:
            raise ValueError("sext must not narrow")


@dataclass(frozen=True)
class Extract(Expr):
    """Bits ``lo..hi`` of the child, zero-filled up to the result width.

    The result width is the smallest supported width that holds the span.
    """

    hi: int
    lo: int
    child: Expr

    def __init__(self, hi: int, lo: int, child: Expr):
        if hi < lo or hi >= child.width:
            raise ValueError(f"bad extract range [{hi}:{lo}] on width {child.width}")
        object.__setattr__(self, "width", fit_width(hi - lo + 1))
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "child", child)


class _Binary(Expr):
    """Two operands of equal width; result has the same width."""


def _binary(name: str):
    @dataclass(frozen=True)
    class _Node(_Binary):
        a: Expr
        b: Expr

        def __init__(self, a: Expr, b: Expr):
            if a.width != b.width:
                raise ValueError(f"{name}: operand widths differ ({a.width} vs {b.width})")
            object.__setattr__(self, "width", a.width)
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)

    _Node.__name__ = _Node.__qualname__ = name
    return _Node


And = _binary("And")
Or = _binary("Or")
Xor = _binary("Xor")
Add = _binary("Add")
Sub = _binary("Sub")
Mul = _binary("Mul")


class _Shift(_Binary):
    """Shift by a constant amount (variable shift amounts are out of scope)."""


def _shift(name: str):
    @dataclass(frozen=True)
    class _Node(_Shift):
        a: Expr
        b: Expr

        def __init__(self, a: Expr, b: Expr):
            if a.width != b.width:
                raise ValueError(f"{name}: operand widths differ ({a.width} vs {b.width})")
            if not isinstance(b, Const):
                raise ValueError(f"{name}: shift amount must be a constant")
            object.__setattr__(self, "width", a.width)
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)

    _Node.__name__ = _Node.__qualname__ = name
    return _Node


Shl = _shift("Shl")
LShr = _shift("LShr")
AShr = _shift("AShr")

_BINOPS = {And: "and", Or: "or", Xor: "xor", Add: "add", Sub: "sub", Mul: "mul",
           Shl: "shl", LShr: "lshr", AShr: "ashr"}
_BINOPS_BY_NAME = {v: k for k, v in _BINOPS.items()}


def eval_expr(expr: Expr, data: bytes) -> int:
    """Evaluate ``expr`` over the input bytes; returns the unsigned value.

    Raises TraceEvalError when a read offset falls outside ``data``.
    """
    if isinstance(expr, Read):
        if expr.offset >= len(data):
            raise TraceEvalError(expr.offset, len(data))
        return data[expr.offset]
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, ZExt):
        return eval_expr(expr.child, data)
    if isinstance(expr, SExt):
        v = eval_expr(expr.child, data)
        return _to_signed(v, expr.child.width) & _mask(expr.width)
    if isinstance(expr, Extract):
        v = eval_expr(expr.child, data)
        return (v >> expr.lo) & _mask(expr.hi - expr.lo + 1)
    if isinstance(expr, _Shift):
        v = eval_expr(expr.a, data)
        amt = expr.b.value
        if isinstance(expr, Shl):
            return (v << amt) & _mask(expr.width)
        if isinstance(expr, LShr):
            return v >> amt
        # AShr sign-fills from the top bit
        return (_to_signed(v, expr.width) >> amt) & _mask(expr.width)
    if isinstance(expr, _Binary):
        a = eval_expr(expr.a, data)
        b = eval_expr(expr.b, data)
        if isinstance(expr, And):
            return a & b
        if isinstance(expr, Or):
            return a | b
        if isinstance(expr, Xor):
            return a ^ b
        if isinstance(expr, Add):
            return (a + b) & _mask(expr.width)
        if isinstance(expr, Sub):
            return (a - b) & _mask(expr.width)
        return (a * b) & _mask(expr.width)
    raise TypeError(f"unknown node {type(expr).__name__}")


def serialize(expr: Expr) -> str:
    """Render as the s-expression wire form used in trace files."""
    if isinstance(expr, Read):
        return f"(read {expr.offset})"
    if isinstance(expr, Const):
        return f"(const {expr.value} {expr.width})"
    if isinstance(expr, ZExt):
        return f"(zext {expr.width} {serialize(expr.child)})"
    if isinstance(expr, SExt):
        return f"(sext {expr.width} {serialize(expr.child)})"
    if isinstance(expr, Extract):
        return f"(extract {expr.hi} {expr.lo} {serialize(expr.child)})"
    if isinstance(expr, _Binary):
        return f"({_BINOPS[type(expr)]} {serialize(expr.a)} {serialize(expr.b)})"
    raise TypeError(f"unknown node {type(expr).__name__}")


def _tokenize(text: str):
    return text.replace("(", " ( ").replace(")", " ) ").split()


def parse_sexpr(text: str) -> Expr:
    """Parse the s-expression wire form back into an expression tree."""
    tokens = _tokenize(text)
    pos = 0

    def fail(msg):
        raise TraceFormatError(f"bad expression: {msg} in {text!r}")

    def want(tok):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != tok:
            fail(f"expected {tok!r}")
        pos += 1

    def number():
        nonlocal pos
        if pos >= len(tokens):
            fail("truncated")
        try:
            v = int(tokens[pos])
        except ValueError:
            fail(f"expected integer, got {tokens[pos]!r}")
        pos += 1
        return v

    def node() -> Expr:
        nonlocal pos
        want("(")
        if pos >= len(tokens):
            fail("truncated")
        op = tokens[pos]
        pos += 1
        try:
            if op == "read":
                e = Read(number())
            elif op == "const":
                v = number()
                e = Const(v, number())
            elif op == "zext":
                w = number()
                e = ZExt(w, node())
            elif op == "sext":
                w = number()
                e = SExt(w, node())
            elif op == "extract":
                hi = number()
                lo = number()
                e = Extract(hi, lo, node())
            elif op in _BINOPS_BY_NAME:
                a = node()
                b = node()
                e = _BINOPS_BY_NAME[op](a, b)
            else:
                fail(f"unknown operator {op!r}")
        except ValueError as exc:
            raise TraceFormatError(str(exc)) from exc
        want(")")
        return e

    e = node()
    if pos != len(tokens):
        fail("trailing tokens")
    return e


def _first_read_offset(expr: Expr):
    if isinstance(expr, Read):
        return expr.offset
    if isinstance(expr, (ZExt, SExt, Extract)):
        return _first_read_offset(expr.child)
    if isinstance(expr, _Binary):
        a = _first_read_offset(expr.a)
        return a if a is not None else _first_read_offset(expr.b)
    return None


def canonicalize(expr: Expr) -> Expr:
    """Normalize operand order in Or-chains that assemble bytes into words.

    Compilers split and reorder the shift/or sequences that pack adjacent
    input bytes into a word; flattening same-width Or chains and ordering
    operands by their leading read offset gives equivalent expressions an
    identical tree.
    """
    if isinstance(expr, (Read, Const)):
        return expr
    if isinstance(expr, ZExt):
        return ZExt(expr.width, canonicalize(expr.child))
    if isinstance(expr, SExt):
        return SExt(expr.width, canonicalize(expr.child))
    if isinstance(expr, Extract):
        return Extract(expr.hi, expr.lo, canonicalize(expr.child))
    if isinstance(expr, Or):
        ops = []

        def flatten(e):
            if isinstance(e, Or) and e.width == expr.width:
                flatten(e.a)
                flatten(e.b)
            else:
                ops.append(canonicalize(e))

        flatten(expr.a)
        flatten(expr.b)
        ops.sort(key=lambda e: (_first_read_offset(e) is None,
                                _first_read_offset(e) or 0,
                                serialize(e)))
        out = ops[0]
        for e in ops[1:]:
            out = Or(out, e)
        return out
    if isinstance(expr, _Binary):
        return type(expr)(canonicalize(expr.a), canonicalize(expr.b))
    raise TypeError(f"unknown node {type(expr).__name__}")


@dataclass(frozen=True)
class ExprShape:
    """An expression with its read offsets abstracted into placeholders.

    ``key`` is the canonical serialization with every read offset replaced
    by ``@``; ``offsets`` lists the concrete offsets in left-to-right
    traversal order.  Substituting the offsets back reproduces the original
    expression exactly.
    """

    key: str
    offsets: tuple[int, ...]

    @property
    def arity(self) -> int:
        return len(self.offsets)


def abstract_expr(expr: Expr) -> ExprShape:
    offsets = []

    def walk(e: Expr) -> str:
        if isinstance(e, Read):
            offsets.append(e.offset)
            return "(read @)"
        if isinstance(e, Const):
            return serialize(e)
        if isinstance(e, ZExt):
            return f"(zext {e.width} {walk(e.child)})"
        if isinstance(e, SExt):
            return f"(sext {e.width} {walk(e.child)})"
        if isinstance(e, Extract):
            return f"(extract {e.hi} {e.lo} {walk(e.child)})"
        if isinstance(e, _Binary):
            return f"({_BINOPS[type(e)]} {walk(e.a)} {walk(e.b)})"
        raise TypeError(f"unknown node {type(e).__name__}")

    return ExprShape(walk(expr), tuple(offsets))


def substitute(key: str, offsets) -> Expr:
    """Rebuild an expression from a shape key and concrete offsets."""
    offsets = list(offsets)
    filled = []
    for tok in _tokenize(key):
        if tok == "@":
            if not offsets:
                raise ValueError("too few offsets for shape")
            filled.append(str(offsets.pop(0)))
        else:
            filled.append(tok)
    if offsets:
        raise ValueError("too many offsets for shape")
    return parse_sexpr(" ".join(filled))
