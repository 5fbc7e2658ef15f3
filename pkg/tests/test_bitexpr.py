"""Byte expression IR: evaluation, wire form, canonical form, shapes."""

import pytest
from hypothesis import given, strategies as st

from parseforge import bitexpr as bx
from parseforge.errors import TraceEvalError, TraceFormatError

DATA = bytes(range(7, 7 + 32))


def le16(off):
    return bx.Or(bx.ZExt(16, bx.Read(off)),
                 bx.Shl(bx.ZExt(16, bx.Read(off + 1)), bx.Const(8, 16)))


def test_read_and_const():
    assert bx.eval_expr(bx.Read(3), DATA) == DATA[3]
    assert bx.eval_expr(bx.Const(0x1FF, 8), DATA) == 0xFF  # masked to width


def test_le16_assembly():
    assert bx.eval_expr(le16(0), DATA) == DATA[0] | (DATA[1] << 8)


def test_sext_zext():
    neg = bx.Const(0x80, 8)
    assert bx.eval_expr(bx.SExt(16, neg), DATA) == 0xFF80
    assert bx.eval_expr(bx.ZExt(16, neg), DATA) == 0x0080


def test_extract_width_fits_span():
    e = bx.Extract(11, 4, bx.Const(0xABCD, 16))
    assert e.width == 8
    assert bx.eval_expr(e, DATA) == 0xBC


def test_shifts():
    v = bx.Const(0x8001, 16)
    assert bx.eval_expr(bx.LShr(v, bx.Const(1, 16)), DATA) == 0x4000
    assert bx.eval_expr(bx.AShr(v, bx.Const(1, 16)), DATA) == 0xC000
    assert bx.eval_expr(bx.Shl(v, bx.Const(1, 16)), DATA) == 0x0002


def test_arith_wraps_at_width():
    a = bx.Const(0xFF, 8)
    assert bx.eval_expr(bx.Add(a, bx.Const(1, 8)), DATA) == 0
    assert bx.eval_expr(bx.Sub(bx.Const(0, 8), bx.Const(1, 8)), DATA) == 0xFF
    assert bx.eval_expr(bx.Mul(a, a), DATA) == (0xFF * 0xFF) & 0xFF


def test_width_mismatch_rejected():
    with pytest.raises(ValueError):
        bx.Add(bx.Const(1, 8), bx.Const(1, 16))
    with pytest.raises(ValueError):
        bx.ZExt(8, bx.Const(1, 16))
    with pytest.raises(ValueError):
        bx.Extract(16, 0, bx.Const(1, 16))


def test_read_past_end():
    with pytest.raises(TraceEvalError):
        bx.eval_expr(bx.Read(99), DATA)


def test_parse_rejects_garbage():
    for text in ["", "(frob 1)", "(read)", "(add (read 0))"]:
        with pytest.raises(TraceFormatError):
            bx.parse_sexpr(text)


# --- wire form ---


def exprs(max_depth=3):
    base = st.one_of(
        st.integers(0, 30).map(bx.Read),
        st.tuples(st.integers(0, 2 ** 16), st.sampled_from((8, 16, 32))).map(
            lambda t: bx.Const(*t)))

    def extend(children):
        def widen(cls):
            return children.flatmap(lambda c: st.sampled_from(
                [w for w in bx.WIDTHS if w >= c.width]).map(lambda w: cls(w, c)))

        same_width = st.tuples(children, children).filter(
            lambda t: t[0].width == t[1].width)
        return st.one_of(
            widen(bx.ZExt), widen(bx.SExt),
            children.flatmap(lambda c: st.tuples(
                st.integers(0, c.width - 1), st.integers(0, c.width - 1)).map(
                lambda t: bx.Extract(max(t), min(t), c))),
            same_width.map(lambda t: bx.Or(*t)),
            same_width.map(lambda t: bx.Add(*t)),
            same_width.map(lambda t: bx.Xor(*t)),
            children.flatmap(lambda c: st.integers(0, c.width - 1).map(
                lambda k: bx.Shl(c, bx.Const(k, c.width)))),
        )

    return st.recursive(base, extend, max_leaves=8)


@given(exprs())
def test_serialize_parse_round_trip(e):
    text = bx.serialize(e)
    assert bx.parse_sexpr(text) == e


@given(exprs())
def test_canonicalize_is_idempotent_and_value_preserving(e):
    c = bx.canonicalize(e)
    assert bx.canonicalize(c) == c
    assert bx.eval_expr(c, DATA) == bx.eval_expr(e, DATA)


@given(exprs())
def test_shape_substitution_restores_canonical_form(e):
    c = bx.canonicalize(e)
    shape = bx.abstract_expr(c)
    assert bx.substitute(shape.key, shape.offsets) == c


def test_shape_erases_only_offsets():
    a = bx.abstract_expr(le16(0))
    b = bx.abstract_expr(le16(10))
    assert a.key == b.key
    assert a.offsets != b.offsets
    assert "@" in a.key
