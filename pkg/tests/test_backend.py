"""C emission: lowering totality, structural checks, compile-and-compare."""

import re
import subprocess

import pytest

from parseforge import bitexpr as bx
from parseforge.cgen import (emit_source, find_toolchain, lower_bitexpr,
                             lower_sym, verify_emitted)
from parseforge.errors import EmitError
from parseforge.formats import (BmpSpec, FwcSpec, WavSpec, build_file,
                                oracle_parse, traced_parse)
from parseforge.ir import (Lit, Ref, SymAdd, SymField, SymMul, SymNeg, SymPad4)
from parseforge.tree import Leaf, Node, Predicate, expand_logs_until_converged

needs_cc = pytest.mark.skipif(find_toolchain() is None,
                              reason="no C toolchain available")


def converged_tree():
    corpus = [
        ("wav", build_file(WavSpec(2, 16, 20), 1)),
        ("bmp", build_file(BmpSpec("V3", 24, False, width=61, height=47), 2)),
        ("fwc", build_file(FwcSpec(33, 17), 3)),
    ]
    conv = expand_logs_until_converged(
        corpus, oracle_parse, lambda fid, d: traced_parse(d, fid)[1],
        header_sizes=[64, 128])
    return conv.tree, corpus


# --- lowering totality ---


def kitchen_sink_expr():
    """One expression containing every byte-expression node kind."""
    r = bx.Read(0)
    word = bx.Or(bx.ZExt(16, r), bx.Shl(bx.ZExt(16, bx.Read(1)), bx.Const(8, 16)))
    mixed = bx.Xor(bx.And(word, bx.Const(0x0FFF, 16)),
                   bx.Sub(word, bx.Const(3, 16)))
    shifted = bx.Add(bx.LShr(mixed, bx.Const(2, 16)),
                     bx.AShr(bx.SExt(16, r), bx.Const(1, 16)))
    wide = bx.Mul(bx.ZExt(32, shifted), bx.ZExt(32, bx.Extract(11, 4, word)))
    return bx.Extract(15, 2, wide)


def test_every_expr_kind_lowers():
    text = lower_bitexpr(kitchen_sink_expr(), "base")
    assert "read_in(in, in_len, base)" in text
    for fragment in ("&", "|", "^", "+", "-", "*", "<<", ">>", "(int16_t)"):
        assert fragment in text


def test_every_decl_kind_lowers():
    e = SymAdd(SymNeg(SymMul(Ref("A"), Lit(3))),
               SymPad4(SymField(18, 32, True)))
    text = lower_sym(e)
    assert text == "(-((A * 3LL)) + pad4(read_le(in, in_len, 18, 4, 1)))"
    assert lower_sym(SymField(40, 32, True, scale=4)) == \
        "floor_div(read_le(in, in_len, 40, 4, 1), 4)"


def test_wide_lowering_uses_two_limb_integers():
    e = bx.ZExt(128, bx.Const(1, 64))
    assert "__int128" in lower_bitexpr(e, "base")


# --- structural checks on emitted source ---


def test_reject_leaves_require_partial_flag():
    tree = Node(Predicate(0, 1), Leaf(None), Leaf(None))
    with pytest.raises(EmitError):
        emit_source(tree)
    with pytest.raises(EmitError):
        emit_source(tree, partial=True)     # nothing left to emit at all


def test_partial_tree_emits_reject_branch():
    full, _ = converged_tree()
    tree = Node(Predicate(0, ord("R")), full, Leaf(None))
    with pytest.raises(EmitError):
        emit_source(tree)
    source = emit_source(tree, partial=True)
    assert "return -1;" in source


def test_no_raw_subscripts_outside_runtime():
    tree, _ = converged_tree()
    source = emit_source(tree)
    region = source.split("/* parsers-begin */")[1].split("/* parsers-end */")[0]
    assert "[" not in region and "]" not in region
    # every input read and output write goes through a helper
    assert "read_in(" in region and "write_array(" in region


def test_emission_is_deterministic():
    tree, _ = converged_tree()
    assert emit_source(tree) == emit_source(tree)


# --- differential testing against the interpreter ---


@needs_cc
def test_emitted_parser_matches_interpreter():
    tree, corpus = converged_tree()
    report = verify_emitted(tree, corpus)
    assert report.status == "ok", report.detail


def test_verify_reports_skip_without_toolchain():
    tree, corpus = converged_tree()
    report = verify_emitted(tree, corpus, toolchain="/no/such/compiler")
    assert report.status in ("compile-error", "skipped")


@needs_cc
def test_runtime_helpers_match_reference_semantics(tmp_path):
    """floor_div and pad4 in emitted C agree with the oracle-side helpers."""
    from parseforge.generalize import pad4 as py_pad4
    from parseforge.cgen import _RUNTIME, OUTPUT_CAP
    harness = (
        "#include <stdint.h>\n#include <stdio.h>\n#include <stdlib.h>\n"
        "#include <string.h>\n"
        f"#define OUTPUT_CAP {OUTPUT_CAP}LL\n" + _RUNTIME +
        "int main(void) {\n"
        "    for (long long a = -20; a <= 20; a++) {\n"
        "        printf(\"%lld %lld\\n\", pad4(a),\n"
        "               a ? floor_div(100, a) : 0);\n"
        "    }\n"
        "    return 0;\n"
        "}\n")
    src = tmp_path / "h.c"
    src.write_text(harness)
    exe = tmp_path / "h"
    subprocess.run([find_toolchain(), "-O1", "-o", str(exe), str(src)],
                   check=True, capture_output=True)
    out = subprocess.run([str(exe)], capture_output=True, text=True,
                         check=True).stdout.splitlines()
    for a, line in zip(range(-20, 21), out):
        pad, fdiv = map(int, line.split())
        assert pad == py_pad4(a)
        assert fdiv == (100 // a if a else 0)


@needs_cc
def test_lowered_expressions_evaluate_like_the_ir(tmp_path):
    """Differential check of the full lowering table on synthetic inputs."""
    data = bytes((7 * i + 3) % 256 for i in range(16))
    cases = [
        kitchen_sink_expr(),
        bx.SExt(64, bx.Read(2)),
        bx.AShr(bx.SExt(32, bx.Read(3)), bx.Const(4, 32)),
        bx.Sub(bx.Const(0, 8), bx.Read(5)),
        bx.Extract(6, 1, bx.Read(4)),
        bx.Mul(bx.ZExt(16, bx.Read(0)), bx.ZExt(16, bx.Read(1))),
    ]
    from parseforge.cgen import _RUNTIME, OUTPUT_CAP, _UTYPE
    body = []
    for i, e in enumerate(cases):
        expr = lower_bitexpr(e, "0")
        body.append(f"    printf(\"%llu\\n\", "
                    f"(unsigned long long)({_UTYPE[min(e.width, 64)]})({expr}));")
    harness = (
        "#include <stdint.h>\n#include <stdio.h>\n#include <stdlib.h>\n"
        "#include <string.h>\n"
        f"#define OUTPUT_CAP {OUTPUT_CAP}LL\n" + _RUNTIME +
        "int main(void) {\n"
        "    uint8_t in_bytes[16] = {" +
        ", ".join(str(b) for b in data) + "};\n"
        "    const uint8_t *in = in_bytes; long long in_len = 16;\n" +
        "\n".join(body) +
        "\n    return 0;\n}\n")
    src = tmp_path / "e.c"
    src.write_text(harness)
    exe = tmp_path / "e"
    subprocess.run([find_toolchain(), "-O1", "-o", str(exe), str(src)],
                   check=True, capture_output=True)
    out = subprocess.run([str(exe)], capture_output=True, text=True,
                         check=True).stdout.splitlines()
    for e, line in zip(cases, out):
        want = bx.eval_expr(e, data) & ((1 << 64) - 1)
        assert int(line) == want, bx.serialize(e)
