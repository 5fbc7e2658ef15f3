"""Standalone C emission for converged parser trees.

The emitted translation unit is self-contained: a small runtime
(bounded input reads, growing output arrays), one function per tree
leaf, a predicate dispatcher, and a main() that writes the parsed
buffers as a blob plus a text index, matching the reference output
serialization.

Inside the generated parser functions every input read and output write
goes through a runtime helper; the section between the parsers-begin
and parsers-end markers contains no direct subscripting at all, which
the test suite checks structurally.
"""

from __future__ import annotations

import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from shutil import which

from . import bitexpr
from .errors import EmitError
from .ir import (IrProgram, Lit, Ref, SymAdd, SymExpr, SymField, SymMul,
                 SymNeg, SymPad4)
from .tree import Leaf, Node, ParserTree, run_tree

OUTPUT_CAP = 1 << 26

_UTYPE = {8: "uint8_t", 16: "uint16_t", 32: "uint32_t", 64: "uint64_t",
          128: "unsigned __int128"}
_STYPE = {8: "int8_t", 16: "int16_t", 32: "int32_t", 64: "int64_t",
          128: "__int128"}

_RUNTIME = r"""
/* runtime-begin */
typedef struct { uint8_t *data; long long len; long long cap; } Array;

static void fail(const char *kind, long long detail) {
    fprintf(stderr, "error: %s (%lld)\n", kind, detail);
    exit(3);
}

static uint8_t read_in(const uint8_t *in, long long in_len, long long off) {
    if (off < 0 || off >= in_len) fail("read-past-end", off);
    return in[off];
}

static int try_read_byte(const uint8_t *in, long long in_len, long long off,
                         uint8_t *out) {
    if (off < 0 || off >= in_len) return 0;
    *out = in[off];
    return 1;
}

static void write_array(Array *a, long long idx, uint8_t v) {
    if (idx < 0) fail("negative-output-index", idx);
    if (idx >= OUTPUT_CAP) fail("output-cap", idx);
    if (idx >= a->cap) {
        long long newSize = a->cap;
        while (idx >= newSize) newSize = (newSize + 1) * 2;
        uint8_t *grown = realloc(a->data, (size_t)newSize);
        if (!grown) fail("out-of-memory", newSize);
        memset(grown + a->cap, 0, (size_t)(newSize - a->cap));
        a->data = grown;
        a->cap = newSize;
    }
    if (idx + 1 > a->len) a->len = idx + 1;
    a->data[idx] = v;
}

static long long read_le(const uint8_t *in, long long in_len, long long off,
                         int nbytes, int is_signed) {
    unsigned long long v = 0;
    for (int i = 0; i < nbytes; i++)
        v |= (unsigned long long)read_in(in, in_len, off + i) << (8 * i);
    if (is_signed && nbytes < 8) {
        unsigned long long top = 1ULL << (8 * nbytes - 1);
        if (v & top) v |= ~((top << 1) - 1);
    }
    return (long long)v;
}

static long long floor_div(long long a, long long b) {
    long long q = a / b;
    if (a % b != 0 && ((a < 0) != (b < 0))) q--;
    return q;
}

static long long pad4(long long x) {
    return x >= 0 ? (x + 3) & ~3LL : -((-x + 3) & ~3LL);
}
/* runtime-end */
"""


# ---------------------------------------------------------------------------
# Expression lowering


def lower_bitexpr(e: bitexpr.Expr, read_base: str) -> str:
    """C expression for a byte expression; reads go through read_in."""
    u = _UTYPE[e.width]
    if isinstance(e, bitexpr.Read):
        off = read_base if e.offset == 0 else f"{read_base} + {e.offset}"
        return f"read_in(in, in_len, {off})"
    if isinstance(e, bitexpr.Const):
        if e.width == 128:
            hi, lo = e.value >> 64, e.value & ((1 << 64) - 1)
            return f"(((unsigned __int128){hi}ULL << 64) | {lo}ULL)"
        return f"(({u}){e.value}ULL)"
    if isinstance(e, bitexpr.ZExt):
        return f"({u})({lower_bitexpr(e.child, read_base)})"
    if isinstance(e, bitexpr.SExt):
        # sign extension: signed cast at the child width, then widen
        s_child = _STYPE[e.child.width]
        return f"({u})({_STYPE[e.width]})({s_child})({lower_bitexpr(e.child, read_base)})"
    if isinstance(e, bitexpr.Extract):
        span = e.hi - e.lo + 1
        inner = f"({lower_bitexpr(e.child, read_base)})"
        if e.lo:
            inner = f"({inner} >> {e.lo})"
        if span < e.width:
            if span > 64:
                mask = (f"((((unsigned __int128)1 << {span - 64}) - 1) << 64 "
                        f"| 0xffffffffffffffffULL)")
            else:
                mask = f"{(1 << span) - 1}ULL"
            return f"({u})({inner} & {mask})"
        return f"({u}){inner}"
    if isinstance(e, bitexpr._Shift):
        a = lower_bitexpr(e.a, read_base)
        amt = e.b.value
        if isinstance(e, bitexpr.Shl):
            return f"({u})(({a}) << {amt})"
        if isinstance(e, bitexpr.LShr):
            return f"({u})(({a}) >> {amt})"
        return f"({u})(({_STYPE[e.width]})({a}) >> {amt})"
    if isinstance(e, bitexpr._Binary):
        op = {bitexpr.And: "&", bitexpr.Or: "|", bitexpr.Xor: "^",
              bitexpr.Add: "+", bitexpr.Sub: "-", bitexpr.Mul: "*"}[type(e)]
        a = lower_bitexpr(e.a, read_base)
        b = lower_bitexpr(e.b, read_base)
        return f"({u})(({a}) {op} ({b}))"
    raise EmitError(f"no lowering for {type(e).__name__}")


def lower_sym(e: SymExpr) -> str:
    """C expression (long long arithmetic) for a declaration value."""
    if isinstance(e, Lit):
        return f"{e.value}LL"
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, SymNeg):
        return f"-({lower_sym(e.a)})"
    if isinstance(e, SymAdd):
        return f"({lower_sym(e.a)} + {lower_sym(e.b)})"
    if isinstance(e, SymMul):
        return f"({lower_sym(e.a)} * {lower_sym(e.b)})"
    if isinstance(e, SymPad4):
        return f"pad4({lower_sym(e.a)})"
    if isinstance(e, SymField):
        read = (f"read_le(in, in_len, {e.offset}, {e.width // 8}, "
                f"{1 if e.signed else 0})")
        if e.scale != 1:
            return f"floor_div({read}, {e.scale})"
        return read
    raise EmitError(f"no lowering for {type(e).__name__}")


# ---------------------------------------------------------------------------
# Program and tree emission


def _emit_program(program: IrProgram, fn: str, array_ids: dict[str, int]) -> list[str]:
    out = [f"static void {fn}(const uint8_t *in, long long in_len) {{"]
    for d in program.decls:
        line = f"    long long {d.name} = {lower_sym(d.value)};"
        if d.exemplar is not None and not isinstance(d.value, Lit):
            line += f"  /* {d.exemplar} */"
        out.append(line)
    for gi, g in enumerate(program.groups):
        idx = [f"i{gi}_{l}" for l in range(len(g.levels))]
        indent = "    "
        for l, level in enumerate(g.levels):
            n = f"n{gi}_{l}"
            out.append(f"{indent}long long {n} = {lower_sym(level.count)};")
            out.append(f"{indent}if ({n} < 0) {n} = 0;")
            out.append(f"{indent}for (long long {idx[l]} = 0; {idx[l]} < {n}; "
                       f"{idx[l]}++) {{")
            indent += "    "
        for s in g.body:
            off_terms = [lower_sym(s.in_base)]
            out_terms = [lower_sym(s.out_base)]
            for l in range(len(g.levels)):
                term = idx[l]
                if not (isinstance(s.in_addends[l], Lit)
                        and s.in_addends[l].value == 0):
                    term = f"({idx[l]} + {lower_sym(s.in_addends[l])})"
                off_terms.append(f"{term} * {lower_sym(s.in_steps[l])}")
                out_terms.append(f"{idx[l]} * {lower_sym(s.out_steps[l])}")
            off_v = f"off_{gi}_{s.label}"
            out_v = f"out_{gi}_{s.label}"
            out.append(f"{indent}long long {off_v} = {' + '.join(off_terms)};")
            out.append(f"{indent}long long {out_v} = {' + '.join(out_terms)};")
            target = f"arrays + {array_ids[s.array]}"
            for m in s.members:
                expr = bitexpr.substitute(m.shape_key, m.read_deltas)
                value = lower_bitexpr(expr, off_v)
                pos = out_v if m.out_delta == 0 else f"{out_v} + {m.out_delta}"
                out.append(f"{indent}write_array({target}, {pos}, "
                           f"(uint8_t)({value}));")
        for l in range(len(g.levels) - 1, -1, -1):
            out.append("    " + "    " * l + "}")
    out.append("}")
    return out


def _leaves(tree: ParserTree) -> list[Leaf]:
    if isinstance(tree, Leaf):
        return [tree]
    return _leaves(tree.yes) + _leaves(tree.no)


def _emit_dispatch(tree: ParserTree, leaf_ids: dict[int, int], out, indent="    "):
    if isinstance(tree, Leaf):
        out.append(f"{indent}return {leaf_ids.get(id(tree), -1)};")
        return
    p = tree.pred
    out.append(f"{indent}if (try_read_byte(in, in_len, {p.index}, &b) "
               f"&& b == {p.value}) {{")
    _emit_dispatch(tree.yes, leaf_ids, out, indent + "    ")
    out.append(f"{indent}}} else {{")
    _emit_dispatch(tree.no, leaf_ids, out, indent + "    ")
    out.append(f"{indent}}}")


def emit_source(tree: ParserTree, partial: bool = False) -> str:
    """Lower a parser tree to a single C translation unit."""
    leaves = _leaves(tree)
    parsers = [l for l in leaves if l.program is not None]
    if not partial and len(parsers) != len(leaves):
        raise EmitError("tree has reject leaves; emit with partial=True")
    if not parsers:
        raise EmitError("tree has no parsers to emit")

    names: list[str] = []
    for leaf in parsers:
        for a in leaf.program.arrays():
            if a not in names:
                names.append(a)
    array_ids = {a: i for i, a in enumerate(sorted(names))}
    leaf_ids = {id(leaf): i for i, leaf in enumerate(parsers)}

    lines = [
        "/* generated drop-in parser: <input> <output-prefix> */",
        "#include <stdint.h>",
        "#include <stdio.h>",
        "#include <stdlib.h>",
        "#include <string.h>",
        "",
        f"#define OUTPUT_CAP (1LL << {OUTPUT_CAP.bit_length() - 1})",
        _RUNTIME,
        f"static Array arrays[{len(array_ids)}];",
        "",
        "/* parsers-begin */",
    ]
    for leaf in parsers:
        lines.extend(_emit_program(leaf.program, f"parse_leaf_{leaf_ids[id(leaf)]}",
                                   array_ids))
        lines.append("")
    lines.append("static int dispatch(const uint8_t *in, long long in_len) {")
    lines.append("    uint8_t b;")
    lines.append("    (void)b;")
    body: list[str] = []
    _emit_dispatch(tree, leaf_ids, body)
    lines.extend(body)
    lines.append("}")
    lines.append("/* parsers-end */")
    lines.append("")

    # per-leaf output array lists, in sorted name order
    for leaf in parsers:
        ids = sorted(array_ids[a] for a in leaf.program.arrays())
        k = leaf_ids[id(leaf)]
        lines.append(f"static const int leaf_{k}_arrays[] = "
                     f"{{{', '.join(map(str, ids))}}};")
    names_init = ", ".join(f'"{a}"' for a in sorted(array_ids))
    lines.append(f"static const char *array_names[] = {{{names_init}}};")
    lines.append("")

    dispatch_cases = []
    for leaf in parsers:
        k = leaf_ids[id(leaf)]
        dispatch_cases.append(
            f"    case {k}: parse_leaf_{k}(in, in_len); "
            f"chosen = leaf_{k}_arrays; "
            f"nchosen = {len(leaf.program.arrays())}; break;")
    lines.append(_MAIN_TEMPLATE.replace("@CASES@", "\n".join(dispatch_cases)))
    return "\n".join(lines)


_MAIN_TEMPLATE = r"""/* driver-begin */
int main(int argc, char **argv) {
    if (argc != 3) {
        fprintf(stderr, "usage: %s <input> <output-prefix>\n", argv[0]);
        return 2;
    }
    FILE *fp = fopen(argv[1], "rb");
    if (!fp) { perror(argv[1]); return 2; }
    fseek(fp, 0, SEEK_END);
    long long in_len = ftell(fp);
    fseek(fp, 0, SEEK_SET);
    uint8_t *in = malloc(in_len ? (size_t)in_len : 1);
    if (!in || fread(in, 1, (size_t)in_len, fp) != (size_t)in_len) {
        fprintf(stderr, "error: short read on %s\n", argv[1]);
        return 2;
    }
    fclose(fp);

    const int *chosen = NULL;
    int nchosen = 0;
    switch (dispatch(in, in_len)) {
@CASES@
    default: fail("no-parser", -1);
    }

    char path[4096];
    snprintf(path, sizeof path, "%s.bin", argv[2]);
    FILE *blob = fopen(path, "wb");
    snprintf(path, sizeof path, "%s.idx", argv[2]);
    FILE *index = fopen(path, "w");
    if (!blob || !index) { perror(argv[2]); return 2; }
    long long offset = 0;
    for (int i = 0; i < nchosen; i++) {
        Array *a = arrays + chosen[i];
        fwrite(a->data, 1, (size_t)a->len, blob);
        fprintf(index, "%s %lld %lld\n", array_names[chosen[i]], offset, a->len);
        offset += a->len;
    }
    fclose(blob);
    fclose(index);
    return 0;
}
/* driver-end */"""


# ---------------------------------------------------------------------------
# Optional compile-and-compare verification


@dataclass
class VerifyReport:
    status: str                         # ok / skipped / compile-error / mismatch
    detail: str = ""
    mismatches: list[str] = field(default_factory=list)


def find_toolchain():
    for cc in ("cc", "gcc", "clang"):
        path = which(cc)
        if path:
            return path
    return None


def verify_emitted(tree: ParserTree, corpus, toolchain=None) -> VerifyReport:
    """Compile the emitted source and compare against the interpreter."""
    toolchain = toolchain or find_toolchain()
    if toolchain is None:
        return VerifyReport("skipped", "no C toolchain found")
    source = emit_source(tree)
    with tempfile.TemporaryDirectory(prefix="parseforge-cc-") as tmp:
        tmp = Path(tmp)
        (tmp / "parser.c").write_text(source)
        try:
            proc = subprocess.run(
                [toolchain, "-O1", "-o", str(tmp / "parser"),
                 str(tmp / "parser.c")],
                capture_output=True, text=True)
        except OSError as exc:
            return VerifyReport("skipped", f"cannot run {toolchain}: {exc}")
        if proc.returncode != 0:
            return VerifyReport("compile-error", proc.stderr[-2000:])
        mismatches = []
        for fid, data in corpus:
            (tmp / "input").write_bytes(data)
            proc = subprocess.run(
                [str(tmp / "parser"), str(tmp / "input"), str(tmp / "out")],
                capture_output=True, text=True)
            if proc.returncode != 0:
                mismatches.append(f"{fid}: exit {proc.returncode} {proc.stderr.strip()}")
                continue
            blob = (tmp / "out.bin").read_bytes()
            index = (tmp / "out.idx").read_text()
            got = {}
            for line in index.splitlines():
                name, off, length = line.split()
                got[name] = blob[int(off):int(off) + int(length)]
            want = run_tree(tree, data)
            if got != want:
                mismatches.append(f"{fid}: output differs")
        if mismatches:
            return VerifyReport("mismatch", f"{len(mismatches)} files",
                                mismatches)
    return VerifyReport("ok", f"{len(corpus)} files byte-identical")
