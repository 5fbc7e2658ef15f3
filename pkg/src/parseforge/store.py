"""JSON round-trip for programs and parser trees.

The CLI keeps every intermediate artifact as plain text; these helpers
give loop programs and decision trees a stable machine-readable form so
an inferred tree can be reloaded for emission or visualization without
rerunning inference.
"""

from __future__ import annotations

import json

from .ir import (BodyStmt, Decl, IrProgram, Lit, LoopGroup, LoopLevel,
                 MemberWrite, Ref, SymAdd, SymExpr, SymField, SymMul, SymNeg,
                 SymPad4)
from .tree import Leaf, Node, ParserTree, Predicate


def sym_to_obj(e: SymExpr):
    if isinstance(e, Lit):
        return ["lit", e.value]
    if isinstance(e, Ref):
        return ["ref", e.name]
    if isinstance(e, SymNeg):
        return ["neg", sym_to_obj(e.a)]
    if isinstance(e, SymAdd):
        return ["add", sym_to_obj(e.a), sym_to_obj(e.b)]
    if isinstance(e, SymMul):
        return ["mul", sym_to_obj(e.a), sym_to_obj(e.b)]
    if isinstance(e, SymPad4):
        return ["pad4", sym_to_obj(e.a)]
    if isinstance(e, SymField):
        return ["field", e.offset, e.width, e.signed, e.scale]
    raise TypeError(f"unknown value expression {type(e).__name__}")


def sym_from_obj(o) -> SymExpr:
    tag = o[0]
    if tag == "lit":
        return Lit(o[1])
    if tag == "ref":
        return Ref(o[1])
    if tag == "neg":
        return SymNeg(sym_from_obj(o[1]))
    if tag == "add":
        return SymAdd(sym_from_obj(o[1]), sym_from_obj(o[2]))
    if tag == "mul":
        return SymMul(sym_from_obj(o[1]), sym_from_obj(o[2]))
    if tag == "pad4":
        return SymPad4(sym_from_obj(o[1]))
    if tag == "field":
        return SymField(o[1], o[2], o[3], o[4])
    raise ValueError(f"unknown expression tag {tag!r}")


def program_to_obj(p: IrProgram) -> dict:
    return {
        "decls": [{"name": d.name, "value": sym_to_obj(d.value),
                   "exemplar": d.exemplar} for d in p.decls],
        "groups": [{
            "levels": [sym_to_obj(l.count) for l in g.levels],
            "body": [{
                "array": s.array,
                "label": s.label,
                "members": [[m.out_delta, m.shape_key, list(m.read_deltas)]
                            for m in s.members],
                "out_base": sym_to_obj(s.out_base),
                "out_steps": [sym_to_obj(e) for e in s.out_steps],
                "in_base": sym_to_obj(s.in_base),
                "in_steps": [sym_to_obj(e) for e in s.in_steps],
                "in_addends": [sym_to_obj(e) for e in s.in_addends],
            } for s in g.body],
        } for g in p.groups],
    }


def program_from_obj(o: dict) -> IrProgram:
    decls = [Decl(d["name"], sym_from_obj(d["value"]), d["exemplar"])
             for d in o["decls"]]
    groups = []
    for g in o["groups"]:
        levels = [LoopLevel(sym_from_obj(c)) for c in g["levels"]]
        body = [BodyStmt(
            array=s["array"],
            members=tuple(MemberWrite(m[0], m[1], tuple(m[2]))
                          for m in s["members"]),
            out_base=sym_from_obj(s["out_base"]),
            out_steps=tuple(sym_from_obj(e) for e in s["out_steps"]),
            in_base=sym_from_obj(s["in_base"]),
            in_steps=tuple(sym_from_obj(e) for e in s["in_steps"]),
            in_addends=tuple(sym_from_obj(e) for e in s["in_addends"]),
            label=s["label"],
        ) for s in g["body"]]
        groups.append(LoopGroup(levels, body))
    return IrProgram(decls, groups)


def tree_to_obj(t: ParserTree):
    if isinstance(t, Leaf):
        prog = None if t.program is None else program_to_obj(t.program)
        return {"leaf": {"program": prog, "note": t.note}}
    return {"pred": [t.pred.index, t.pred.value],
            "yes": tree_to_obj(t.yes),
            "no": tree_to_obj(t.no)}


def tree_from_obj(o) -> ParserTree:
    if "leaf" in o:
        prog = o["leaf"]["program"]
        return Leaf(None if prog is None else program_from_obj(prog),
                    o["leaf"].get("note", ""))
    i, v = o["pred"]
    return Node(Predicate(i, v), tree_from_obj(o["yes"]), tree_from_obj(o["no"]))


def dump_tree(t: ParserTree) -> str:
    return json.dumps(tree_to_obj(t), indent=1) + "\n"


def load_tree(text: str) -> ParserTree:
    return tree_from_obj(json.loads(text))
