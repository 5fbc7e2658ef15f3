"""Command-line driver for the full pipeline.

Subcommands: gen-corpus, infer, eval, emit, viz.  Every run is
deterministic given its flags; the effective configuration is persisted
next to the results as run-config.json so any artifact can be
regenerated.  All intermediate artifacts are plain text.

Exit codes: 0 success, 2 usage error, 3 non-convergence, 4 oracle
mismatch.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import random
import statistics
import sys
from dataclasses import dataclass
from pathlib import Path

from . import cgen, store
from .errors import ConvergenceError, ParseforgeError
from .formats import (BmpSpec, FwcSpec, WavSpec, build_file, oracle_parse,
                      read_manifest, traced_parse, write_manifest)
from .generalize import estimate_header_size
from .trace import serialize_trace
from .tree import (expand_logs_until_converged, export_dot, test_parser,
                   tree_predicates)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_MISMATCH = 4


@dataclass
class RunConfig:
    corpus_dir: str = "corpus"
    out_dir: str = "out"
    seed: int = 0
    batch: int = 10
    strategy: str = "smallest"
    header_start: int = 32
    header_cap: int = 1024
    stride_min: int = 1
    stride_max: int = 8
    variant: str = "optimized"
    partial: bool = False

    def save(self, out_dir: Path):
        out_dir.mkdir(parents=True, exist_ok=True)
        text = json.dumps(dataclasses.asdict(self), indent=2) + "\n"
        (out_dir / "run-config.json").write_text(text)


def _config(args) -> RunConfig:
    cfg = RunConfig()
    for f in dataclasses.fields(RunConfig):
        if hasattr(args, f.name):
            setattr(cfg, f.name, getattr(args, f.name))
    return cfg


# ---------------------------------------------------------------------------
# Corpus generation


def _size(rng, lo, hi):
    return rng.randint(lo, hi)


FORMAT_SAMPLERS = {
    "wav8": lambda rng: WavSpec(rng.choice((1, 2)), 8, _size(rng, 4, 120)),
    "wav16": lambda rng: WavSpec(rng.choice((1, 2)), 16, _size(rng, 4, 120)),
    "bmp24": lambda rng: BmpSpec("V3", 24, False, width=_size(rng, 2, 40),
                                 height=_size(rng, 2, 40)),
    "bmp24-td": lambda rng: BmpSpec("V3", 24, True, width=_size(rng, 2, 40),
                                    height=_size(rng, 2, 40)),
    "bmp16-555": lambda rng: BmpSpec("V3", 16, False, layout16="555",
                                     width=_size(rng, 2, 40),
                                     height=_size(rng, 2, 40)),
    "bmp16-565": lambda rng: BmpSpec("V3", 16, False, layout16="565",
                                     width=_size(rng, 2, 40),
                                     height=_size(rng, 2, 40)),
    "bmp32-bgra": lambda rng: BmpSpec("V4", 32, False, order32="BGRA",
                                      width=_size(rng, 2, 40),
                                      height=_size(rng, 2, 40)),
    "bmp32-rgba-td": lambda rng: BmpSpec("V5", 32, True, order32="RGBA",
                                         width=_size(rng, 2, 40),
                                         height=_size(rng, 2, 40)),
    "fwc": lambda rng: FwcSpec(_size(rng, 1, 200), _size(rng, 1, 200)),
}

FORMAT_ALIASES = {"bmp16": "bmp16-555", "bmp32": "bmp32-bgra", "wav": "wav8",
                  "bmp24td": "bmp24-td"}


def cmd_gen_corpus(args) -> int:
    names = []
    for raw in args.formats.split(","):
        raw = raw.strip()
        name = FORMAT_ALIASES.get(raw, raw)
        if name not in FORMAT_SAMPLERS:
            known = ", ".join(sorted(FORMAT_SAMPLERS))
            print(f"unknown format {raw!r}; known: {known}", file=sys.stderr)
            return EXIT_USAGE
        names.append(name)
    corpus_dir = Path(args.corpus_dir)
    corpus_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in names:
        rng = random.Random(f"{args.seed}:{name}")
        for i in range(args.count):
            spec = FORMAT_SAMPLERS[name](rng)
            rel = f"{name}-{i:03d}.bin"
            data = build_file(spec, rng.randrange(1 << 30))
            (corpus_dir / rel).write_bytes(data)
            entries.append((rel, spec))
    (corpus_dir / "manifest.json").write_text(write_manifest(entries, args.seed))
    print(f"wrote {len(entries)} files + manifest to {corpus_dir}")
    return EXIT_OK


def load_corpus(corpus_dir: Path):
    """(file id, bytes) pairs per the manifest; ids are relative paths."""
    manifest = corpus_dir / "manifest.json"
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest.json in {corpus_dir}")
    _, files = read_manifest(manifest.read_text())
    return [(rel, (corpus_dir / rel).read_bytes()) for rel, _ in files]


# ---------------------------------------------------------------------------
# Inference


def _leaves_with_programs(tree):
    from .tree import Leaf, Node
    if isinstance(tree, Leaf):
        return [tree] if tree.program is not None else []
    return _leaves_with_programs(tree.yes) + _leaves_with_programs(tree.no)


def _write_infer_artifacts(out_dir: Path, conv, corpus):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "tree.json").write_text(store.dump_tree(conv.tree))
    (out_dir / "tree.dot").write_text(export_dot(conv.tree))
    for i, leaf in enumerate(_leaves_with_programs(conv.tree)):
        (out_dir / f"leaf-{i}.ir").write_text(leaf.program.serialize())
    logs_dir = out_dir / "logs"
    logs_dir.mkdir(exist_ok=True)
    for fid, log in conv.logs.items():
        safe = fid.replace("/", "_")
        (logs_dir / f"{safe}.trace").write_text(serialize_trace(log))
    lines = ["round header_size new_logs traced_bytes unparseable"]
    for r in conv.rounds:
        lines.append(f"{r.index} {r.header_size} {len(r.new_logs)} "
                     f"{r.traced_bytes} {r.unparseable}")
    lines.append("")
    lines.append(f"files: {len(corpus)}")
    lines.append(f"leaves: {len(_leaves_with_programs(conv.tree))}")
    lines.append(f"predicates: {len(tree_predicates(conv.tree))}")
    (out_dir / "rounds.txt").write_text("\n".join(lines) + "\n")


def _run_inference(corpus, cfg: RunConfig, seed=None):
    tracer = lambda fid, data: traced_parse(data, fid)[1]
    return expand_logs_until_converged(
        corpus, oracle_parse, tracer,
        batch=cfg.batch, strategy=cfg.strategy,
        seed=cfg.seed if seed is None else seed,
        header_sizes=estimate_header_size(cfg.header_start, cfg.header_cap),
        variant=cfg.variant,
        strides=tuple(range(cfg.stride_min, cfg.stride_max + 1)))


def cmd_infer(args) -> int:
    cfg = _config(args)
    out_dir = Path(cfg.out_dir)
    try:
        corpus = load_corpus(Path(cfg.corpus_dir))
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        conv = _run_inference(corpus, cfg)
    except ConvergenceError as exc:
        print(f"did not converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    report = test_parser(conv.tree, corpus, oracle_parse)
    cfg.save(out_dir)
    _write_infer_artifacts(out_dir, conv, corpus)
    if report.unparseable:
        print(f"converged tree fails oracle on {len(report.unparseable)} files",
              file=sys.stderr)
        return EXIT_MISMATCH
    print(f"converged in {len(conv.rounds)} rounds, "
          f"{conv.traced_bytes} bytes traced, "
          f"{len(_leaves_with_programs(conv.tree))} leaf parsers; "
          f"artifacts in {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Cross-validation


def cmd_eval(args) -> int:
    cfg = _config(args)
    out_dir = Path(cfg.out_dir)
    try:
        corpus = load_corpus(Path(cfg.corpus_dir))
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    lines = []
    accuracies = []
    for rep in range(args.repeats):
        rng = random.Random(f"{cfg.seed}:eval:{rep}")
        ids = [fid for fid, _ in corpus]
        rng.shuffle(ids)
        cut = max(1, int(len(ids) * args.split))
        train_ids = set(ids[:cut])
        train = [(f, d) for f, d in corpus if f in train_ids]
        test = [(f, d) for f, d in corpus if f not in train_ids]
        try:
            conv = _run_inference(train, cfg, seed=rep)
        except ConvergenceError as exc:
            lines.append(f"repeat {rep}: train did not converge ({exc})")
            accuracies.append(0.0)
            continue
        report = test_parser(conv.tree, test, oracle_parse)
        total = len(test)
        acc = len(report.parseable) / total if total else 1.0
        accuracies.append(acc)
        line = f"repeat {rep}: {len(report.parseable)}/{total} test files parse"
        if report.unparseable:
            line += " (failed: " + ", ".join(sorted(report.unparseable)) + ")"
        lines.append(line)
    lines.append("")
    lines.append(f"accuracy mean {statistics.mean(accuracies):.4f} "
                 f"min {min(accuracies):.4f} max {max(accuracies):.4f}")
    text = "\n".join(lines) + "\n"
    cfg.save(out_dir)
    (out_dir / "eval.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Emission and visualization


def _load_tree(path: str):
    p = Path(path)
    if p.is_dir():
        p = p / "tree.json"
    if not p.exists():
        print(f"no tree at {p}", file=sys.stderr)
        return None
    return store.load_tree(p.read_text())


def cmd_emit(args) -> int:
    tree = _load_tree(args.tree)
    if tree is None:
        return EXIT_USAGE
    try:
        source = cgen.emit_source(tree, partial=args.partial)
    except ParseforgeError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    Path(args.output).write_text(source)
    print(f"wrote {args.output}")
    if args.verify_corpus:
        try:
            corpus = load_corpus(Path(args.verify_corpus))
        except FileNotFoundError as exc:
            print(exc, file=sys.stderr)
            return EXIT_USAGE
        report = cgen.verify_emitted(tree, corpus)
        print(f"verify: {report.status} {report.detail}")
        if report.status == "mismatch":
            for m in report.mismatches:
                print(f"  {m}", file=sys.stderr)
            return EXIT_MISMATCH
        if report.status == "compile-error":
            return EXIT_MISMATCH
    return EXIT_OK


def cmd_viz(args) -> int:
    tree = _load_tree(args.tree)
    if tree is None:
        return EXIT_USAGE
    Path(args.output).write_text(export_dot(tree, args.title))
    print(f"wrote {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(p):
    p.add_argument("--corpus-dir", default="corpus")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--seed", type=int, default=0)


def _add_infer_flags(p):
    p.add_argument("--batch", type=int, default=10)
    p.add_argument("--strategy", default="smallest",
                   choices=("smallest", "largest", "random"))
    p.add_argument("--header-start", type=int, default=32)
    p.add_argument("--header-cap", type=int, default=1024)
    p.add_argument("--stride-min", type=int, default=1)
    p.add_argument("--stride-max", type=int, default=8)
    p.add_argument("--variant", default="optimized",
                   choices=("simplest", "conceptual", "optimized"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="parseforge",
        description="Infer drop-in binary parsers from execution traces.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a seeded test corpus")
    _add_common(p)
    p.add_argument("--formats", default=",".join(sorted(FORMAT_SAMPLERS)))
    p.add_argument("--count", type=int, default=5,
                   help="files per format")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("infer", help="infer a parser tree from a corpus")
    _add_common(p)
    _add_infer_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="repeated train/test split evaluation")
    _add_common(p)
    _add_infer_flags(p)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--repeats", type=int, default=20)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("emit", help="lower an inferred tree to C")
    p.add_argument("--tree", default="out",
                   help="tree.json or the infer output directory")
    p.add_argument("--output", default="parser.c")
    p.add_argument("--partial", action="store_true",
                   help="allow reject branches for uncovered regions")
    p.add_argument("--verify-corpus", default=None,
                   help="compile and compare against the interpreter")
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("viz", help="render the tree as DOT")
    p.add_argument("--tree", default="out")
    p.add_argument("--output", default="tree.dot")
    p.add_argument("--title", default="parser")
    p.set_defaults(func=cmd_viz)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
