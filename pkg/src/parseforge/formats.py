"""Deterministic corpora in three binary formats, with traced reference parsers.

Each format has a builder (spec -> file bytes), an oracle parser
(file -> named output buffers), and a traced parser that additionally
records one expression per output byte.  The traced parser stands in for
an instrumented third-party application: its log carries no control-flow
information, only offsets and expressions.

Payload bytes come from a fixed 64-bit linear congruential generator
(Knuth's MMIX multiplier 6364136223846793005, increment 1442695040888963407,
output = top byte of the state), so corpora are reproducible across
platforms and languages.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

from .bitexpr import (AShr, And, Const, Expr, Extract, LShr, Mul, Or, Read,
                      SExt, Shl, Sub, ZExt, canonicalize)
from .errors import FormatError, GenerationError
from .trace import TraceEntry, TraceLog

OracleOutput = dict[str, bytes]

_LCG_MUL = 6364136223846793005
_LCG_ADD = 1442695040888963407
_U64 = (1 << 64) - 1


def lcg_bytes(seed: int, count: int) -> bytes:
    """Deterministic payload stream; one byte per LCG step (top byte)."""
    state = (seed * _LCG_MUL + _LCG_ADD) & _U64
    out = bytearray()
    for _ in range(count):
        state = (state * _LCG_MUL + _LCG_ADD) & _U64
        out.append(state >> 56)
    return bytes(out)


def pad4(x: int) -> int:
    """Round the magnitude up to a multiple of 4, preserving sign."""
    if x >= 0:
        return (x + 3) & ~3
    return -((-x + 3) & ~3)


# ---------------------------------------------------------------------------
# Format specs


@dataclass(frozen=True)
class WavSpec:
    channels: int = 1
    bits: int = 8
    samples: int = 1
    sample_rate: int = 8000

    kind = "wav"

    def check(self):
        if self.channels not in (1, 2):
            raise GenerationError(f"wav: channels must be 1 or 2, got {self.channels}")
        if self.bits not in (8, 16):
            raise GenerationError(f"wav: bits must be 8 or 16, got {self.bits}")
        if self.samples < 1:
            raise GenerationError("wav: sample count must be >= 1")

    def payload_size(self):
        return self.samples * self.channels * self.bits // 8


@dataclass(frozen=True)
class BmpSpec:
    version: str = "V3"          # V3 (40-byte info), V4 (108), V5 (124)
    bpp: int = 24
    topdown: bool = False
    layout16: str = "555"        # 555 or 565, 16 bpp only
    order32: str = "BGRA"        # BGRA or RGBA, 32 bpp only
    width: int = 1
    height: int = 1

    kind = "bmp"

    def check(self):
        if self.version not in _INFO_SIZES:
            raise GenerationError(f"bmp: unknown version {self.version!r}")
        if self.bpp not in (16, 24, 32):
            raise GenerationError(f"bmp: bpp must be 16/24/32, got {self.bpp}")
        if self.layout16 not in ("555", "565") or self.order32 not in ("BGRA", "RGBA"):
            raise GenerationError("bmp: bad channel layout")
        if self.width < 1 or self.height < 1:
            raise GenerationError("bmp: width and height must be >= 1")


@dataclass(frozen=True)
class FwcSpec:
    len1: int = 1
    len2: int = 1

    kind = "fwc"

    def check(self):
        if self.len1 < 1 or self.len2 < 1:
            raise GenerationError("fwc: chunk lengths must be >= 1")


FormatSpec = WavSpec | BmpSpec | FwcSpec

_SPEC_KINDS = {"wav": WavSpec, "bmp": BmpSpec, "fwc": FwcSpec}

_INFO_SIZES = {"V3": 40, "V4": 108, "V5": 124}

_MASKS_16 = {"555": (0x7C00, 0x03E0, 0x001F), "565": (0xF800, 0x07E0, 0x001F)}
_MASKS_32 = {"BGRA": (0x00FF0000, 0x0000FF00, 0x000000FF, 0xFF000000),
             "RGBA": (0x000000FF, 0x0000FF00, 0x00FF0000, 0xFF000000)}


def spec_to_dict(spec: FormatSpec) -> dict:
    d = asdict(spec)
    d["kind"] = spec.kind
    return d


def spec_from_dict(d: dict) -> FormatSpec:
    d = dict(d)
    cls = _SPEC_KINDS[d.pop("kind")]
    return cls(**d)


# ---------------------------------------------------------------------------
# File builders


def build_file(spec: FormatSpec, seed: int) -> bytes:
    spec.check()
    if isinstance(spec, WavSpec):
        return _build_wav(spec, seed)
    if isinstance(spec, BmpSpec):
        return _build_bmp(spec, seed)
    return _build_fwc(spec, seed)


def _build_wav(spec: WavSpec, seed: int) -> bytes:
    block = spec.channels * spec.bits // 8
    data = lcg_bytes(seed, spec.payload_size())
    hdr = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    hdr += b"fmt " + struct.pack("<IHHIIHH", 16, 1, spec.channels, spec.sample_rate,
                                 spec.sample_rate * block, block, spec.bits)
    hdr += b"data" + struct.pack("<I", len(data))
    return hdr + data


def _bmp_masks(spec: BmpSpec):
    """(compression, masks) for the pixel layout; masks is () for BI_RGB."""
    if spec.bpp == 16 and spec.layout16 == "565":
        return 3, _MASKS_16["565"]
    if spec.bpp == 32 and spec.order32 == "RGBA":
        return 3, _MASKS_32["RGBA"]
    return 0, ()


def _build_bmp(spec: BmpSpec, seed: int) -> bytes:
    info_size = _INFO_SIZES[spec.version]
    compression, masks = _bmp_masks(spec)
    # V4/V5 carry the masks inside the header; V3 appends them after it.
    extra = 12 if (spec.version == "V3" and compression == 3) else 0
    pix_off = 14 + info_size + extra
    row = pad4(spec.width * spec.bpp // 8)
    data = lcg_bytes(seed, row * spec.height)
    height_field = -spec.height if spec.topdown else spec.height

    info = struct.pack("<IiiHHIIiiII", info_size, spec.width, height_field, 1,
                       spec.bpp, compression, row * spec.height, 2835, 2835, 0, 0)
    if spec.version != "V3":
        m = masks if masks else ((0, 0, 0, 0) if spec.bpp != 16 else (0, 0, 0))
        m = tuple(m) + (0,) * (4 - len(m))
        info += struct.pack("<IIII", *m)
        info += b"\x00" * (info_size - len(info))
    hdr = b"BM" + struct.pack("<IHHI", pix_off + len(data), 0, 0, pix_off) + info
    if extra:
        hdr += struct.pack("<III", *masks[:3])
    assert len(hdr) == pix_off
    return hdr + data


def _build_fwc(spec: FwcSpec, seed: int) -> bytes:
    hdr = b"FWC0" + struct.pack("<II", spec.len1, spec.len2) + b"\x00" * 20
    return hdr + lcg_bytes(seed, spec.len1 + spec.len2)


def gen_corpus(specs, seed: int):
    """Deterministic (file bytes, spec) pairs; the per-file payload seed mixes
    the corpus seed with the file's position."""
    if not specs:
        raise GenerationError("empty spec list")
    return [(build_file(s, seed * 0x9E3779B9 + i), s) for i, s in enumerate(specs)]


# ---------------------------------------------------------------------------
# Oracle parsers (functionality oracle + trace producer)


def _u16(data, off):
    _need(data, off, 2)
    return struct.unpack_from("<H", data, off)[0]


def _u32(data, off):
    _need(data, off, 4)
    return struct.unpack_from("<I", data, off)[0]


def _i32(data, off):
    _need(data, off, 4)
    return struct.unpack_from("<i", data, off)[0]


def _need(data, off, n):
    if off + n > len(data):
        raise FormatError(f"truncated: need bytes [{off}, {off + n}) of {len(data)}")


def oracle_parse(data: bytes) -> OracleOutput:
    out, _ = _parse(data, trace=False)
    return out


def traced_parse(data: bytes, file_id: str = "input") -> tuple[OracleOutput, TraceLog]:
    """Parse and record one expression per output byte.

    Replaying the log with eval_expr reconstructs the oracle output exactly.
    """
    out, entries = _parse(data, trace=True)
    log = TraceLog(file_id, len(data), entries)
    return out, log


def _parse(data, trace):
    if data[:4] == b"RIFF":
        return _parse_wav(data, trace)
    if data[:2] == b"BM":
        return _parse_bmp(data, trace)
    if data[:4] == b"FWC0":
        return _parse_fwc(data, trace)
    raise FormatError(f"unknown magic {data[:4]!r}")


def _wav_sample_exprs(lo: int, bits: int) -> list[Expr]:
    """Expressions for the 8 output bytes of one widened 64-bit sample."""
    if bits == 16:
        word = Or(Shl(ZExt(32, Read(lo + 1)), Const(8, 32)), ZExt(32, Read(lo)))
        val = SExt(64, Extract(15, 0, word))
    else:
        val = SExt(64, Sub(Read(lo), Const(128, 8)))
    return [canonicalize(Extract(8 * j + 7, 8 * j, val)) for j in range(8)]


def _parse_wav(data, trace):
    if data[8:12] != b"WAVE" or data[12:16] != b"fmt ":
        raise FormatError("not a canonical WAVE file")
    if _u32(data, 16) != 16 or _u16(data, 20) != 1:
        raise FormatError("unsupported fmt section")
    channels = _u16(data, 22)
    bits = _u16(data, 34)
    if channels not in (1, 2) or bits not in (8, 16):
        raise FormatError(f"unsupported layout: {channels} channels, {bits}-bit")
    if data[36:40] != b"data":
        raise FormatError("missing data section")
    size = _u32(data, 40)
    _need(data, 44, size)
    block = channels * bits // 8
    if size % block:
        raise FormatError("data size is not a whole number of frames")
    n = size // block
    step = bits // 8

    buffers = {f"chan{c}": bytearray() for c in range(channels)}
    entries = []
    for k in range(n):
        for c in range(channels):
            lo = 44 + k * block + c * step
            if bits == 16:
                v = struct.unpack_from("<h", data, lo)[0]
            else:
                v = data[lo] - 128
            buffers[f"chan{c}"] += struct.pack("<q", v)
            if trace:
                for j, e in enumerate(_wav_sample_exprs(lo, bits)):
                    entries.append(TraceEntry(f"chan{c}", 8 * k + j, e))
    return {k: bytes(v) for k, v in buffers.items()}, entries


def _expand_channel(word_lo: int, mask: int) -> Expr:
    """Scale an n-bit channel field at a 2-byte little-endian pixel to 8 bits.

    5-bit fields scale by (v * 33) >> 2 and 6-bit fields by (v * 65) >> 4,
    covering the full 0..255 range.
    """
    shift = (mask & -mask).bit_length() - 1
    nbits = mask.bit_count()
    word = Or(Shl(ZExt(32, Read(word_lo + 1)), Const(8, 32)), ZExt(32, Read(word_lo)))
    field = AShr(And(word, Const(mask, 32)), Const(shift, 32))
    factor, down = (33, 2) if nbits == 5 else (65, 4)
    scaled = AShr(Mul(Const(factor, 32), field), Const(down, 32))
    return canonicalize(Extract(7, 0, scaled))


def _parse_bmp(data, trace):
    pix_off = _u32(data, 10)
    info_size = _u32(data, 14)
    if info_size not in (40, 108, 124):
        raise FormatError(f"unsupported info header size {info_size}")
    width = _i32(data, 18)
    height = _i32(data, 22)
    bpp = _u16(data, 28)
    compression = _u32(data, 30)
    if width < 1 or height == 0:
        raise FormatError(f"bad dimensions {width}x{height}")
    topdown = height < 0
    height = abs(height)
    if bpp not in (16, 24, 32):
        raise FormatError(f"unsupported bit depth {bpp}")
    if compression == 0:
        masks = _MASKS_16["555"] if bpp == 16 else _MASKS_32["BGRA"]
    elif compression == 3:
        moff = 54 if info_size > 40 else 14 + info_size
        masks = tuple(_u32(data, moff + 4 * i) for i in range(3))
        if bpp == 32:
            masks = masks + (0xFF000000,)
    else:
        raise FormatError(f"unsupported compression {compression}")

    row = pad4(width * bpp // 8)
    _need(data, pix_off, row * height)

    pixels = bytearray()
    entries = []
    nout = 4 if bpp == 32 else 3

    def emit(out_idx, value, expr):
        pixels.append(value)
        if trace:
            entries.append(TraceEntry("pixels", out_idx, expr))

    for r in range(height):
        src_row = r if topdown else height - 1 - r
        base = pix_off + src_row * row
        for x in range(width):
            out = (r * width + x) * nout
            if bpp == 24:
                p = base + 3 * x
                for j, src in enumerate((p + 2, p + 1, p)):  # BGR -> RGB
                    emit(out + j, data[src], Read(src) if trace else None)
            elif bpp == 32:
                p = base + 4 * x
                word = struct.unpack_from("<I", data, p)[0]
                for j, mask in enumerate(masks):
                    byte_pos = (mask & -mask).bit_length() - 1
                    if mask.bit_count() != 8 or byte_pos % 8:
                        raise FormatError(f"unsupported 32-bit mask {mask:#x}")
                    src = p + byte_pos // 8
                    emit(out + j, (word & mask) >> byte_pos, Read(src) if trace else None)
            else:
                p = base + 2 * x
                word = struct.unpack_from("<H", data, p)[0]
                for j, mask in enumerate(masks):
                    if mask.bit_count() not in (5, 6):
                        raise FormatError(f"unsupported 16-bit mask {mask:#x}")
                    shift = (mask & -mask).bit_length() - 1
                    v = (word & mask) >> shift
                    factor, down = (33, 2) if mask.bit_count() == 5 else (65, 4)
                    emit(out + j, (v * factor) >> down,
                         _expand_channel(p, mask) if trace else None)
    return {"pixels": bytes(pixels)}, entries


def _parse_fwc(data, trace):
    len1 = _u32(data, 4)
    len2 = _u32(data, 8)
    _need(data, 32, len1 + len2)
    buffers = {}
    entries = []
    for name, base, length in (("chunk0", 32, len1), ("chunk1", 32 + len1, len2)):
        buffers[name] = bytes(data[base:base + length])
        if trace:
            for i in range(length):
                entries.append(TraceEntry(name, i, Read(base + i)))
    return buffers, entries


# ---------------------------------------------------------------------------
# Serialization of outputs and manifests


def write_output(out: OracleOutput) -> tuple[bytes, str]:
    """Concatenated raw buffers plus a text sidecar of (name, offset, length)."""
    blob = bytearray()
    lines = []
    for name in sorted(out):
        lines.append(f"{name} {len(blob)} {len(out[name])}")
        blob += out[name]
    return bytes(blob), "\n".join(lines) + "\n"


def read_output(blob: bytes, index_text: str) -> OracleOutput:
    out = {}
    for line in index_text.splitlines():
        if not line.strip():
            continue
        name, off, length = line.split()
        out[name] = blob[int(off):int(off) + int(length)]
    return out


def write_manifest(entries, seed: int) -> str:
    """entries: list of (relative path, FormatSpec)."""
    doc = {"seed": seed,
           "files": [{"path": p, **spec_to_dict(s)} for p, s in entries]}
    return json.dumps(doc, indent=2) + "\n"


def read_manifest(text: str):
    doc = json.loads(text)
    files = []
    for rec in doc["files"]:
        rec = dict(rec)
        path = rec.pop("path")
        files.append((path, spec_from_dict(rec)))
    return doc["seed"], files
