"""Text serialization of models and filter sets.

Model files are plain text so every weight is human-inspectable.  Header
line ``LNCM 1``, then one record per layer::

    layer <kind> <dims...>
    <weights, whitespace-separated decimals, row-major>
    bias <len>          (optional)
    <bias values>

Kinds and their dims: ``affine out in``, ``conv out in kh kw``,
``autoencoder out in`` (one record for the encoder half, one for the
decoder), ``attention 1`` (its single value is the softmax temperature).
Unknown kinds are rejected.  Numbers use 17 significant digits, which
round-trips float64 exactly; writing what was read reproduces canonical
files byte for byte.

A file of affine records loads as a LinearFcn, conv records as a
ConvStack (single records canonicalize to AffineMap / Kernel), and the
canonical chroma sequence conv, affine, autoencoder 3<-32, autoencoder
32<-3, attention, affine loads as a ChromaHybridModel.

Filter-set files (header ``LNCM-FILTERS 1``) hold 15 records in dy-major
position order: ``pos <qy> <qx>`` followed by 169 taps, row-major.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .chroma import Autoencoder, ChromaHybridModel
from .collapse import AffineMap, ConvStack, LinearFcn
from .errors import IoError, ParseError
from .interp import FILTER_SIZE, QUARTER_POSITIONS, FractionalPosition, QuarterPelFilterSet
from .tensor_core import Kernel

__all__ = [
    "format_model",
    "write_model",
    "read_model",
    "write_filter_set",
    "read_filter_set",
]

MODEL_MAGIC = "LNCM 1"
FILTER_MAGIC = "LNCM-FILTERS 1"


def _fmt(values) -> str:
    return " ".join(f"{v:.17g}" for v in values)


def _affine_record(kind: str, m: AffineMap, lines: list) -> None:
    lines.append(f"layer {kind} {m.output_dim} {m.input_dim}")
    for row in m.w:
        lines.append(_fmt(row))
    lines.append(f"bias {m.output_dim}")
    lines.append(_fmt(m.b))


def _conv_record(k: Kernel, lines: list) -> None:
    lines.append(f"layer conv {k.out_channels} {k.in_channels} {k.kh} {k.kw}")
    for o in range(k.out_channels):
        for i in range(k.in_channels):
            lines.append(_fmt(k.taps[o, i].ravel()))
    if k.bias is not None:
        lines.append(f"bias {k.out_channels}")
        lines.append(_fmt(k.bias))


def format_model(model) -> str:
    lines = [MODEL_MAGIC]
    if isinstance(model, AffineMap):
        _affine_record("affine", model, lines)
    elif isinstance(model, LinearFcn):
        for layer in model.layers:
            _affine_record("affine", layer, lines)
    elif isinstance(model, Kernel):
        _conv_record(model, lines)
    elif isinstance(model, ConvStack):
        for k in model.layers:
            _conv_record(k, lines)
    elif isinstance(model, ChromaHybridModel):
        _conv_record(model.conv_branch, lines)
        _affine_record("affine", model.boundary_encoder, lines)
        _affine_record("autoencoder", model.bottleneck.encoder, lines)
        _affine_record("autoencoder", model.bottleneck.decoder, lines)
        lines.append("layer attention 1")
        lines.append(_fmt([model.temperature]))
        _affine_record("affine", model.head, lines)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return "\n".join(lines) + "\n"


def write_model(path, model) -> None:
    try:
        Path(path).write_text(format_model(model))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


class _TokenReader:
    """Whitespace tokens with line numbers, for error reporting."""

    def __init__(self, text: str):
        self.items = []  # (token, lineno)
        for lineno, line in enumerate(text.splitlines(), start=1):
            for tok in line.split():
                self.items.append((tok, lineno))
        self.pos = 0

    def peek(self):
        return self.items[self.pos] if self.pos < len(self.items) else (None, None)

    def next(self, what: str) -> tuple[str, int]:
        if self.pos >= len(self.items):
            last = self.items[-1][1] if self.items else 1
            raise ParseError(f"unexpected end of file, expected {what}", line=last)
        item = self.items[self.pos]
        self.pos += 1
        return item

    def next_int(self, what: str) -> int:
        tok, lineno = self.next(what)
        try:
            return int(tok)
        except ValueError as exc:
            raise ParseError(f"expected integer {what}, got {tok!r}", line=lineno) from exc

    def next_floats(self, count: int, what: str) -> np.ndarray:
        out = np.empty(count)
        for i in range(count):
            tok, lineno = self.next(what)
            try:
                out[i] = float(tok)
            except ValueError as exc:
                raise ParseError(f"expected number in {what}, got {tok!r}", line=lineno) from exc
        return out


def _read_records(reader: _TokenReader) -> list:
    records = []
    while True:
        tok, lineno = reader.peek()
        if tok is None:
            break
        if tok != "layer":
            raise ParseError(f"expected 'layer', got {tok!r}", line=lineno)
        reader.next("layer")
        kind, kind_line = reader.next("layer kind")
        if kind in ("affine", "autoencoder"):
            out_dim = reader.next_int("output dim")
            in_dim = reader.next_int("input dim")
            w = reader.next_floats(out_dim * in_dim, "weights").reshape(out_dim, in_dim)
            dims = (out_dim, in_dim)
        elif kind == "conv":
            out_c = reader.next_int("out channels")
            in_c = reader.next_int("in channels")
            kh = reader.next_int("kernel height")
            kw = reader.next_int("kernel width")
            w = reader.next_floats(out_c * in_c * kh * kw,
                                   "taps").reshape(out_c, in_c, kh, kw)
            dims = (out_c, in_c, kh, kw)
        elif kind == "attention":
            one = reader.next_int("attention dim")
            if one != 1:
                raise ParseError(f"attention record must have dim 1, got {one}", line=kind_line)
            w = reader.next_floats(1, "temperature")
            dims = (1,)
        else:
            raise ParseError(f"unknown layer kind {kind!r}", line=kind_line)
        bias = None
        tok, _ = reader.peek()
        if tok == "bias":
            reader.next("bias")
            blen = reader.next_int("bias length")
            if blen != dims[0]:
                raise ParseError(f"bias length {blen} != {dims[0]}", line=kind_line)
            bias = reader.next_floats(blen, "bias values")
        records.append((kind, dims, w, bias, kind_line))
    if not records:
        raise ParseError("model file has no layer records")
    return records


def read_model(path):
    """Load a model file; returns AffineMap, LinearFcn, Kernel, ConvStack or
    ChromaHybridModel depending on the record sequence."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != MODEL_MAGIC:
        raise ParseError(f"bad header, expected {MODEL_MAGIC!r}", line=1)
    reader = _TokenReader("\n".join(lines[1:]))
    # token line numbers are offset by the header line
    reader.items = [(tok, lineno + 1) for tok, lineno in reader.items]
    records = _read_records(reader)
    kinds = [r[0] for r in records]

    def affine(rec) -> AffineMap:
        _, (out_dim, _), w, bias, _ = rec
        return AffineMap(w, bias if bias is not None else np.zeros(out_dim))

    if all(k == "affine" for k in kinds):
        maps = [affine(r) for r in records]
        return maps[0] if len(maps) == 1 else LinearFcn(tuple(maps))
    if all(k == "conv" for k in kinds):
        kernels = [Kernel(r[2], r[3]) for r in records]
        return kernels[0] if len(kernels) == 1 else ConvStack(tuple(kernels))
    if kinds == ["conv", "affine", "autoencoder", "autoencoder", "attention", "affine"]:
        conv = Kernel(records[0][2], records[0][3])
        return ChromaHybridModel(
            conv_branch=conv,
            boundary_encoder=affine(records[1]),
            bottleneck=Autoencoder(encoder=affine(records[2]),
                                   decoder=affine(records[3])),
            head=affine(records[5]),
            temperature=float(records[4][2][0]),
        )
    raise ParseError(f"unrecognized record sequence {kinds}", line=records[0][4])


def write_filter_set(path, filter_set: QuarterPelFilterSet) -> None:
    lines = [FILTER_MAGIC]
    for pos in QUARTER_POSITIONS:
        lines.append(f"pos {pos.qy} {pos.qx}")
        taps = filter_set[pos].taps[0, 0]
        for row in taps:
            lines.append(_fmt(row))
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_filter_set(path) -> QuarterPelFilterSet:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != FILTER_MAGIC:
        raise ParseError(f"bad header, expected {FILTER_MAGIC!r}", line=1)
    reader = _TokenReader("\n".join(lines[1:]))
    reader.items = [(tok, lineno + 1) for tok, lineno in reader.items]
    filters = {}
    while True:
        tok, lineno = reader.peek()
        if tok is None:
            break
        if tok != "pos":
            raise ParseError(f"expected 'pos', got {tok!r}", line=lineno)
        reader.next("pos")
        qy = reader.next_int("qy")
        qx = reader.next_int("qx")
        try:
            pos = FractionalPosition(qx, qy)
        except Exception as exc:
            raise ParseError(f"bad position ({qy}, {qx}): {exc}", line=lineno) from exc
        if pos in filters:
            raise ParseError(f"duplicate position {pos.tag}", line=lineno)
        taps = reader.next_floats(FILTER_SIZE * FILTER_SIZE, f"taps for {pos.tag}")
        filters[pos] = Kernel(taps.reshape(1, 1, FILTER_SIZE, FILTER_SIZE))
    return QuarterPelFilterSet(filters)
