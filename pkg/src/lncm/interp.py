"""Inter-prediction case study: learn quarter-pel interpolation filters.

For each of the 15 quarter-pixel positions an activation-free SRCNN-shaped
stack (64 9x9 filters, then 32 1x1, then 32 5x5 into one output) is trained
on phase-shifted decimations of a high-resolution source, then collapsed
into a single 13x13 filter of 169 taps.  A small bank of fixed separable
filters (bilinear and a documented 4-tap) provides the traditional baseline
and the other arm of the per-block switchable choice.

Alignment convention: a 13x13 filter applied in valid mode to the low-res
plane predicts the fractional sample that sits ``pos`` below-right of the
window centre, so valid output index m corresponds to integer sample m+6.
Fixed-filter application and training targets are cropped to the same
geometry, which makes every candidate predictor directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import _convnet
from ._optim import Adam, cosine_lr
from .collapse import ConvStack, collapse_conv
from .errors import DataError, DimensionError, ParamError
from .tensor_core import Kernel, Plane, conv2d

__all__ = [
    "FractionalPosition",
    "QUARTER_POSITIONS",
    "SRCNN_LAYER_SHAPES",
    "FILTER_SIZE",
    "QuarterPelFilterSet",
    "FixedFilterBank",
    "DerivationReport",
    "SelectionResult",
    "PositionEval",
    "SelectionStats",
    "decimate_pair",
    "evaluate_filter_set",
    "gen_training_pairs",
    "SrcnnLinearRegressor",
    "check_srcnn_shape",
    "derive_filters",
    "apply_filter",
    "apply_fixed_filter",
    "switchable_select",
    "default_filter_bank",
]

# (out_channels, in_channels, kh, kw) per layer
SRCNN_LAYER_SHAPES = ((64, 1, 9, 9), (32, 64, 1, 1), (1, 32, 5, 5))
FILTER_SIZE = 13
_MARGIN = FILTER_SIZE // 2


@dataclass(frozen=True, order=True)
class FractionalPosition:
    """A quarter-pel position (qx, qy quarters in 0..3), excluding (0, 0)."""

    qx: int
    qy: int

    def __post_init__(self):
        if not (0 <= self.qx <= 3 and 0 <= self.qy <= 3):
            raise ParamError(f"quarter phases must be in 0..3, got ({self.qx}, {self.qy})")
        if self.qx == 0 and self.qy == 0:
            raise ParamError("(0, 0) is the integer position, not a fractional one")

    @property
    def dx(self) -> float:
        return self.qx / 4.0

    @property
    def dy(self) -> float:
        return self.qy / 4.0

    @property
    def tag(self) -> str:
        return f"q{self.qy}{self.qx}"


QUARTER_POSITIONS = tuple(
    FractionalPosition(qx, qy)
    for qy in range(4) for qx in range(4)
    if (qx, qy) != (0, 0)
)


@dataclass(frozen=True, eq=False)
class QuarterPelFilterSet:
    """15 fused 1->1 13x13 kernels without bias, one per quarter-pel position."""

    filters: dict

    def __post_init__(self):
        filters = dict(self.filters)
        missing = [p.tag for p in QUARTER_POSITIONS if p not in filters]
        if missing:
            raise DataError(f"filter set incomplete, missing positions {missing}")
        extra = set(filters) - set(QUARTER_POSITIONS)
        if extra:
            raise DataError(f"unexpected positions {sorted(k.tag for k in extra)}")
        for pos, k in filters.items():
            if (k.out_channels, k.in_channels, k.kh, k.kw) != (1, 1, FILTER_SIZE, FILTER_SIZE):
                raise DimensionError(
                    f"filter for {pos.tag} must be 1->1 {FILTER_SIZE}x{FILTER_SIZE}")
            if k.bias is not None:
                raise DimensionError(f"filter for {pos.tag} must not carry a bias")
        object.__setattr__(self, "filters", filters)

    def __getitem__(self, pos: FractionalPosition) -> Kernel:
        return self.filters[pos]


@dataclass(frozen=True)
class DerivationReport:
    """Per-position bias dropped at fusion time, and whether DC was normalized."""

    dropped_bias: dict
    normalized_dc: bool


def decimate_pair(hr: Plane, pos: FractionalPosition, scale: int = 4) -> tuple[Plane, Plane]:
    """Phase-(0,0) decimation of ``hr`` and the quarter-shifted target.

    The target is cropped by the filter margin on every side so each target
    sample has a full 13x13 receptive field in the input.
    """
    if scale < 4 or scale % 4 != 0:
        raise ParamError(f"scale must be a positive multiple of 4, got {scale}")
    h, w = hr.height, hr.width
    if h % scale or w % scale:
        raise DataError(f"{w}x{h} image not divisible by scale {scale}")
    lh, lw = h // scale, w // scale
    if lh < FILTER_SIZE or lw < FILTER_SIZE:
        raise DataError(f"decimated image {lw}x{lh} smaller than the "
                        f"{FILTER_SIZE}x{FILTER_SIZE} receptive field")
    py, px = scale * pos.qy // 4, scale * pos.qx // 4
    inp = hr.samples[::scale, ::scale]
    tgt = hr.samples[py::scale, px::scale]
    tgt = tgt[_MARGIN:lh - _MARGIN, _MARGIN:lw - _MARGIN]
    return Plane(inp, hr.bit_depth), Plane(tgt, hr.bit_depth)


def gen_training_pairs(hr: Plane, pos: FractionalPosition, scale: int = 4,
                       patch: int | None = None) -> list[tuple[Plane, Plane]]:
    """(input, target) training pairs for one fractional position.

    With ``patch`` set, the decimated input is tiled into non-overlapping
    patch x patch pieces (remainders dropped), each with its aligned
    margin-cropped target; otherwise one whole-plane pair is returned.
    """
    inp, tgt = decimate_pair(hr, pos, scale)
    if patch is None:
        return [(inp, tgt)]
    if patch <= 2 * _MARGIN:
        raise ParamError(f"patch must exceed {2 * _MARGIN}")
    pairs = []
    for py in range(0, inp.height - patch + 1, patch):
        for px in range(0, inp.width - patch + 1, patch):
            pi = inp.samples[py:py + patch, px:px + patch]
            pt = tgt.samples[py:py + patch - 2 * _MARGIN, px:px + patch - 2 * _MARGIN]
            pairs.append((Plane(pi, hr.bit_depth), Plane(pt, hr.bit_depth)))
    if not pairs:
        raise DataError("image too small for the requested patch size")
    return pairs


def check_srcnn_shape(stack: ConvStack) -> ConvStack:
    """Reject stacks that are not the fixed SRCNN shape."""
    shapes = tuple((k.out_channels, k.in_channels, k.kh, k.kw) for k in stack.layers)
    if shapes != SRCNN_LAYER_SHAPES:
        raise DimensionError(f"expected SRCNN layer shapes {SRCNN_LAYER_SHAPES}, got {shapes}")
    return stack


class SrcnnLinearRegressor(BaseEstimator):
    """Activation-free SRCNN trained on MSE for one fractional position.

    fit(X, y) takes matching lists of input/target planes (targets already
    margin-cropped, as produced by :func:`gen_training_pairs`).  Full-batch
    Adam with cosine decay; deterministic per ``random_state``.  As in the
    intra trainer, sample normalization is folded back into the first and
    last layers, so ``stack_`` maps raw samples to raw samples.

    With ``init='auto'`` and a known position, the stack is warm-started at
    the classical separable 4-tap interpolator (plus symmetry-breaking
    noise), so training refines a working filter instead of growing one
    from scratch; ``init='random'`` gives plain fan-in scaled noise.
    """

    SAMPLE_SCALE = 255.0

    def __init__(self, position: FractionalPosition | None = None,
                 epochs: int = 400, learning_rate: float = 0.01,
                 dc_offsets: tuple = (0.0, 64.0), init: str = "auto",
                 random_state: int = 0):
        self.position = position
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.dc_offsets = dc_offsets
        self.init = init
        self.random_state = random_state

    def _init_taps(self, rng) -> list[np.ndarray]:
        taps = [rng.standard_normal(shape) / np.sqrt(shape[1] * shape[2] * shape[3])
                for shape in SRCNN_LAYER_SHAPES]
        if self.init == "random" or (self.init == "auto" and self.position is None):
            return taps
        if self.init != "auto":
            raise ParamError(f"init must be 'auto' or 'random', got {self.init!r}")
        warm = [t * 1e-3 for t in taps]
        warm[0][0, 0, 4, 4] += 1.0
        warm[1][0, 0, 0, 0] += 1.0
        off_y, taps_y = _FOUR_TAP[self.position.qy]
        off_x, taps_x = _FOUR_TAP[self.position.qx]
        for oy, vy in zip(off_y, taps_y):
            for ox, vx in zip(off_x, taps_x):
                warm[2][0, 0, 2 + oy, 2 + ox] += vy * vx
        return warm

    def fit(self, X, y):
        inputs = [p.samples if isinstance(p, Plane) else np.asarray(p, float) for p in X]
        targets = [p.samples if isinstance(p, Plane) else np.asarray(p, float) for p in y]
        if not inputs or len(inputs) != len(targets):
            raise DataError("need matching, non-empty input/target lists")
        for xi, ti in zip(inputs, targets):
            if (ti.shape[0] != xi.shape[0] - 2 * _MARGIN
                    or ti.shape[1] != xi.shape[1] - 2 * _MARGIN):
                raise DimensionError(
                    f"target {ti.shape} does not match input {xi.shape} minus margins")
        if not self.dc_offsets:
            raise ParamError("dc_offsets must not be empty")

        # brightness-offset copies pin the fused DC gain at 1 and the fused
        # bias near 0, so dropping the bias at derivation time is harmless
        inputs = [xi + c for c in self.dc_offsets for xi in inputs]
        targets = [ti + c for c in self.dc_offsets for ti in targets]

        rng = np.random.default_rng(self.random_state)
        mu = float(np.mean([xi.mean() for xi in inputs]))
        scale = self.SAMPLE_SCALE
        xs = [(xi - mu) / scale for xi in inputs]
        ts = [(ti - mu) / scale for ti in targets]

        taps = self._init_taps(rng)
        biases = [np.zeros(shape[0]) for shape in SRCNN_LAYER_SHAPES]
        params = taps + biases
        opt = Adam(params, lr=self.learning_rate)
        total = sum(t.size for t in ts)

        self.loss_curve_ = []
        for epoch in range(self.epochs):
            lr = cosine_lr(self.learning_rate, epoch, self.epochs)
            layers = [Kernel(t, b) for t, b in zip(taps, biases)]
            tap_g = [np.zeros_like(t) for t in taps]
            bias_g = [np.zeros_like(b) for b in biases]
            sse = 0.0
            for xi, ti in zip(xs, ts):
                acts = _convnet.forward(xi, layers)
                err = acts[-1][0] - ti
                sse += float(np.sum(err * err))
                tg, bg, _ = _convnet.backward(acts, layers, (2.0 * err / total)[np.newaxis])
                for a, g in zip(tap_g, tg):
                    a += g
                for a, g in zip(bias_g, bg):
                    a += g
            opt.step(params, tap_g + bias_g, lr=lr)
            self.loss_curve_.append(sse / total * scale ** 2)

        # fold (x - mu)/scale and y*scale + mu back into the end layers
        t0 = taps[0] / scale
        b0 = biases[0] - (mu / scale) * taps[0].sum(axis=(1, 2, 3))
        t2 = taps[2] * scale
        b2 = biases[2] * scale + mu
        self.stack_ = check_srcnn_shape(ConvStack((
            Kernel(t0, b0),
            Kernel(taps[1], biases[1]),
            Kernel(t2, b2),
        )))
        return self

    def predict(self, X):
        """Valid-mode prediction plane(s) for input plane(s)."""
        if not hasattr(self, "stack_"):
            raise NotFittedError("call fit first")
        single = isinstance(X, Plane) or (hasattr(X, "ndim") and X.ndim == 2)
        planes = [X] if single else list(X)
        outs = [self.stack_(p)[0] for p in planes]
        return outs[0] if single else outs


def derive_filters(models: dict, normalize_dc: bool = False
                   ) -> tuple[QuarterPelFilterSet, DerivationReport]:
    """Collapse 15 trained stacks into the quarter-pel filter set.

    Accepts a mapping position -> ConvStack (or fitted SrcnnLinearRegressor).
    The fused bias is dropped so each filter is exactly 169 taps; the dropped
    values are recorded in the report.  ``normalize_dc`` rescales taps to sum
    to 1 (off by default: the derivation does not hide brightness drift).
    """
    missing = [p.tag for p in QUARTER_POSITIONS if p not in models]
    if missing:
        raise DataError(f"missing models for positions {missing}")
    filters = {}
    dropped = {}
    for pos in QUARTER_POSITIONS:
        model = models[pos]
        if isinstance(model, SrcnnLinearRegressor):
            model = model.stack_
        fused = collapse_conv(check_srcnn_shape(model))
        dropped[pos] = float(fused.bias[0]) if fused.bias is not None else 0.0
        taps = fused.taps
        if normalize_dc:
            dc = taps.sum()
            if abs(dc) < 1e-12:
                raise ParamError(f"cannot normalize {pos.tag}: tap sum is ~0")
            taps = taps / dc
        filters[pos] = Kernel(taps)
    return QuarterPelFilterSet(filters), DerivationReport(dropped, normalize_dc)


def apply_filter(ref: Plane, pos: FractionalPosition,
                 filter_set: QuarterPelFilterSet) -> Plane:
    """Fractional-sample plane from the learned filter (valid region)."""
    out = conv2d(ref, filter_set[pos], mode="valid")
    return Plane(out[0], ref.bit_depth)


# Fixed separable baselines.  Taps are exact multiples of 1/64 so each
# 1-D filter sums to 1.0 exactly in float64.
_BILINEAR = {
    0: ((0,), (1.0,)),
    1: ((0, 1), (48 / 64, 16 / 64)),
    2: ((0, 1), (32 / 64, 32 / 64)),
    3: ((0, 1), (16 / 64, 48 / 64)),
}
_FOUR_TAP = {
    0: ((0,), (1.0,)),
    1: ((-1, 0, 1, 2), (-4 / 64, 54 / 64, 16 / 64, -2 / 64)),
    2: ((-1, 0, 1, 2), (-4 / 64, 36 / 64, 36 / 64, -4 / 64)),
    3: ((-1, 0, 1, 2), (-2 / 64, 16 / 64, 54 / 64, -4 / 64)),
}


@dataclass(frozen=True)
class FixedFilterBank:
    """Separable baseline filters per quarter phase: (offsets, taps) pairs."""

    bilinear: dict = field(default_factory=lambda: dict(_BILINEAR))
    four_tap: dict = field(default_factory=lambda: dict(_FOUR_TAP))

    def __post_init__(self):
        for variant in (self.bilinear, self.four_tap):
            for q, (offsets, taps) in variant.items():
                if len(offsets) != len(taps):
                    raise DimensionError(f"phase {q}: offsets/taps length mismatch")
                if sum(taps) != 1.0:
                    raise ParamError(f"phase {q}: taps must sum to 1 exactly")

    def phase(self, variant: str, q: int):
        table = {"bilinear": self.bilinear, "four_tap": self.four_tap}
        if variant not in table:
            raise ParamError(f"variant must be 'bilinear' or 'four_tap', got {variant!r}")
        return table[variant][q]


def default_filter_bank() -> FixedFilterBank:
    return FixedFilterBank()


def apply_fixed_filter(ref: Plane, pos: FractionalPosition,
                       bank: FixedFilterBank | None = None,
                       variant: str = "four_tap") -> Plane:
    """Separable fixed-filter prediction on the learned filters' geometry.

    Output sample (i, j) predicts the fractional position ``pos`` past
    integer sample (i+6, j+6), exactly like :func:`apply_filter`, so the
    two candidates can be compared sample for sample.
    """
    bank = bank or default_filter_bank()
    s = ref.samples
    h, w = s.shape
    if h < FILTER_SIZE or w < FILTER_SIZE:
        raise DimensionError(f"reference {w}x{h} smaller than {FILTER_SIZE}x{FILTER_SIZE}")
    off_y, taps_y = bank.phase(variant, pos.qy)
    off_x, taps_x = bank.phase(variant, pos.qx)
    hh, ww = h - 2 * _MARGIN, w - 2 * _MARGIN
    tmp = np.zeros((hh, w))
    for o, t in zip(off_y, taps_y):
        tmp += t * s[_MARGIN + o:_MARGIN + o + hh, :]
    out = np.zeros((hh, ww))
    for o, t in zip(off_x, taps_x):
        out += t * tmp[:, _MARGIN + o:_MARGIN + o + ww]
    return Plane(out, ref.bit_depth)


@dataclass(frozen=True)
class SelectionResult:
    choice: str  # "learned" or "fixed"
    cost_learned: float
    cost_fixed: float


@dataclass(frozen=True)
class PositionEval:
    position: FractionalPosition
    mse_learned: float
    mse_bilinear: float
    mse_four_tap: float


@dataclass(frozen=True)
class SelectionStats:
    blocks: int
    learned_chosen: int
    sad_fixed_only: float
    sad_switchable: float

    @property
    def learned_fraction(self) -> float:
        return self.learned_chosen / self.blocks if self.blocks else 0.0


def evaluate_filter_set(hr: Plane, filter_set: QuarterPelFilterSet,
                        bank: FixedFilterBank | None = None, scale: int = 4,
                        block: int = 16, variant: str = "four_tap"
                        ) -> tuple[list[PositionEval], SelectionStats]:
    """Per-position MSE against the fixed baselines plus switchable-choice
    statistics on a block grid, for one evaluation image."""
    bank = bank or default_filter_bank()
    rows = []
    n_blocks = learned_chosen = 0
    sad_fixed = sad_switch = 0.0
    for pos in QUARTER_POSITIONS:
        inp, tgt = decimate_pair(hr, pos, scale)
        pred_l = apply_filter(inp, pos, filter_set)
        pred_b = apply_fixed_filter(inp, pos, bank, "bilinear")
        pred_f = apply_fixed_filter(inp, pos, bank, "four_tap")
        t = tgt.samples
        rows.append(PositionEval(
            position=pos,
            mse_learned=float(np.mean((pred_l.samples - t) ** 2)),
            mse_bilinear=float(np.mean((pred_b.samples - t) ** 2)),
            mse_four_tap=float(np.mean((pred_f.samples - t) ** 2)),
        ))
        for by in range(0, tgt.height - block + 1, block):
            for bx in range(0, tgt.width - block + 1, block):
                orig = Plane(t[by:by + block, bx:bx + block], hr.bit_depth)
                ref = Plane(inp.samples[by:by + block + 2 * _MARGIN,
                                        bx:bx + block + 2 * _MARGIN], hr.bit_depth)
                sel = switchable_select(orig, ref, pos, filter_set, bank, variant)
                n_blocks += 1
                learned_chosen += sel.choice == "learned"
                sad_fixed += sel.cost_fixed
                sad_switch += min(sel.cost_fixed, sel.cost_learned)
    return rows, SelectionStats(n_blocks, learned_chosen, sad_fixed, sad_switch)


def switchable_select(orig_block: Plane, ref: Plane, pos: FractionalPosition,
                      learned: QuarterPelFilterSet,
                      bank: FixedFilterBank | None = None,
                      variant: str = "four_tap") -> SelectionResult:
    """Pick the lower-SAD candidate per block; ties go to the fixed filter."""
    pred_l = apply_filter(ref, pos, learned)
    pred_f = apply_fixed_filter(ref, pos, bank, variant)
    if orig_block.samples.shape != pred_l.samples.shape:
        raise DimensionError(
            f"block {orig_block.samples.shape} does not match prediction "
            f"{pred_l.samples.shape}; reference must extend {_MARGIN} samples past it")
    cost_l = float(np.sum(np.abs(orig_block.samples - pred_l.samples)))
    cost_f = float(np.sum(np.abs(orig_block.samples - pred_f.samples)))
    choice = "learned" if cost_l < cost_f else "fixed"
    return SelectionResult(choice, cost_l, cost_f)
