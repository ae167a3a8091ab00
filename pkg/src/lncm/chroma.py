"""Chroma intra-prediction hybrid: collapsed conv branch + attention over
boundary samples, one joint parameter set for block sizes 4, 8 and 16.

Architecture (fixed by this package):

* conv branch: a single 5x5-support kernel with 3 output channels, applied
  after zero-padding the n x n luma block to (n+4) x (n+4); its per-pixel
  3-d outputs are the attention queries.
* boundary path: each of the B(n) = 4n+1 boundary triples (luma, U, V) is
  lifted to 32-d features by an affine encoder, then squeezed to 3-d codes
  by the encoder half of a 32->3->32 autoencoder; the codes are the keys.
  The decoder exists only during training.
* attention: row-wise softmax of Q K^T / temperature; each row is a
  probability simplex, so the mixed chroma values are convex combinations
  of the boundary chroma.
* head: affine map from (mixed U, mixed V, mixed 3-d code) to the two
  predicted chroma values per pixel.

Boundary convention, B(n) = 4n+1: the corner sample at (-1, -1), then the
two rows above (row -2, then row -1, left to right), then the two columns
left (column -2, then column -1, top to bottom).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import _convnet
from ._optim import Adam, cosine_lr
from .collapse import AffineMap, ComplexityReport, count_params
from .errors import BoundsError, DataError, DimensionError, ParamError
from .tensor_core import Kernel, Plane, conv2d, zero_pad

__all__ = [
    "ChromaInput",
    "Autoencoder",
    "ChromaHybridModel",
    "OpCounter",
    "BLOCK_SIZES",
    "FEATURE_DIM",
    "CODE_DIM",
    "boundary_count",
    "downsample_luma",
    "extract_chroma_sample",
    "harvest_chroma",
    "pad_and_convolve",
    "encode_boundary",
    "compress_features",
    "attention_weights",
    "predict_chroma",
    "ChromaHybridRegressor",
    "cclm_baseline_mse",
    "reference_baseline_report",
]

BLOCK_SIZES = (4, 8, 16)
FEATURE_DIM = 32
CODE_DIM = 3
QUERY_DIM = 3
_PAD = 2
_CONV_SUPPORT = 5
QK_INIT_GAIN = 2.0


def boundary_count(n: int) -> int:
    """B(n) = 4n+1 boundary samples."""
    return 4 * n + 1


@dataclass(frozen=True, eq=False)
class ChromaInput:
    """One block's inputs: co-located luma (chroma grid) and boundary triples."""

    luma: np.ndarray      # (n, n)
    boundary: np.ndarray  # (B(n), 3) rows of (luma, U, V)

    def __post_init__(self):
        luma = np.array(self.luma, dtype=np.float64)
        boundary = np.array(self.boundary, dtype=np.float64)
        n = luma.shape[0] if luma.ndim == 2 else 0
        if luma.ndim != 2 or luma.shape != (n, n) or n not in BLOCK_SIZES:
            raise DimensionError(f"luma block must be square with side in "
                                 f"{BLOCK_SIZES}, got shape {luma.shape}")
        if boundary.shape != (boundary_count(n), 3):
            raise DimensionError(f"boundary must be ({boundary_count(n)}, 3) "
                                 f"for n={n}, got {boundary.shape}")
        luma.setflags(write=False)
        boundary.setflags(write=False)
        object.__setattr__(self, "luma", luma)
        object.__setattr__(self, "boundary", boundary)

    @property
    def n(self) -> int:
        return self.luma.shape[0]


@dataclass(frozen=True, eq=False)
class Autoencoder:
    """Linear 32 -> 3 -> 32 bottleneck; only the encoder runs at inference."""

    encoder: AffineMap
    decoder: AffineMap

    def __post_init__(self):
        if (self.encoder.input_dim, self.encoder.output_dim) != (FEATURE_DIM, CODE_DIM):
            raise DimensionError(f"encoder must be {FEATURE_DIM}->{CODE_DIM}")
        if (self.decoder.input_dim, self.decoder.output_dim) != (CODE_DIM, FEATURE_DIM):
            raise DimensionError(f"decoder must be {CODE_DIM}->{FEATURE_DIM}")


@dataclass(frozen=True, eq=False)
class ChromaHybridModel:
    conv_branch: Kernel          # (3, 1, 5, 5) with bias
    boundary_encoder: AffineMap  # 3 -> 32
    bottleneck: Autoencoder
    head: AffineMap              # (U, V, code1..3) -> (U, V)
    temperature: float = math.sqrt(3.0)

    def __post_init__(self):
        k = self.conv_branch
        if (k.out_channels, k.in_channels, k.kh, k.kw) != (QUERY_DIM, 1, _CONV_SUPPORT, _CONV_SUPPORT):
            raise DimensionError(f"conv branch must be 1->{QUERY_DIM} "
                                 f"{_CONV_SUPPORT}x{_CONV_SUPPORT}")
        if (self.boundary_encoder.input_dim, self.boundary_encoder.output_dim) != (3, FEATURE_DIM):
            raise DimensionError(f"boundary encoder must be 3->{FEATURE_DIM}")
        if (self.head.input_dim, self.head.output_dim) != (2 + CODE_DIM, 2):
            raise DimensionError(f"head must be {2 + CODE_DIM}->2")
        if self.temperature <= 0:
            raise ParamError("temperature must be > 0")


@dataclass
class OpCounter:
    """Multiply-accumulate tally per inference stage."""

    stages: dict = field(default_factory=dict)

    def add(self, stage: str, macs: int) -> None:
        self.stages[stage] = self.stages.get(stage, 0) + int(macs)


def downsample_luma(luma: Plane) -> Plane:
    """Full-resolution luma onto the 4:2:0 chroma grid by 2x2 averaging."""
    s = luma.samples
    if s.shape[0] % 2 or s.shape[1] % 2:
        raise DimensionError(f"luma dims {s.shape} must be even")
    down = 0.25 * (s[0::2, 0::2] + s[0::2, 1::2] + s[1::2, 0::2] + s[1::2, 1::2])
    return Plane(down, luma.bit_depth)


def extract_chroma_sample(luma_cg: Plane, u: Plane, v: Plane, x: int, y: int,
                          n: int) -> tuple[ChromaInput, np.ndarray]:
    """ChromaInput plus the true (2, n, n) chroma targets for one block.

    All planes live on the chroma grid.  The full two-deep boundary ring
    must be inside the frame (x >= 2, y >= 2).
    """
    h, w = luma_cg.height, luma_cg.width
    if (u.height, u.width) != (h, w) or (v.height, v.width) != (h, w):
        raise DimensionError("luma (chroma grid), U and V planes must share dims")
    if x < _PAD or y < _PAD or x + n > w or y + n > h:
        raise BoundsError(f"block at ({x}, {y}) lacks its boundary ring in "
                          f"{w}x{h} planes")
    rows = []
    triple = lambda fy, fx: (luma_cg.samples[fy, fx], u.samples[fy, fx], v.samples[fy, fx])
    rows.append(triple(y - 1, x - 1))
    for fy in (y - 2, y - 1):
        for fx in range(x, x + n):
            rows.append(triple(fy, fx))
    for fx in (x - 2, x - 1):
        for fy in range(y, y + n):
            rows.append(triple(fy, fx))
    inp = ChromaInput(luma_cg.samples[y:y + n, x:x + n], np.array(rows))
    target = np.stack([u.samples[y:y + n, x:x + n], v.samples[y:y + n, x:x + n]])
    return inp, target


def harvest_chroma(y_full: Plane, u: Plane, v: Plane, sizes=BLOCK_SIZES,
                   stride: int = 8) -> list[tuple[ChromaInput, np.ndarray]]:
    """Blocks of every requested size from one (Y, U, V) frame triplet.

    Y is full resolution and is 2x2-averaged onto the chroma grid; U and V
    must already be chroma-resolution.  Blocks without a full boundary ring
    are skipped.
    """
    luma_cg = downsample_luma(y_full)
    if (u.height, u.width) != (luma_cg.height, luma_cg.width):
        raise DimensionError(
            f"U plane {u.width}x{u.height} does not match chroma grid "
            f"{luma_cg.width}x{luma_cg.height}")
    samples = []
    for n in sizes:
        for by in range(_PAD, luma_cg.height - n + 1, stride):
            for bx in range(_PAD, luma_cg.width - n + 1, stride):
                samples.append(extract_chroma_sample(luma_cg, u, v, bx, by, n))
    if not samples:
        raise DataError("no chroma blocks harvested")
    return samples


def pad_and_convolve(luma, conv_branch: Kernel) -> np.ndarray:
    """Zero-pad the block to (n+4) x (n+4) and convolve; returns (3, n, n)."""
    luma = luma.samples if isinstance(luma, Plane) else np.asarray(luma, np.float64)
    n = luma.shape[0]
    if luma.ndim != 2 or luma.shape != (n, n) or n not in BLOCK_SIZES:
        raise DimensionError(f"luma block must be square with side in "
                             f"{BLOCK_SIZES}, got {luma.shape}")
    padded = zero_pad(luma, _PAD, _PAD)
    return conv2d(padded, conv_branch, mode="valid")


def encode_boundary(model: ChromaHybridModel, boundary) -> np.ndarray:
    """Per-sample 32-d features from the boundary triples."""
    boundary = np.asarray(boundary, dtype=np.float64)
    if boundary.ndim != 2 or boundary.shape[1] != 3:
        raise DimensionError(f"boundary must be (B, 3), got {boundary.shape}")
    return model.boundary_encoder(boundary)


def compress_features(model: ChromaHybridModel, features) -> np.ndarray:
    """32-d features -> 3-d codes via the autoencoder's encoder half."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != FEATURE_DIM:
        raise DimensionError(f"features must be (B, {FEATURE_DIM}), got {features.shape}")
    return model.bottleneck.encoder(features)


def attention_weights(queries, keys, temperature: float) -> np.ndarray:
    """Row-wise softmax of Q K^T / temperature; every row sums to 1."""
    if temperature <= 0:
        raise ParamError(f"temperature must be > 0, got {temperature}")
    q = np.asarray(queries, dtype=np.float64)
    k = np.asarray(keys, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2 or q.shape[1] != k.shape[1]:
        raise DimensionError(f"query/key dims do not match: {q.shape} vs {k.shape}")
    scores = q @ k.T / temperature
    scores -= scores.max(axis=1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=1, keepdims=True)
    return w


def predict_chroma(model: ChromaHybridModel, inp: ChromaInput,
                   op_counter: OpCounter | None = None) -> tuple[Plane, Plane]:
    """Predict the two chroma planes for one block (unclipped)."""
    n = inp.n
    b = boundary_count(n)
    queries = pad_and_convolve(inp.luma, model.conv_branch).reshape(QUERY_DIM, n * n).T
    feats = encode_boundary(model, inp.boundary)
    codes = compress_features(model, feats)
    attn = attention_weights(queries, codes, model.temperature)
    mixed_uv = attn @ inp.boundary[:, 1:3]
    mixed_codes = attn @ codes
    context = np.concatenate([mixed_uv, mixed_codes], axis=1)
    out = model.head(context)
    if op_counter is not None:
        op_counter.add("conv_branch", QUERY_DIM * _CONV_SUPPORT ** 2 * n * n)
        op_counter.add("boundary_encoder", b * 3 * FEATURE_DIM)
        op_counter.add("bottleneck_encoder", b * FEATURE_DIM * CODE_DIM)
        op_counter.add("attention", n * n * b * (QUERY_DIM + 2 + CODE_DIM))
        op_counter.add("head", n * n * (2 + CODE_DIM) * 2)
    u = out[:, 0].reshape(n, n)
    v = out[:, 1].reshape(n, n)
    return Plane(u), Plane(v)


@count_params.register
def _(model: ChromaHybridModel) -> ComplexityReport:
    k = model.conv_branch
    params = k.taps.size + (k.bias.size if k.bias is not None else 0)
    for m in (model.boundary_encoder, model.bottleneck.encoder, model.head):
        params += m.w.size + m.b.size
    # reference block size 8 for the per-pixel MAC figure
    n, b = 8, boundary_count(8)
    macs = (QUERY_DIM * _CONV_SUPPORT ** 2
            + (b * (3 * FEATURE_DIM + FEATURE_DIM * CODE_DIM)) // (n * n)
            + b * (QUERY_DIM + 2 + CODE_DIM)
            + (2 + CODE_DIM) * 2)
    return ComplexityReport(
        param_count=int(params),
        mac_count_per_output_sample=int(macs),
        notes="joint chroma hybrid; decoder (training only) excluded; "
              "MACs quoted per pixel at n=8",
    )


def reference_baseline_report() -> ComplexityReport:
    """Parameter count of the in-repo unsimplified reference configuration.

    Per-size models (4, 8, 16) each with a three-layer conv branch
    (1->32->32->32, 3x3, biased), a two-layer boundary encoder (3->32->32),
    a 32-d query projection and a 34->2 head; no bottleneck.
    """
    conv = (32 * 1 * 9 + 32) + (32 * 32 * 9 + 32) + (32 * 32 * 9 + 32)
    encoder = (32 * 3 + 32) + (32 * 32 + 32)
    query_proj = 32 * 32 + 32
    head = 2 * 34 + 2
    per_size = conv + encoder + query_proj + head
    conv_macs = 1 * 9 * 32 + 32 * 9 * 32 + 32 * 9 * 32
    n, b = 8, boundary_count(8)
    macs = (conv_macs + 32 * 32                      # conv + query projection
            + (b * (3 * 32 + 32 * 32)) // (n * n)    # boundary path, amortized
            + b * (32 + 2 + 32)                      # 32-d attention scores + mixing
            + 34 * 2)
    return ComplexityReport(
        param_count=3 * per_size,
        mac_count_per_output_sample=int(macs),
        notes="unsimplified reference: per-size models, 32-d attention, "
              "multi-layer conv branch; MACs per pixel at n=8",
    )


class ChromaHybridRegressor(BaseEstimator):
    """Joint chroma predictor trained on MSE over U and V, sizes 4/8/16.

    Two phases, both full-batch Adam and deterministic per ``random_state``:
    first the 32->3->32 autoencoder is trained to reconstruct the boundary
    features of the seeded initial encoder, then its encoder half is frozen
    and the conv branch, boundary encoder and head are trained jointly.
    Normalization is folded back into the affine front/back ends afterwards
    (exact: attention rows sum to 1), so ``model_`` consumes raw samples.

    fit(X, y): X is a list of ChromaInput, y a list of (2, n, n) targets.
    """

    SAMPLE_SCALE = 255.0

    def __init__(self, epochs: int = 400, learning_rate: float = 0.02,
                 ae_epochs: int = 300, ae_learning_rate: float = 0.01,
                 temperature: float = math.sqrt(3.0), random_state: int = 0):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.ae_epochs = ae_epochs
        self.ae_learning_rate = ae_learning_rate
        self.temperature = temperature
        self.random_state = random_state

    def fit(self, X, y):
        if self.temperature <= 0:
            raise ParamError("temperature must be > 0")
        inputs = list(X)
        targets = [np.asarray(t, dtype=np.float64) for t in y]
        if not inputs or len(inputs) != len(targets):
            raise DataError("need matching, non-empty input/target lists")
        sizes = {inp.n for inp in inputs}
        missing = set(BLOCK_SIZES) - sizes
        if missing:
            raise DataError(f"dataset must cover block sizes {BLOCK_SIZES}, "
                            f"missing {sorted(missing)}")
        for inp, t in zip(inputs, targets):
            if t.shape != (2, inp.n, inp.n):
                raise DimensionError(f"target shape {t.shape} != (2, {inp.n}, {inp.n})")

        rng = np.random.default_rng(self.random_state)
        s = self.SAMPLE_SCALE
        tau = self.temperature

        all_boundary = np.concatenate([inp.boundary for inp in inputs])
        mu_lb = all_boundary[:, 0].mean()
        mu_u = float(np.mean([t[0].mean() for t in targets]))
        mu_v = float(np.mean([t[1].mean() for t in targets]))
        mu_t = np.array([mu_lb, mu_u, mu_v])
        mu_uv = mu_t[1:3]
        mu_blk = float(np.mean([inp.luma.mean() for inp in inputs]))

        # trainable parameters (normalized domain); channel 0 of the conv
        # branch starts as a centre delta so queries begin as pixel luma.
        # Query/key paths start large enough that attention scores are O(1)
        # on [0,1]-scaled samples, otherwise softmax starts uniform and the
        # optimizer spends most of its budget growing the scale.
        qk_gain = QK_INIT_GAIN
        conv_taps = rng.standard_normal(
            (QUERY_DIM, 1, _CONV_SUPPORT, _CONV_SUPPORT)) / (5 * _CONV_SUPPORT)
        conv_taps[0, 0, _PAD, _PAD] += qk_gain
        conv_bias = np.zeros(QUERY_DIM)
        we = rng.standard_normal((FEATURE_DIM, 3)) * (qk_gain / np.sqrt(3.0))
        be = np.zeros(FEATURE_DIM)
        wh = rng.standard_normal((2, 2 + CODE_DIM)) / np.sqrt(2 + CODE_DIM)
        bh = np.zeros(2)

        # phase 1: autoencoder on the initial boundary features
        tn_all = (all_boundary - mu_t) / s
        feats = tn_all @ we.T + be
        wz = rng.standard_normal((CODE_DIM, FEATURE_DIM)) / np.sqrt(FEATURE_DIM)
        bz = np.zeros(CODE_DIM)
        wd = rng.standard_normal((FEATURE_DIM, CODE_DIM)) / np.sqrt(CODE_DIM)
        bd = np.zeros(FEATURE_DIM)
        ae_params = [wz, bz, wd, bd]
        ae_opt = Adam(ae_params, lr=self.ae_learning_rate)
        for epoch in range(self.ae_epochs):
            lr = cosine_lr(self.ae_learning_rate, epoch, self.ae_epochs)
            codes = feats @ wz.T + bz
            recon = codes @ wd.T + bd
            err = recon - feats
            g = 2.0 * err / err.size
            gwd = g.T @ codes
            gbd = g.sum(axis=0)
            gc = g @ wd
            gwz = gc.T @ feats
            gbz = gc.sum(axis=0)
            ae_opt.step(ae_params, [gwz, gbz, gwd, gbd], lr=lr)
        codes = feats @ wz.T + bz
        recon = codes @ wd.T + bd
        self.ae_reconstruction_mse_ = float(np.mean((recon - feats) ** 2))
        self.ae_feature_variance_ = float(feats.var())

        # phase 2: joint training with the encoder half frozen
        groups = {}
        for inp, t in zip(inputs, targets):
            groups.setdefault(inp.n, []).append((inp, t))
        prepped = []
        for n, pairs in sorted(groups.items()):
            ln = np.stack([(p.luma - mu_blk) / s for p, _ in pairs])
            tn = np.stack([(p.boundary - mu_t) / s for p, _ in pairs])
            uvn = tn[:, :, 1:3]
            yn = np.stack([(t - mu_uv[:, None, None]) / s for _, t in pairs])
            prepped.append((n, ln, tn, uvn, yn))
        total = sum(yn.size for _, _, _, _, yn in prepped)

        params = [conv_taps, conv_bias, we, be, wh, bh]
        opt = Adam(params, lr=self.learning_rate)
        self.loss_curve_ = []
        for epoch in range(self.epochs):
            lr = cosine_lr(self.learning_rate, epoch, self.epochs)
            grads = [np.zeros_like(p) for p in params]
            sse = 0.0
            conv_k = Kernel(conv_taps, conv_bias)
            for n, ln, tn, uvn, yn in prepped:
                for si in range(ln.shape[0]):
                    # raw zero padding corresponds to -mu/s after normalization
                    x = np.pad(ln[si], _PAD, constant_values=-mu_blk / s)
                    acts = _convnet.forward(x, [conv_k])
                    q = acts[-1].reshape(QUERY_DIM, n * n).T
                    f = tn[si] @ we.T + be
                    k = f @ wz.T + bz
                    scores = q @ k.T / tau
                    scores -= scores.max(axis=1, keepdims=True)
                    a = np.exp(scores)
                    a /= a.sum(axis=1, keepdims=True)
                    cu = a @ uvn[si]
                    ck = a @ k
                    ctx = np.concatenate([cu, ck], axis=1)
                    out = ctx @ wh.T + bh
                    err = out - yn[si].reshape(2, n * n).T
                    sse += float(np.sum(err * err))

                    dout = 2.0 * err / total
                    grads[4] += dout.T @ ctx
                    grads[5] += dout.sum(axis=0)
                    dctx = dout @ wh
                    dcu, dck = dctx[:, :2], dctx[:, 2:]
                    da = dcu @ uvn[si].T + dck @ k.T
                    dk = a.T @ dck
                    ds = a * (da - (da * a).sum(axis=1, keepdims=True))
                    dq = ds @ k / tau
                    dk += ds.T @ q / tau
                    df = dk @ wz
                    grads[2] += df.T @ tn[si]
                    grads[3] += df.sum(axis=0)
                    dq3 = dq.T.reshape(QUERY_DIM, n, n)
                    tg, bg, _ = _convnet.backward(acts, [conv_k], dq3)
                    grads[0] += tg[0]
                    grads[1] += bg[0]
            opt.step(params, grads, lr=lr)
            self.loss_curve_.append(sse / total * s ** 2)

        # fold normalization back into the raw-domain model
        raw_conv_taps = conv_taps / s
        raw_conv_bias = conv_bias - (mu_blk / s) * conv_taps.sum(axis=(1, 2, 3))
        raw_we = we / s
        raw_be = be - we @ (mu_t / s)
        wh_uv, wh_k = wh[:, :2], wh[:, 2:]
        raw_wh = np.concatenate([wh_uv, s * wh_k], axis=1)
        raw_bh = s * bh + mu_uv - wh_uv @ mu_uv
        self.model_ = ChromaHybridModel(
            conv_branch=Kernel(raw_conv_taps, raw_conv_bias),
            boundary_encoder=AffineMap(raw_we, raw_be),
            bottleneck=Autoencoder(encoder=AffineMap(wz, bz),
                                   decoder=AffineMap(wd, bd)),
            head=AffineMap(raw_wh, raw_bh),
            temperature=tau,
        )
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit first")
        single = isinstance(X, ChromaInput)
        inputs = [X] if single else list(X)
        outs = [predict_chroma(self.model_, inp) for inp in inputs]
        return outs[0] if single else outs


def cclm_baseline_mse(samples) -> float:
    """Per-block linear luma->chroma fit from the boundary, the CCLM-style
    oracle: fit (a, b) on boundary (luma, chroma) pairs per channel, predict
    the block from its luma, average the squared error over the dataset.
    """
    if not samples:
        raise DataError("no samples")
    sse = 0.0
    count = 0
    for inp, target in samples:
        a_mat = np.column_stack([inp.boundary[:, 0], np.ones(len(inp.boundary))])
        for ch in range(2):
            coef, *_ = np.linalg.lstsq(a_mat, inp.boundary[:, 1 + ch], rcond=None)
            pred = coef[0] * inp.luma + coef[1]
            sse += float(np.sum((pred - target[ch]) ** 2))
            count += target[ch].size
    return sse / count
