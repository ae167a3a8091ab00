"""Intra-prediction case study: predict an NxN block from its L-shaped
neighbourhood with a 4-layer activation-free FCN, then collapse it.

Reference layout (D = 4 reference lines, fixed): D rows above the block
spanning the block width plus D corner columns, then D columns left of the
block spanning the block height.  Scan order is row-major over the top
region (top-to-bottom, left-to-right), then row-major over the left region.
That gives R(n) = D*(n+D) + n*D = D*(2n+D) reference samples: 48, 80 and
144 for n = 4, 8, 16.

References that fall outside the frame take the value of the nearest
available reference in scan order; if nothing is available (block at the
frame origin) they fall back to the bit-depth mid-range value.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._optim import Adam, cosine_lr
from .collapse import AffineMap, LinearFcn
from .errors import BoundsError, DataError, DimensionError, SingularError
from .tensor_core import Plane, check_matrix

__all__ = [
    "ReferenceLayout",
    "ContributionMap",
    "ref_count",
    "extract_references",
    "harvest_blocks",
    "fit_affine_ridge",
    "IntraFcnRegressor",
    "RidgeAffineRegressor",
    "contribution_map",
    "predict_block",
]

BLOCK_SIZES = (4, 8, 16)
REF_LINES = 4


def ref_count(n: int, d: int = REF_LINES) -> int:
    """Number of reference samples for an n x n block: D*(2n+D)."""
    return d * (2 * n + d)


@dataclass(frozen=True)
class ReferenceLayout:
    """Scan order of the reference L-shape as offsets from the block origin."""

    n: int
    d: int = REF_LINES

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise DimensionError("block size and reference lines must be positive")

    @property
    def count(self) -> int:
        return ref_count(self.n, self.d)

    def offsets(self) -> list[tuple[int, int]]:
        """(dy, dx) offsets, top region first then left region."""
        n, d = self.n, self.d
        top = [(-d + r, -d + c) for r in range(d) for c in range(n + d)]
        left = [(r, -d + c) for r in range(n) for c in range(d)]
        return top + left

    def to_grid(self, values) -> np.ndarray:
        """Scatter a reference-ordered vector onto a (d+n, d+n) picture.

        Cells outside the L-shape (the block area) are NaN.
        """
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.count,):
            raise DimensionError(f"expected {self.count} values, got {values.shape}")
        n, d = self.n, self.d
        grid = np.full((d + n, d + n), np.nan)
        split = d * (n + d)
        grid[:d, :] = values[:split].reshape(d, n + d)
        grid[d:, :d] = values[split:].reshape(n, d)
        return grid


def extract_references(frame: Plane, x: int, y: int, n: int,
                       d: int = REF_LINES) -> np.ndarray:
    """Gather the R(n) reference samples for the block at (x, y)."""
    if not (0 <= x and 0 <= y and x + n <= frame.width and y + n <= frame.height):
        raise BoundsError(f"{n}x{n} block at ({x}, {y}) outside "
                          f"{frame.width}x{frame.height} frame")
    layout = ReferenceLayout(n, d)
    offsets = layout.offsets()
    values = np.empty(layout.count)
    avail = np.zeros(layout.count, dtype=bool)
    for i, (dy, dx) in enumerate(offsets):
        fy, fx = y + dy, x + dx
        if 0 <= fy < frame.height and 0 <= fx < frame.width:
            values[i] = frame.samples[fy, fx]
            avail[i] = True
    if not avail.any():
        values[:] = frame.mid_value
    elif not avail.all():
        have = np.flatnonzero(avail)
        for i in np.flatnonzero(~avail):
            values[i] = values[have[np.argmin(np.abs(have - i))]]
    return values


def harvest_blocks(frames, n: int, stride: int, d: int = REF_LINES):
    """Extract (references, block) pairs from frames on a stride grid.

    Returns ((X_train, Y_train), (X_hold, Y_hold)); the 90/10 split is a
    deterministic CRC32 hash of (frame index, x, y).
    """
    if stride < 1:
        raise DataError("stride must be >= 1")
    x_tr, y_tr, x_ho, y_ho = [], [], [], []
    for fi, frame in enumerate(frames):
        for by in range(0, frame.height - n + 1, stride):
            for bx in range(0, frame.width - n + 1, stride):
                refs = extract_references(frame, bx, by, n, d)
                block = frame.samples[by:by + n, bx:bx + n].ravel()
                if zlib.crc32(f"{fi}:{bx}:{by}".encode()) % 10 == 9:
                    x_ho.append(refs)
                    y_ho.append(block)
                else:
                    x_tr.append(refs)
                    y_tr.append(block)
    if not x_tr:
        raise DataError("no training blocks harvested")

    def stack(rows, width):
        return np.array(rows) if rows else np.empty((0, width))

    r, m = ref_count(n, d), n * n
    return ((stack(x_tr, r), stack(y_tr, m)), (stack(x_ho, r), stack(y_ho, m)))


def _check_dataset(X, y):
    X = check_matrix(X, "X")
    y = check_matrix(y, "y")
    if X.shape[0] != y.shape[0]:
        raise DimensionError(f"X has {X.shape[0]} rows, y has {y.shape[0]}")
    if X.shape[0] == 0:
        raise DataError("empty dataset")
    return X, y


def fit_affine_ridge(X, Y, ridge_lambda: float = 0.0) -> AffineMap:
    """Closed-form regularized least squares for W, b jointly.

    Centered normal equations with ridge term lambda*I on the weights; the
    intercept is not penalized, so lambda -> inf drives W to 0 and b to the
    column means of Y.  This is the global optimum of the linear model
    class, the oracle any gradient-trained linear net is compared against.
    """
    X, Y = _check_dataset(X, Y)
    if ridge_lambda < 0:
        raise SingularError("ridge_lambda must be >= 0")
    mu_x = X.mean(axis=0)
    mu_y = Y.mean(axis=0)
    xc = X - mu_x
    gram = xc.T @ xc + ridge_lambda * np.eye(X.shape[1])
    if ridge_lambda == 0.0 and np.linalg.matrix_rank(gram) < X.shape[1]:
        raise SingularError("normal equations are singular; use ridge_lambda > 0")
    try:
        w = np.linalg.solve(gram, xc.T @ (Y - mu_y)).T
    except np.linalg.LinAlgError as exc:
        raise SingularError(f"normal equations are singular ({exc}); "
                            "use ridge_lambda > 0") from exc
    b = mu_y - w @ mu_x
    return AffineMap(w, b)


class RidgeAffineRegressor(BaseEstimator):
    """sklearn-style wrapper around :func:`fit_affine_ridge`."""

    def __init__(self, ridge_lambda: float = 1e-8):
        self.ridge_lambda = ridge_lambda

    def fit(self, X, y):
        self.affine_ = fit_affine_ridge(X, y, self.ridge_lambda)
        self.n_features_in_ = self.affine_.input_dim
        return self

    def predict(self, X):
        if not hasattr(self, "affine_"):
            raise NotFittedError("call fit first")
        return self.affine_(np.asarray(X, dtype=np.float64))


class IntraFcnRegressor(BaseEstimator):
    """4-layer activation-free FCN (R(n) -> h -> h -> h -> n^2) on MSE.

    Mini-batch Adam with cosine learning-rate decay, deterministic per
    ``random_state``.  Inputs are standardized and targets scaled to [0, 1]
    internally; because every layer is affine the normalization folds back
    exactly into the first and last layers, so ``net_`` maps raw sample
    values to raw sample values.

    Attributes after fit: ``net_`` (LinearFcn), ``loss_curve_`` (raw-domain
    training MSE per epoch), ``n_features_in_``.
    """

    SAMPLE_SCALE = 255.0

    def __init__(self, hidden: int = 96, epochs: int = 1500,
                 learning_rate: float = 0.02, batch_size: int | None = None,
                 random_state: int = 0):
        self.hidden = hidden
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.random_state = random_state

    def _init_weight(self, rng, out_dim, in_dim):
        a = rng.standard_normal((max(out_dim, in_dim), min(out_dim, in_dim)))
        q, _ = np.linalg.qr(a)
        return np.ascontiguousarray(q if out_dim >= in_dim else q.T)

    def fit(self, X, y):
        if self.hidden < 1:
            raise DimensionError("hidden width must be >= 1")
        X, y = _check_dataset(X, y)
        n_samples, in_dim = X.shape
        out_dim = y.shape[1]
        rng = np.random.default_rng(self.random_state)

        mu_x = X.mean(axis=0)
        sd_x = X.std(axis=0)
        sd_x[sd_x < 1e-12] = 1.0
        mu_y = y.mean(axis=0)
        xn = (X - mu_x) / sd_x
        yn = (y - mu_y) / self.SAMPLE_SCALE

        dims = [in_dim, self.hidden, self.hidden, self.hidden, out_dim]
        weights = [self._init_weight(rng, dims[i + 1], dims[i]) for i in range(4)]
        biases = [np.zeros(dims[i + 1]) for i in range(4)]
        params = weights + biases
        opt = Adam(params, lr=self.learning_rate)

        batch = n_samples if self.batch_size is None else min(self.batch_size, n_samples)
        self.loss_curve_ = []
        for epoch in range(self.epochs):
            lr = cosine_lr(self.learning_rate, epoch, self.epochs)
            order = rng.permutation(n_samples) if batch < n_samples else np.arange(n_samples)
            epoch_sse = 0.0
            for start in range(0, n_samples, batch):
                idx = order[start:start + batch]
                acts = [xn[idx]]
                for w, b in zip(weights, biases):
                    acts.append(acts[-1] @ w.T + b)
                err = acts[-1] - yn[idx]
                epoch_sse += float(np.sum(err * err))
                grad = 2.0 * err / err.size
                w_grads, b_grads = [], []
                for li in range(3, -1, -1):
                    w_grads.append(grad.T @ acts[li])
                    b_grads.append(grad.sum(axis=0))
                    if li > 0:
                        grad = grad @ weights[li]
                opt.step(params, w_grads[::-1] + b_grads[::-1], lr=lr)
            self.loss_curve_.append(
                epoch_sse / (n_samples * out_dim) * self.SAMPLE_SCALE ** 2)

        # fold the normalization back so the network consumes raw samples
        raw_layers = []
        for li in range(4):
            w, b = weights[li].copy(), biases[li].copy()
            if li == 0:
                b = b - w @ (mu_x / sd_x)
                w = w / sd_x
            if li == 3:
                w = w * self.SAMPLE_SCALE
                b = b * self.SAMPLE_SCALE + mu_y
            raw_layers.append(AffineMap(w, b))
        self.net_ = LinearFcn(tuple(raw_layers))
        self.n_features_in_ = in_dim
        return self

    def predict(self, X):
        if not hasattr(self, "net_"):
            raise NotFittedError("call fit first")
        return self.net_(np.asarray(X, dtype=np.float64))


@dataclass(frozen=True)
class ContributionMap:
    """One predicted pixel's weight per reference sample, plus its bias share."""

    pixel: int
    weights: np.ndarray
    bias: float
    n: int
    d: int = REF_LINES

    def to_grid(self) -> np.ndarray:
        return ReferenceLayout(self.n, self.d).to_grid(self.weights)


def contribution_map(m: AffineMap, p: int, d: int = REF_LINES) -> ContributionMap:
    """Row p of the collapsed map, arranged on the reference L-shape."""
    n = math.isqrt(m.output_dim)
    if n * n != m.output_dim:
        raise DimensionError(f"output dim {m.output_dim} is not a square block")
    if m.input_dim != ref_count(n, d):
        raise DimensionError(
            f"input dim {m.input_dim} != R({n}) = {ref_count(n, d)}")
    if not 0 <= p < m.output_dim:
        raise BoundsError(f"pixel index {p} out of range [0, {m.output_dim})")
    return ContributionMap(pixel=p, weights=m.w[p].copy(), bias=float(m.b[p]), n=n, d=d)


def predict_block(m: AffineMap | LinearFcn, refs, bit_depth: int = 8) -> Plane:
    """Run the intra model on one reference vector; returns the unclipped block."""
    refs = np.asarray(refs, dtype=np.float64)
    if refs.ndim != 1 or refs.shape[0] != m.input_dim:
        raise DimensionError(f"expected {m.input_dim} references, got shape {refs.shape}")
    out = m(refs)
    n = math.isqrt(out.shape[0])
    if n * n != out.shape[0]:
        raise DimensionError(f"output dim {out.shape[0]} is not a square block")
    return Plane(out.reshape(n, n), bit_depth)
