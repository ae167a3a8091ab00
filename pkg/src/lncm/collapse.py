"""Collapse multi-layer activation-free networks into single-layer equivalents.

An activation-free stack of affine layers is itself affine, so the whole
network folds into one weight matrix and bias (:func:`collapse_affine`);
likewise a stack of convolution layers folds into one fused kernel
(:func:`collapse_conv`).  The fold is exact in exact arithmetic; at float64
the sequential and collapsed evaluations agree to ~1e-12 relative, checked
by :func:`verify_equivalence`.

Complexity is compared with :func:`count_params`: one multiply-accumulate
per weight per output sample, bias adds reported separately in the notes.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParamError
from .tensor_core import Kernel, Plane, check_matrix, check_vector, compose_spatial, conv2d

__all__ = [
    "AffineMap",
    "LinearFcn",
    "ConvStack",
    "ComplexityReport",
    "EquivalenceReport",
    "PruneReport",
    "collapse_affine",
    "collapse_conv",
    "count_params",
    "verify_equivalence",
    "prune_taps",
]


@dataclass(frozen=True, eq=False)
class AffineMap:
    """y = w @ x + b, the collapsed form of any activation-free FCN."""

    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        w = check_matrix(self.w, "w").copy()
        b = check_vector(self.b, "b").copy()
        if b.shape[0] != w.shape[0]:
            raise DimensionError(f"bias length {b.shape[0]} != rows {w.shape[0]}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    @property
    def input_dim(self) -> int:
        return self.w.shape[1]

    @property
    def output_dim(self) -> int:
        return self.w.shape[0]

    def __call__(self, x) -> np.ndarray:
        """Apply to a single input (1-D) or a batch (N, input_dim)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise DimensionError(f"input dim {x.shape[-1]} != {self.input_dim}")
        return x @ self.w.T + self.b


@dataclass(frozen=True, eq=False)
class LinearFcn:
    """An ordered stack of affine layers with no activation functions."""

    layers: tuple[AffineMap, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DimensionError("LinearFcn needs at least one layer")
        for i in range(1, len(layers)):
            if layers[i].input_dim != layers[i - 1].output_dim:
                raise DimensionError(
                    f"layer {i} expects {layers[i].input_dim} inputs but layer "
                    f"{i - 1} outputs {layers[i - 1].output_dim}")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    def __call__(self, x) -> np.ndarray:
        for layer in self.layers:
            x = layer(x)
        return x


@dataclass(frozen=True, eq=False)
class ConvStack:
    """An ordered stack of convolution layers whose channel dims chain."""

    layers: tuple[Kernel, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DimensionError("ConvStack needs at least one layer")
        for i in range(1, len(layers)):
            if layers[i].in_channels != layers[i - 1].out_channels:
                raise DimensionError(
                    f"layer {i} expects {layers[i].in_channels} channels but layer "
                    f"{i - 1} outputs {layers[i - 1].out_channels}")
        object.__setattr__(self, "layers", layers)

    @property
    def in_channels(self) -> int:
        return self.layers[0].in_channels

    @property
    def out_channels(self) -> int:
        return self.layers[-1].out_channels

    @property
    def receptive_field(self) -> tuple[int, int]:
        kh = sum(k.kh - 1 for k in self.layers) + 1
        kw = sum(k.kw - 1 for k in self.layers) + 1
        return kh, kw

    def __call__(self, x) -> np.ndarray:
        """Sequential valid-mode application; returns (out_channels, H', W')."""
        for k in self.layers:
            x = conv2d(x, k, mode="valid")
        return x


@dataclass(frozen=True)
class ComplexityReport:
    param_count: int
    mac_count_per_output_sample: int
    notes: str = ""


@dataclass(frozen=True)
class EquivalenceReport:
    passed: bool
    max_rel_error: float
    n_trials: int
    tol: float


@dataclass(frozen=True)
class PruneReport:
    method: str
    removed: int
    total_taps: int
    max_output_deviation: float | None = None


def collapse_affine(net: LinearFcn | AffineMap) -> AffineMap:
    """Fold an affine stack into the single equivalent AffineMap.

    W = W_L ... W_1 and b = W_L(...(W_2 b_1 + b_2)...) + b_L; a single-layer
    net comes back unchanged.
    """
    if isinstance(net, AffineMap):
        return net
    layers = net.layers
    if len(layers) == 1:
        return layers[0]
    w, b = layers[0].w, layers[0].b
    for layer in layers[1:]:
        w = layer.w @ w
        b = layer.w @ b + layer.b
    return AffineMap(w, b)


def collapse_conv(stack: ConvStack | Kernel) -> Kernel:
    """Fold a convolution stack into the single equivalent fused kernel."""
    if isinstance(stack, Kernel):
        return stack
    return functools.reduce(compose_spatial, stack.layers)


@functools.singledispatch
def count_params(model) -> ComplexityReport:
    """Exact parameter count plus a per-output-sample MAC estimate."""
    raise TypeError(f"cannot count parameters of {type(model).__name__}")


@count_params.register
def _(model: AffineMap) -> ComplexityReport:
    params = model.w.size + model.b.size
    return ComplexityReport(
        param_count=int(params),
        mac_count_per_output_sample=model.input_dim,
        notes="affine map; plus 1 bias add per output sample",
    )


@count_params.register
def _(model: LinearFcn) -> ComplexityReport:
    params = sum(l.w.size + l.b.size for l in model.layers)
    macs = sum(l.w.size for l in model.layers)
    bias_adds = sum(l.b.size for l in model.layers)
    out = model.output_dim
    return ComplexityReport(
        param_count=int(params),
        mac_count_per_output_sample=int(round(macs / out)),
        notes=f"{len(model.layers)}-layer FCN; total {macs} MACs and "
              f"{bias_adds} bias adds per forward pass",
    )


@count_params.register
def _(model: Kernel) -> ComplexityReport:
    params = model.taps.size + (model.bias.size if model.bias is not None else 0)
    macs = model.in_channels * model.kh * model.kw
    bias_note = "1 bias add per output sample" if model.bias is not None else "no bias"
    return ComplexityReport(
        param_count=int(params),
        mac_count_per_output_sample=macs,
        notes=f"single {model.kh}x{model.kw} kernel; {bias_note}",
    )


@count_params.register
def _(model: ConvStack) -> ComplexityReport:
    params = sum(k.taps.size + (k.bias.size if k.bias is not None else 0)
                 for k in model.layers)
    macs = sum(k.taps.size for k in model.layers)
    bias_adds = sum(k.out_channels for k in model.layers if k.bias is not None)
    out = model.out_channels
    return ComplexityReport(
        param_count=int(params),
        mac_count_per_output_sample=int(round(macs / out)),
        notes=f"{len(model.layers)}-layer conv stack (same-size feature-map "
              f"convention); {bias_adds} bias adds per output sample",
    )


def _conv_input_shape(model) -> tuple[int, int]:
    if isinstance(model, Kernel):
        return model.kh + 15, model.kw + 15
    kh, kw = model.receptive_field
    return kh + 15, kw + 15


def verify_equivalence(original, collapsed, n_trials: int = 100,
                       tol: float = 1e-9, seed: int = 0) -> EquivalenceReport:
    """Compare two models on random inputs drawn uniform in [0, 255].

    Works on affine pairs (AffineMap / LinearFcn) and convolution pairs
    (Kernel / ConvStack).  The error measure is
    max |a - b| / (1 + |b|) with b the original's output.
    """
    if n_trials < 1:
        raise ParamError("n_trials must be >= 1")
    rng = np.random.default_rng(seed)
    affine_types = (AffineMap, LinearFcn)
    conv_types = (Kernel, ConvStack)
    max_err = 0.0
    if isinstance(original, affine_types) and isinstance(collapsed, affine_types):
        if (original.input_dim != collapsed.input_dim
                or original.output_dim != collapsed.output_dim):
            raise DimensionError("models have different input/output dims")
        x = rng.uniform(0.0, 255.0, size=(n_trials, original.input_dim))
        ref = original(x)
        got = collapsed(x)
        max_err = float(np.max(np.abs(got - ref) / (1.0 + np.abs(ref))))
    elif isinstance(original, conv_types) and isinstance(collapsed, conv_types):
        def as_stack(m):
            return ConvStack((m,)) if isinstance(m, Kernel) else m
        a, b = as_stack(original), as_stack(collapsed)
        if a.in_channels != b.in_channels or a.out_channels != b.out_channels:
            raise DimensionError("models have different channel counts")
        if a.receptive_field != b.receptive_field:
            raise DimensionError("models have different receptive fields")
        h, w = _conv_input_shape(a)
        for _ in range(n_trials):
            x = rng.uniform(0.0, 255.0, size=(a.in_channels, h, w))
            ref = a(x)
            got = b(x)
            err = float(np.max(np.abs(got - ref) / (1.0 + np.abs(ref))))
            max_err = max(max_err, err)
    else:
        raise DimensionError(
            f"cannot compare {type(original).__name__} with {type(collapsed).__name__}")
    return EquivalenceReport(passed=max_err <= tol, max_rel_error=max_err,
                             n_trials=n_trials, tol=tol)


def prune_taps(kernel: Kernel, *, threshold: float | None = None,
               quantize_step: float | None = None,
               probe: Plane | None = None) -> tuple[Kernel, PruneReport]:
    """Zero small taps (|tap| < threshold) or quantize taps to the nearest
    multiple of ``quantize_step``; exactly one strategy must be given.

    The report counts taps that became zero and, when a probe plane is
    supplied, the max absolute output deviation on it (valid mode).
    """
    if (threshold is None) == (quantize_step is None):
        raise ParamError("give exactly one of threshold / quantize_step")
    old = kernel.taps
    if threshold is not None:
        if threshold < 0:
            raise ParamError("threshold must be >= 0")
        new = np.where(np.abs(old) < threshold, 0.0, old)
        method = f"threshold({threshold:g})"
    else:
        if quantize_step <= 0:
            raise ParamError("quantize_step must be > 0")
        new = np.round(old / quantize_step) * quantize_step
        method = f"quantize({quantize_step:g})"
    removed = int(np.count_nonzero((new == 0.0) & (old != 0.0)))
    pruned = Kernel(new, kernel.bias)
    deviation = None
    if probe is not None:
        before = conv2d(probe, kernel, mode="valid")
        after = conv2d(probe, pruned, mode="valid")
        deviation = float(np.max(np.abs(after - before)))
    report = PruneReport(method=method, removed=removed,
                         total_taps=old.size, max_output_deviation=deviation)
    return pruned, report
