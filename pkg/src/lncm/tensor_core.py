"""Dense linear algebra and 2-D convolution substrate.

Matrices and vectors are plain float64 numpy arrays (2-D row-major and 1-D
respectively) run through the ``check_*`` validators below.  Kernels and
sample planes get small frozen dataclasses because they carry conventions a
bare array cannot: channel order, optional per-channel bias, bit depth.

Conventions, fixed once for the whole package:

* Convolution is cross-correlation (no kernel flip), the way codec
  interpolation filters are written.
* ``same_zero_pad`` mode pads with zeros, ``(k-1)//2`` before and the
  remainder after, per axis.
* Samples are float64 and stored unclipped; :func:`clip_plane` is the one
  place integer range is enforced.
* Single-channel (1 in, 1 out) convolution accumulates taps in row-major
  order, so a scalar quadruple-loop oracle reproduces it bit for bit.
  Multi-channel layers use a vectorized contraction that may reorder the
  sum; equivalence checks there are relative, not bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from .errors import DimensionError, ParamError

__all__ = [
    "Kernel",
    "Plane",
    "check_matrix",
    "check_vector",
    "matmul",
    "conv2d",
    "compose_spatial",
    "delta_kernel",
    "zero_pad",
    "clip_plane",
]


def _frozen_f64(values, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, order="C")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionError(f"expected shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParamError("values must be finite (no NaN/Inf)")
    arr.setflags(write=False)
    return arr


def check_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a finite 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be 2-D with positive dims, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParamError(f"{name} contains NaN/Inf")
    return arr


def check_vector(v, name: str = "vector") -> np.ndarray:
    """Validate and return ``v`` as a finite 1-D float64 array."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 1:
        raise DimensionError(f"{name} must be 1-D and non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParamError(f"{name} contains NaN/Inf")
    return arr


@dataclass(frozen=True, eq=False)
class Kernel:
    """A multi-channel 2-D filter: taps[out][in][ky][kx], optional per-out bias."""

    taps: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 4:
            raise DimensionError(f"kernel taps must be 4-D [out][in][kh][kw], got shape {taps.shape}")
        object.__setattr__(self, "taps", _frozen_f64(taps))
        if self.bias is not None:
            bias = _frozen_f64(np.asarray(self.bias, np.float64), (taps.shape[0],))
            object.__setattr__(self, "bias", bias)

    @property
    def out_channels(self) -> int:
        return self.taps.shape[0]

    @property
    def in_channels(self) -> int:
        return self.taps.shape[1]

    @property
    def kh(self) -> int:
        return self.taps.shape[2]

    @property
    def kw(self) -> int:
        return self.taps.shape[3]

    @property
    def tap_count(self) -> int:
        return self.taps.size


@dataclass(frozen=True, eq=False)
class Plane:
    """A single component plane of samples, stored unclipped as float64."""

    samples: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"plane samples must be 2-D, got shape {arr.shape}")
        if self.bit_depth not in (8, 10):
            raise ParamError(f"bit_depth must be 8 or 10, got {self.bit_depth}")
        object.__setattr__(self, "samples", _frozen_f64(arr))

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    @property
    def mid_value(self) -> int:
        return 1 << (self.bit_depth - 1)


def matmul(a, b) -> np.ndarray:
    """Matrix product with explicit dimension checking."""
    a = check_matrix(a, "a")
    b = check_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul mismatch: a is {a.shape}, b is {b.shape}")
    return a @ b


def _as_channels(x) -> np.ndarray:
    """Coerce a Plane, 2-D array or (channels, H, W) array to 3-D float64."""
    if isinstance(x, Plane):
        x = x.samples
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[np.newaxis]
    if arr.ndim != 3:
        raise DimensionError(f"expected 2-D or (channels, H, W) input, got shape {arr.shape}")
    return arr


# above this many unrolled-patch elements, accumulate per tap offset
# instead of materializing the im2col matrix (keeps memory bounded)
_IM2COL_LIMIT = 1 << 24


def unrolled_patches(x: np.ndarray, kh: int, kw: int, hout: int, wout: int) -> np.ndarray:
    """im2col: (in_channels*kh*kw, hout*wout) matrix of input windows."""
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    return windows.transpose(0, 3, 4, 1, 2).reshape(-1, hout * wout)


def _im2col_conv(x: np.ndarray, taps: np.ndarray, hout: int, wout: int) -> np.ndarray:
    out_c, in_c, kh, kw = taps.shape
    if in_c * kh * kw * hout * wout <= _IM2COL_LIMIT:
        m = unrolled_patches(x, kh, kw, hout, wout)
        out = taps.reshape(out_c, -1) @ m
    else:
        tap_mat = taps.reshape(out_c, in_c, kh * kw)
        out = np.zeros((out_c, hout * wout))
        for dy in range(kh):
            for dx in range(kw):
                window = x[:, dy:dy + hout, dx:dx + wout].reshape(in_c, -1)
                out += tap_mat[:, :, dy * kw + dx] @ window
    return out.reshape(out_c, hout, wout)


def conv2d(x, kernel: Kernel, mode: str = "valid") -> np.ndarray:
    """Cross-correlate ``x`` with ``kernel``; returns (out_channels, H', W').

    ``x`` may be a Plane, a 2-D array (single channel) or a (channels, H, W)
    array.  ``mode`` is ``"valid"`` or ``"same_zero_pad"``.
    """
    x = _as_channels(x)
    if x.shape[0] != kernel.in_channels:
        raise DimensionError(
            f"input has {x.shape[0]} channels, kernel expects {kernel.in_channels}")
    kh, kw = kernel.kh, kernel.kw
    if mode == "same_zero_pad":
        x = zero_pad(x, ((kh - 1) // 2, kh - 1 - (kh - 1) // 2),
                     ((kw - 1) // 2, kw - 1 - (kw - 1) // 2))
    elif mode != "valid":
        raise ParamError(f"mode must be 'valid' or 'same_zero_pad', got {mode!r}")
    h, w = x.shape[1:]
    if h < kh or w < kw:
        raise DimensionError(f"input {h}x{w} smaller than kernel {kh}x{kw} in valid mode")
    hout, wout = h - kh + 1, w - kw + 1
    taps = kernel.taps
    if kh == 1 and kw == 1:
        out = np.tensordot(taps[:, :, 0, 0], x, axes=(1, 0))
    elif kernel.out_channels == 1 and kernel.in_channels == 1:
        # row-major tap accumulation: bit-identical to a scalar loop oracle
        acc = np.zeros((hout, wout))
        xi = x[0]
        for dy in range(kh):
            for dx in range(kw):
                acc += taps[0, 0, dy, dx] * xi[dy:dy + hout, dx:dx + wout]
        out = acc[np.newaxis]
    else:
        out = _im2col_conv(x, taps, hout, wout)
    if kernel.bias is not None:
        out = out + kernel.bias[:, np.newaxis, np.newaxis]
    return out


def compose_spatial(k1: Kernel, k2: Kernel) -> Kernel:
    """Fuse two stacked cross-correlation layers into one equivalent kernel.

    Applying the result in valid mode equals applying k1 then k2.  Spatial
    size grows to (k1.kh + k2.kh - 1, k1.kw + k2.kw - 1); the fused tap for
    an (out, in) pair is the sum over intermediate channels of the full 2-D
    convolution of the constituent single-channel kernels.  Biases fold as
    b[o] = sum_c b1[c] * sum(k2[o][c]) + b2[o].
    """
    if k2.in_channels != k1.out_channels:
        raise DimensionError(
            f"cannot compose: first kernel outputs {k1.out_channels} channels, "
            f"second expects {k2.in_channels}")
    hout, wout = k1.kh + k2.kh - 1, k1.kw + k2.kw - 1
    fused = np.zeros((k2.out_channels, k1.in_channels, hout, wout))
    for o in range(k2.out_channels):
        for i in range(k1.in_channels):
            for c in range(k1.out_channels):
                fused[o, i] += convolve2d(k1.taps[c, i], k2.taps[o, c], mode="full")

    bias = None
    if k1.bias is not None or k2.bias is not None:
        b1 = k1.bias if k1.bias is not None else np.zeros(k1.out_channels)
        b2 = k2.bias if k2.bias is not None else np.zeros(k2.out_channels)
        bias = k2.taps.sum(axis=(2, 3)) @ b1 + b2
    return Kernel(fused, bias)


def delta_kernel(channels: int = 1) -> Kernel:
    """1x1 identity kernel over ``channels`` channels."""
    taps = np.eye(channels).reshape(channels, channels, 1, 1)
    return Kernel(taps)


def zero_pad(x, pad_y, pad_x) -> np.ndarray:
    """Zero-pad the two spatial axes; ``pad_y``/``pad_x`` are ints or (before, after)."""
    if isinstance(x, Plane):
        x = x.samples
    x = np.asarray(x, dtype=np.float64)
    if np.isscalar(pad_y):
        pad_y = (pad_y, pad_y)
    if np.isscalar(pad_x):
        pad_x = (pad_x, pad_x)
    pad = [(0, 0)] * (x.ndim - 2) + [tuple(pad_y), tuple(pad_x)]
    return np.pad(x, pad)


def clip_plane(plane: Plane) -> Plane:
    """Round and clip samples to the plane's integer bit-depth range."""
    clipped = np.clip(np.rint(plane.samples), 0, plane.max_value)
    return Plane(clipped, plane.bit_depth)
