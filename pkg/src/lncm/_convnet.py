"""Forward/backward passes for small activation-free conv stacks.

Internal module used by the interp and chroma trainers.  Layers are
cross-correlations (see tensor_core); the backward pass returns exact
gradients, pinned by finite-difference tests.
"""

from __future__ import annotations

import numpy as np

from .tensor_core import _IM2COL_LIMIT, Kernel, conv2d, unrolled_patches, zero_pad


def forward(x, layers) -> list[np.ndarray]:
    """Valid-mode pass through ``layers``; returns all activations, input first."""
    acts = [np.asarray(x, dtype=np.float64)]
    for k in layers:
        acts.append(conv2d(acts[-1], k, mode="valid"))
    return acts


def backward(acts, layers, dout, need_dx: bool = False):
    """Gradients of a scalar loss w.r.t. taps, biases and optionally the input.

    ``dout`` is the loss gradient at the final activation.  Returns
    (tap_grads, bias_grads, dx) with dx None unless requested.
    """
    tap_grads = [None] * len(layers)
    bias_grads = [None] * len(layers)
    grad = np.asarray(dout, dtype=np.float64)
    for li in range(len(layers) - 1, -1, -1):
        k = layers[li]
        x = acts[li]
        if x.ndim == 2:
            x = x[np.newaxis]
        gh, gw = grad.shape[1:]
        gmat = grad.reshape(k.out_channels, -1)
        if k.in_channels * k.kh * k.kw * gh * gw <= _IM2COL_LIMIT:
            m = unrolled_patches(x, k.kh, k.kw, gh, gw)
            dk = (gmat @ m.T).reshape(k.out_channels, k.in_channels, k.kh, k.kw)
        else:
            dk = np.empty((k.out_channels, k.in_channels, k.kh, k.kw))
            for dy in range(k.kh):
                for dx in range(k.kw):
                    window = x[:, dy:dy + gh, dx:dx + gw].reshape(k.in_channels, -1)
                    dk[:, :, dy, dx] = gmat @ window.T
        tap_grads[li] = dk
        bias_grads[li] = grad.sum(axis=(1, 2))
        if li > 0 or need_dx:
            padded = zero_pad(grad, k.kh - 1, k.kw - 1)
            flipped = k.taps[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            grad = conv2d(padded, Kernel(flipped), mode="valid")
    return tap_grads, bias_grads, (grad if need_dx else None)
