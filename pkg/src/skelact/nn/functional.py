"""Forward/backward kernels on NCHW numpy arrays.

Each ``*_forward`` returns ``(out, cache)``; the matching ``*_backward`` takes
the upstream gradient and that cache. Kernels never mutate their inputs,
except ``batch_norm_forward`` which updates the running statistics held in
its state object when training.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


# --------------------------------------------------------------------------
# convolution


def conv2d_forward(x, w, stride=1, padding=1):
    """3x3 cross-correlation without bias.

    x: (B, C_in, H, W); w: (C_out, C_in, 3, 3). Output spatial size is
    H // stride, W // stride.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError(
            f"conv2d expects 4-d input and weights, got input {x.shape} and weights {w.shape}"
        )
    if w.shape[2:] != (3, 3) or w.shape[1] != x.shape[1]:
        raise ValueError(
            f"conv2d shape mismatch: input {x.shape} vs weights {w.shape}"
        )
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    if padding != 1:
        raise ValueError("only padding=1 is supported for 3x3 kernels")
    B, C, H, W = x.shape
    if stride == 2 and (H % 2 or W % 2):
        raise ValueError(
            f"stride-2 conv needs even spatial dims: input {x.shape} vs weights {w.shape}"
        )
    c_out = w.shape[0]
    ho, wo = H // stride, W // stride

    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))[:, :, ::stride, ::stride]
    # patch matrix, one column per output pixel: (C * 9, B * Ho * Wo)
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(C * 9, B * ho * wo)
    out = w.reshape(c_out, C * 9) @ cols
    out = np.ascontiguousarray(out.reshape(c_out, B, ho, wo).transpose(1, 0, 2, 3))
    return out, (x.shape, w, cols, stride)


def conv2d_backward(dout, cache):
    """Returns (dx, dw)."""
    x_shape, w, cols, stride = cache
    B, C, H, W = x_shape
    c_out = w.shape[0]
    ho, wo = dout.shape[2], dout.shape[3]
    if dout.shape != (B, c_out, ho, wo) or ho != H // stride or wo != W // stride:
        raise ValueError(
            f"conv2d backward: upstream gradient {dout.shape} does not match "
            f"forward output {(B, c_out, H // stride, W // stride)}"
        )
    dmat = dout.transpose(1, 0, 2, 3).reshape(c_out, B * ho * wo)
    dw = (dmat @ cols.T).reshape(w.shape)
    dcols = (w.reshape(c_out, C * 9).T @ dmat).reshape(C, 3, 3, B, ho, wo)

    dxp = np.zeros((C, B, H + 2, W + 2), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, i, j]
    return np.ascontiguousarray(dxp[:, :, 1:-1, 1:-1].transpose(1, 0, 2, 3)), dw


# --------------------------------------------------------------------------
# batch normalization


def batch_norm_forward(x, gamma, beta, state, training):
    """Per-channel normalization over (B, H, W).

    ``state`` carries ``running_mean``, ``running_var``, ``eps`` and
    ``momentum``; in training mode its running statistics are updated with
    an exponential moving average (unbiased batch variance).
    """
    if x.ndim != 4:
        raise ValueError(f"batch_norm expects (B, C, H, W), got {x.shape}")
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ValueError(
            f"batch_norm parameter shape {gamma.shape} does not match {C} channels"
        )
    g = gamma.reshape(1, C, 1, 1)
    b = beta.reshape(1, C, 1, 1)

    if training:
        n = x.shape[0] * x.shape[2] * x.shape[3]
        if n < 2:
            raise ValueError(
                f"batch_norm in training mode needs B*H*W >= 2, got input {x.shape}"
            )
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        inv_std = 1.0 / np.sqrt(var + state.eps)
        xhat = (x - mean.reshape(1, C, 1, 1)) * inv_std.reshape(1, C, 1, 1)
        m = state.momentum
        state.running_mean = (1 - m) * state.running_mean + m * mean
        state.running_var = (1 - m) * state.running_var + m * var * (n / (n - 1))
    else:
        inv_std = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (x - state.running_mean.reshape(1, C, 1, 1)) * inv_std.reshape(1, C, 1, 1)
        xhat = xhat.astype(x.dtype, copy=False)
        inv_std = inv_std.astype(x.dtype, copy=False)

    out = g * xhat + b
    return out, (xhat, gamma, inv_std, training)


def batch_norm_backward(dout, cache):
    """Returns (dx, dgamma, dbeta)."""
    xhat, gamma, inv_std, training = cache
    C = xhat.shape[1]
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma.reshape(1, C, 1, 1)
    s = inv_std.reshape(1, C, 1, 1)
    if not training:
        return dxhat * s, dgamma, dbeta
    n = xhat.shape[0] * xhat.shape[2] * xhat.shape[3]
    sum_d = dxhat.sum(axis=(0, 2, 3)).reshape(1, C, 1, 1)
    sum_dx = (dxhat * xhat).sum(axis=(0, 2, 3)).reshape(1, C, 1, 1)
    dx = (s / n) * (n * dxhat - sum_d - xhat * sum_dx)
    return dx, dgamma, dbeta


# --------------------------------------------------------------------------
# elementwise, pooling, dense


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def global_avg_pool_forward(x):
    if x.ndim != 4:
        raise ValueError(f"global_avg_pool expects (B, C, H, W), got {x.shape}")
    return x.mean(axis=(2, 3)), x.shape


def global_avg_pool_backward(dout, shape):
    B, C, H, W = shape
    d = dout.reshape(B, C, 1, 1) / (H * W)
    return np.broadcast_to(d, shape).copy()


def linear_forward(x, w, b):
    """x: (B, D); w: (num_classes, D); b: (num_classes,)."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ValueError(
            f"linear shape mismatch: input {x.shape}, weights {w.shape}, bias {b.shape}"
        )
    return x @ w.T + b, (x, w)


def linear_backward(dout, cache):
    """Returns (dx, dw, db)."""
    x, w = cache
    return dout @ w, dout.T @ x, dout.sum(axis=0)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    Returns ``(loss, dlogits, probs)``.
    """
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ValueError(f"logits must be (B, num_classes), got {logits.shape}")
    B, K = logits.shape
    if labels.shape != (B,):
        raise ValueError(f"expected {B} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"labels must lie in [0, {K - 1}], got {labels.min()}..{labels.max()}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    sum_exp = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(sum_exp)
    probs = exp / sum_exp
    idx = np.arange(B)
    loss = -log_probs[idx, labels].mean()
    dlogits = probs.copy()
    dlogits[idx, labels] -= 1
    dlogits /= B
    return float(loss), dlogits, probs
