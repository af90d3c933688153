"""Row-wise numeric kernels, pure numpy.

Every function operates on 2-D C-contiguous arrays whose rows are
independent; callers flatten leading axes before dispatching here. The
compiled module ``_ckernels`` exposes the exact same functions.
"""

import numpy as np


def softmax_forward(x, mask=None):
    if mask is None:
        shifted = x - x.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)
    mask = mask.astype(bool, copy=False)
    filled = np.where(mask, x, -np.inf)
    row_max = filled.max(axis=1, keepdims=True)
    empty = ~mask.any(axis=1, keepdims=True)
    row_max = np.where(empty, 0.0, row_max)
    e = np.where(mask, np.exp(filled - row_max), 0.0).astype(x.dtype, copy=False)
    total = e.sum(axis=1, keepdims=True)
    total = np.where(empty, 1.0, total)
    return (e / total).astype(x.dtype, copy=False)


def softmax_backward(y, gy):
    dot = (gy * y).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def layernorm_forward(x, gamma, beta, eps):
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = centered * rstd
    y = xhat * gamma + beta
    return y.astype(x.dtype, copy=False), xhat.astype(x.dtype, copy=False), rstd[:, 0].astype(x.dtype, copy=False)


def layernorm_backward(gy, xhat, rstd, gamma):
    gxhat = gy * gamma
    n = xhat.shape[1]
    m1 = gxhat.sum(axis=1, keepdims=True) / n
    m2 = (gxhat * xhat).sum(axis=1, keepdims=True) / n
    gx = rstd[:, None] * (gxhat - m1 - xhat * m2)
    return gx.astype(gy.dtype, copy=False), (gy * xhat).sum(axis=0), gy.sum(axis=0)


def xent_forward(x, targets, mask=None):
    """Per-row negative log-likelihood of ``targets`` and the row softmax."""
    probs = softmax_forward(x, mask)
    if mask is None:
        shifted = x - x.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1))
        picked = shifted[np.arange(x.shape[0]), targets]
        return (logz - picked).astype(x.dtype, copy=False), probs
    mask = mask.astype(bool, copy=False)
    filled = np.where(mask, x, -np.inf)
    row_max = filled.max(axis=1, keepdims=True)
    shifted = filled - row_max
    logz = np.log(np.where(mask, np.exp(shifted), 0.0).sum(axis=1))
    picked = shifted[np.arange(x.shape[0]), targets]
    return (logz - picked).astype(x.dtype, copy=False), probs


def xent_backward(probs, targets, row_scale):
    gx = probs.copy()
    gx[np.arange(probs.shape[0]), targets] -= 1.0
    gx *= row_scale[:, None]
    return gx
