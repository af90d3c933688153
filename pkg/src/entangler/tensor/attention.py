import math

import numpy as np

from .core import Tensor, matmul, softmax


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, mask=None, return_weights: bool = False):
    """softmax(q kᵀ / sqrt(d_h)) v over the last two axes.

    ``mask`` is a boolean array broadcastable to the (..., L_q, L_k) score
    tensor; False keys get exactly zero weight. Rows with every key masked
    produce zeros.
    """
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = matmul(q, k.swapaxes(-1, -2)) * scale
    weights = softmax(scores, axis=-1, mask=None if mask is None else np.asarray(mask, dtype=bool))
    out = matmul(weights, v)
    if return_weights:
        return out, weights
    return out
