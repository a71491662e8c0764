"""Pure-numpy implementations of the hot kernels.

Same contracts as the compiled extension in _ckernels.pyx; all 2D inputs are
C-contiguous with the reduced axis last.
"""

import numpy as np


def softmax2d(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax2d_grad(p, g):
    # d/dx of softmax: p * (g - sum(g * p))
    inner = (g * p).sum(axis=1, keepdims=True)
    return p * (g - inner)


def layer_norm2d(x, gain, bias, eps):
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * rstd
    return xhat * gain + bias, xhat, rstd[:, 0]


def layer_norm2d_grad(xhat, rstd, gain, g):
    gxhat = g * gain
    m1 = gxhat.mean(axis=1, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=1, keepdims=True)
    gx = rstd[:, None] * (gxhat - m1 - xhat * m2)
    return gx, (g * xhat).sum(axis=0), g.sum(axis=0)


def find_runs(codes, mask):
    """Maximal runs of identical observed codes as an (n, 3) array
    of [start, end, code]; mask-0 slots terminate runs."""
    codes = np.asarray(codes)
    mask = np.asarray(mask).astype(bool)
    n = codes.shape[0]
    if n == 0:
        return np.zeros((0, 3), dtype=np.int64)
    valid = mask
    # A run starts where a slot is valid and (is slot 0, follows an invalid
    # slot, or follows a different code).
    prev_valid = np.concatenate([[False], valid[:-1]])
    prev_code = np.concatenate([[-1], codes[:-1]])
    starts = np.flatnonzero(valid & (~prev_valid | (codes != prev_code)))
    if starts.size == 0:
        return np.zeros((0, 3), dtype=np.int64)
    next_valid = np.concatenate([valid[1:], [False]])
    next_code = np.concatenate([codes[1:], [-1]])
    ends = np.flatnonzero(valid & (~next_valid | (codes != next_code))) + 1
    return np.stack([starts, ends, codes[starts]], axis=1).astype(np.int64)
