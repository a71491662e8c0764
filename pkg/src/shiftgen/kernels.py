"""Kernel backend selection: compiled extension if importable, numpy otherwise.

Set SHIFTGEN_PURE_PYTHON=1 to force the numpy backend. All higher-level code
goes through the ND wrappers below, which flatten to the 2D contract the
backends share.
"""

import os

import numpy as np

from . import _kernels_np

if os.environ.get("SHIFTGEN_PURE_PYTHON"):
    _impl = _kernels_np
    HAVE_EXT = False
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        HAVE_EXT = True
    except ImportError:
        _impl = _kernels_np
        HAVE_EXT = False

BACKEND = "cython" if HAVE_EXT else "numpy"


def _rows(x, dtype=None):
    # the compiled kernels are fused over a single float type, so all
    # arguments of one call must share a dtype
    x = np.ascontiguousarray(x, dtype=dtype)
    return x.reshape(-1, x.shape[-1])


def _vec(x, dtype):
    return np.ascontiguousarray(x, dtype=dtype)


def softmax(x):
    return _impl.softmax2d(_rows(x)).reshape(x.shape)


def softmax_grad(p, g):
    p = np.asarray(p)
    return _impl.softmax2d_grad(_rows(p), _rows(g, p.dtype)).reshape(p.shape)


def layer_norm(x, gain, bias, eps=1e-5):
    x = np.asarray(x)
    y, xhat, rstd = _impl.layer_norm2d(
        _rows(x), _vec(gain, x.dtype), _vec(bias, x.dtype), eps
    )
    return y.reshape(x.shape), xhat, rstd


def layer_norm_grad(xhat, rstd, gain, g):
    gshape = np.asarray(g).shape
    xhat = np.ascontiguousarray(xhat)
    gx, ggain, gbias = _impl.layer_norm2d_grad(
        xhat, _vec(rstd, xhat.dtype), _vec(gain, xhat.dtype), _rows(g, xhat.dtype)
    )
    return gx.reshape(gshape), ggain, gbias


def find_runs(codes, mask):
    return np.asarray(_impl.find_runs(np.asarray(codes, dtype=np.int64),
                                      np.asarray(mask, dtype=np.int64)))
