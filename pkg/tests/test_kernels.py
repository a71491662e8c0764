"""Backend parity: the compiled kernels must agree with the numpy reference."""

import numpy as np
import pytest

from shiftgen import _kernels_np, kernels


def _rand(rng, *shape, dtype=np.float64):
    return rng.standard_normal(shape).astype(dtype)


@pytest.fixture(params=[np.float32, np.float64], ids=["f32", "f64"])
def dtype(request):
    return request.param


needs_ext = pytest.mark.skipif(not kernels.HAVE_EXT, reason="no compiled extension")


def test_softmax_rows_normalized(dtype):
    rng = np.random.default_rng(0)
    x = _rand(rng, 8, 12, dtype=dtype) * 5
    p = kernels.softmax(x)
    assert np.allclose(p.sum(axis=-1), 1.0, atol=1e-6)
    assert (p >= 0).all()


@needs_ext
def test_softmax_parity(dtype):
    from shiftgen import _ckernels
    rng = np.random.default_rng(1)
    x = _rand(rng, 6, 9, dtype=dtype) * 3
    tol = 1e-6 if dtype == np.float32 else 1e-12
    assert np.allclose(_ckernels.softmax2d(x), _kernels_np.softmax2d(x), atol=tol)


@needs_ext
def test_softmax_grad_parity(dtype):
    from shiftgen import _ckernels
    rng = np.random.default_rng(2)
    p = _kernels_np.softmax2d(_rand(rng, 6, 9, dtype=dtype))
    g = _rand(rng, 6, 9, dtype=dtype)
    tol = 1e-6 if dtype == np.float32 else 1e-12
    assert np.allclose(_ckernels.softmax2d_grad(p, g),
                       _kernels_np.softmax2d_grad(p, g), atol=tol)


@needs_ext
def test_layer_norm_parity(dtype):
    from shiftgen import _ckernels
    rng = np.random.default_rng(3)
    x = _rand(rng, 5, 16, dtype=dtype)
    gain = (1 + 0.1 * _rand(rng, 16, dtype=dtype)).astype(dtype)
    bias = _rand(rng, 16, dtype=dtype) * 0.1
    tol = 1e-5 if dtype == np.float32 else 1e-11
    yc, xc, rc = _ckernels.layer_norm2d(x, gain, bias, 1e-5)
    yn, xn, rn = _kernels_np.layer_norm2d(x, gain, bias, 1e-5)
    assert np.allclose(yc, yn, atol=tol)
    assert np.allclose(xc, xn, atol=tol)
    assert np.allclose(rc, rn, atol=tol)


@needs_ext
def test_layer_norm_grad_parity(dtype):
    from shiftgen import _ckernels
    rng = np.random.default_rng(4)
    x = _rand(rng, 5, 16, dtype=dtype)
    gain = (1 + 0.1 * _rand(rng, 16, dtype=dtype)).astype(dtype)
    bias = np.zeros(16, dtype=dtype)
    _, xhat, rstd = _kernels_np.layer_norm2d(x, gain, bias, 1e-5)
    g = _rand(rng, 5, 16, dtype=dtype)
    tol = 1e-4 if dtype == np.float32 else 1e-10
    out_c = _ckernels.layer_norm2d_grad(xhat, rstd, gain, g)
    out_n = _kernels_np.layer_norm2d_grad(xhat, rstd, gain, g)
    for a, b in zip(out_c, out_n):
        assert np.allclose(a, b, atol=tol)


@needs_ext
def test_find_runs_parity():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(1, 200))
        codes = rng.integers(0, 4, n)
        mask = (codes > 0).astype(np.int64)
        a = np.asarray(_kernels_np.find_runs(codes, mask))
        from shiftgen import _ckernels
        b = np.asarray(_ckernels.find_runs(codes, mask))
        assert np.array_equal(a.reshape(-1, 3), b.reshape(-1, 3))


def test_find_runs_basic():
    codes = np.array([1, 1, 2, 2, 2, 0, 2, 2])
    mask = (codes > 0).astype(np.int64)
    runs = kernels.find_runs(codes, mask)
    assert runs.tolist() == [[0, 2, 1], [2, 5, 2], [6, 8, 2]]


def test_find_runs_empty_mask():
    runs = kernels.find_runs(np.zeros(10, np.int64), np.zeros(10, np.int64))
    assert len(runs) == 0


def test_nd_wrappers_match_2d():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 3, 4, 8)).astype(np.float32)
    p = kernels.softmax(x)
    assert p.shape == x.shape
    flat = kernels.softmax(x.reshape(-1, 8))
    assert np.allclose(p.reshape(-1, 8), flat, atol=1e-7)
