"""Finite-difference verification of every differentiable kernel and of the
full combined loss through a small model."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad_check
from .losses import LossWeights, combined_loss
from .model import ModelConfig, decode_teacher_forced, encode, init_params


def _p(rng, *shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale)


def kernel_checks(seed: int = 0, h: float = 1e-4) -> dict[str, float]:
    """Max relative gradient error for each primitive op, keyed by name."""
    rng = np.random.default_rng(seed)
    a = _p(rng, 4, 5)
    b = _p(rng, 4, 5)
    m = _p(rng, 5, 3)
    pos = Tensor(np.abs(rng.standard_normal((4, 5))) + 0.5)
    gain = Tensor(1.0 + 0.1 * rng.standard_normal(5))
    bias = _p(rng, 5, scale=0.1)
    table = _p(rng, 7, 3)
    idx = rng.integers(0, 7, size=(4, 5))

    cases = {
        "add": ({"a": a, "b": b}, lambda p: ad.add(p["a"], p["b"])),
        "sub": ({"a": a, "b": b}, lambda p: ad.sub(p["a"], p["b"])),
        "mul": ({"a": a, "b": b}, lambda p: ad.mul(p["a"], p["b"])),
        "div": ({"a": a, "b": pos}, lambda p: ad.div(p["a"], p["b"])),
        "scale": ({"a": a}, lambda p: ad.scale(p["a"], 1.7)),
        "add_const": ({"a": a}, lambda p: ad.add_const(p["a"], 0.3)),
        "matmul": ({"a": a, "b": m}, lambda p: ad.matmul(p["a"], p["b"])),
        "concat": ({"a": a, "b": b}, lambda p: ad.concat([p["a"], p["b"]], axis=1)),
        "embedding": ({"t": table}, lambda p: ad.embedding(p["t"], idx)),
        "softmax": ({"a": a}, lambda p: ad.softmax(p["a"])),
        "log_softmax": ({"a": a}, lambda p: ad.log_softmax(p["a"])),
        "log": ({"a": pos}, lambda p: ad.log(p["a"])),
        "relu": ({"a": a}, lambda p: ad.relu(p["a"])),
        "sigmoid": ({"a": a}, lambda p: ad.sigmoid(p["a"])),
        "tanh": ({"a": a}, lambda p: ad.tanh(p["a"])),
        "layer_norm": ({"a": a, "g": gain, "b": bias},
                       lambda p: ad.layer_norm(p["a"], p["g"], p["b"])),
        "reduce_sum": ({"a": a}, lambda p: ad.reduce_sum(p["a"], axis=1, keepdims=True)),
        "mean": ({"a": a}, lambda p: ad.mean(p["a"], axis=0)),
        "reshape": ({"a": a}, lambda p: ad.reshape(p["a"], (2, 10))),
        "transpose": ({"a": a}, lambda p: ad.transpose(p["a"], (1, 0))),
        "slice_axis": ({"a": a}, lambda p: ad.slice_axis(p["a"], 1, 1, 4)),
        "minimum_const": ({"a": a}, lambda p: ad.minimum_const(p["a"], 0.2)),
    }
    results = {}
    for name, (params, fn) in cases.items():
        out_shape = fn(params).data.shape
        wt = Tensor(np.random.default_rng(seed + 7).standard_normal(out_shape))
        results[name] = grad_check(
            lambda p, fn=fn, wt=wt: ad.reduce_sum(ad.mul(fn(p), wt)),
            params, h=h, rng=np.random.default_rng(seed + 2))
    return results


def model_check(seed: int = 0, h: float = 1e-4, seq_len: int = 24) -> float:
    """Gradient check of the combined loss through a tiny transformer."""
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(d_model=16, heads=2, encoder_layers=2, decoder_layers=2,
                      dropout=0.0, seq_len=seq_len, dtype="float64")
    params = init_params(cfg, rng)
    B = 2
    day1 = rng.integers(1, 16, size=(B, seq_len))
    day2 = rng.integers(1, 16, size=(B, seq_len))
    mask1 = (rng.random((B, seq_len)) > 0.2).astype(np.int16)
    mask2 = (rng.random((B, seq_len)) > 0.2).astype(np.int16)
    mask2[:, 0] = 1  # keep at least one observed slot per row
    day1[mask1 == 0] = 0
    weights = LossWeights()

    def f(p):
        mem = encode(p, cfg, day1, mask1, train=False, rng=None)
        logits, _ = decode_teacher_forced(p, cfg, mem, day2, mask2,
                                          p_tf=1.0, rng=None, train=False)
        loss, _ = combined_loss(logits, day2, mask2, weights)
        return loss

    return grad_check(f, params, h=h, max_coords_per_param=4,
                      rng=np.random.default_rng(seed + 1))


def full_report(seed: int = 0, h: float = 1e-4) -> dict[str, float]:
    report = kernel_checks(seed, h)
    report["full_model"] = model_check(seed, h)
    return report
