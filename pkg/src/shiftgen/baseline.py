"""LSTM encoder-decoder baseline with additive attention.

Shares the period-aware embedding interface, output head contract (96x15
logits) and generation contract with the transformer, so both can be trained
and evaluated under identical budgets.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import Tensor
from .core import BOS, N_ACTIVITY_TYPES
from .model import (ModelConfig, N_PERIODS, VOCAB, _xavier, masked_codes,
                    period_of, sinusoid_table, teacher_tokens)


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    dt = cfg.np_dtype
    d = cfg.d_model  # hidden size == embedding size
    a = d  # attention projection width
    p: dict[str, np.ndarray] = {
        "e_act": (rng.standard_normal((VOCAB, d)) * 0.02).astype(dt),
        "e_pos": (rng.standard_normal((cfg.seq_len, d)) * 0.02).astype(dt),
        "e_period": (rng.standard_normal((N_PERIODS, d)) * 0.02).astype(dt),
        "att.w1": _xavier(rng, d, a, dt),
        "att.w2": _xavier(rng, d, a, dt),
        "att.v": _xavier(rng, a, 1, dt),
        "out.w": _xavier(rng, 2 * d, N_ACTIVITY_TYPES, dt),
        "out.b": np.zeros(N_ACTIVITY_TYPES, dtype=dt),
    }
    for prefix in ("enc", "dec"):
        p[f"{prefix}.wx"] = _xavier(rng, d, 4 * d, dt)
        p[f"{prefix}.wh"] = _xavier(rng, d, 4 * d, dt)
        b = np.zeros(4 * d, dtype=dt)
        b[d : 2 * d] = 1.0  # forget-gate bias
        p[f"{prefix}.b"] = b
    dec_in = 2 * d  # token embedding concatenated with previous context
    p["dec.wx"] = _xavier(rng, dec_in, 4 * d, dt)
    return {k: Tensor(v, name=k) for k, v in p.items()}


def _lstm_step(params, prefix, x: Tensor, h: Tensor, c: Tensor, d: int):
    z = ad.add(ad.add(ad.matmul(x, params[f"{prefix}.wx"]),
                      ad.matmul(h, params[f"{prefix}.wh"])),
               params[f"{prefix}.b"])
    i = ad.sigmoid(ad.slice_axis(z, 1, 0, d))
    f = ad.sigmoid(ad.slice_axis(z, 1, d, 2 * d))
    g = ad.tanh(ad.slice_axis(z, 1, 2 * d, 3 * d))
    o = ad.sigmoid(ad.slice_axis(z, 1, 3 * d, 4 * d))
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, c_new


def _time_rows(params, cfg) -> np.ndarray:
    slots = np.arange(cfg.seq_len)
    return (sinusoid_table(cfg.seq_len, cfg.d_model, cfg.dtype)
            + params["e_pos"].data
            + params["e_period"].data[period_of(slots)])


def encode(params, cfg: ModelConfig, day1, mask1,
           train: bool = False, rng=None) -> Tensor:
    """Run the encoder LSTM over embedded day-1 tokens -> (B, T, d) states."""
    day1 = np.atleast_2d(day1)
    mask1 = np.atleast_2d(mask1)
    tokens = masked_codes(day1, mask1)
    B, T = tokens.shape
    d = cfg.d_model
    dt = cfg.np_dtype
    time_rows = _time_rows(params, cfg)
    h = Tensor(np.zeros((B, d), dtype=dt))
    c = Tensor(np.zeros((B, d), dtype=dt))
    states = []
    for t in range(T):
        x = ad.add_const(ad.embedding(params["e_act"], tokens[:, t]), time_rows[t])
        x = ad.dropout(x, cfg.dropout, rng, train)
        h, c = _lstm_step(params, "enc", x, h, c, d)
        states.append(ad.reshape(h, (B, 1, d)))
    return ad.concat(states, axis=1)


def _decode(params, cfg: ModelConfig, enc_states: Tensor,
            next_token, T: int, B: int,
            train: bool = False, rng=None):
    """Shared decode loop. `next_token(t, prev_logits) -> (B,) token ids`.

    Returns (logits (B, T, 15), tokens used)."""
    d = cfg.d_model
    dt = cfg.np_dtype
    time_rows = _time_rows(params, cfg)
    keys = ad.matmul(enc_states, params["att.w2"])  # (B, T, a)
    h = Tensor(np.zeros((B, d), dtype=dt))
    c = Tensor(np.zeros((B, d), dtype=dt))
    ctx = Tensor(np.zeros((B, d), dtype=dt))
    logits_steps = []
    prev_logits = None
    used = np.zeros((B, T), dtype=np.int64)
    for t in range(T):
        tok = next_token(t, prev_logits)
        used[:, t] = tok
        emb = ad.add_const(ad.embedding(params["e_act"], tok), time_rows[t])
        emb = ad.dropout(emb, cfg.dropout, rng, train)
        x = ad.concat([emb, ctx], axis=1)
        h, c = _lstm_step(params, "dec", x, h, c, d)
        # additive attention over encoder states
        q = ad.reshape(ad.matmul(h, params["att.w1"]), (B, 1, d))
        scores = ad.reshape(ad.matmul(ad.tanh(ad.add(keys, q)), params["att.v"]),
                            (B, enc_states.data.shape[1]))
        alpha = ad.softmax(scores)
        ctx = ad.reshape(ad.matmul(ad.reshape(alpha, (B, 1, -1)), enc_states), (B, d))
        out = ad.add(ad.matmul(ad.concat([h, ctx], axis=1), params["out.w"]),
                     params["out.b"])
        prev_logits = out
        logits_steps.append(ad.reshape(out, (B, 1, N_ACTIVITY_TYPES)))
    return ad.concat(logits_steps, axis=1), used


def decode_teacher_forced(params, cfg: ModelConfig, enc_states: Tensor,
                          day2, mask2, p_tf: float,
                          rng=None, train: bool = False):
    day2 = np.atleast_2d(day2)
    teacher = teacher_tokens(day2, np.atleast_2d(mask2))
    B, T = teacher.shape
    if p_tf >= 1.0:
        use_teacher = np.ones((B, T), dtype=bool)
    else:
        use_teacher = rng.random((B, T)) < p_tf
        use_teacher[:, 0] = True

    def next_token(t, prev_logits):
        tok = teacher[:, t].copy()
        if t > 0 and prev_logits is not None:
            free = ~use_teacher[:, t]
            tok[free] = prev_logits.data.argmax(axis=1)[free] + 1
        return tok

    return _decode(params, cfg, enc_states, next_token, T, B, train=train, rng=rng)


def generate(params, cfg: ModelConfig, day1, mask1,
             mode: str = "greedy", temperature: float = 1.0,
             rng=None) -> np.ndarray:
    """Autoregressive day-2 generation with the same contract as the transformer."""
    day1 = np.atleast_2d(day1)
    enc_states = encode(params, cfg, day1, np.atleast_2d(mask1), train=False)
    B, T = day1.shape[0], cfg.seq_len

    if mode not in ("greedy", "temperature"):
        raise ValueError(f"unknown generation mode {mode!r}")

    def next_token(t, prev_logits):
        if t == 0:
            return np.full(B, BOS, dtype=np.int64)
        return _pick(prev_logits.data, mode, temperature, rng)

    logits, used = _decode(params, cfg, enc_states, next_token, T, B, train=False)
    out = np.zeros((B, T), dtype=np.int64)
    # input at t+1 is the token generated for slot t; the final slot comes
    # straight from the last logits row
    out[:, :-1] = used[:, 1:]
    out[:, -1] = _pick(logits.data[:, -1, :], mode, temperature, rng)
    return out


def _pick(logits: np.ndarray, mode: str, temperature: float, rng) -> np.ndarray:
    if mode == "greedy":
        return logits.argmax(axis=1) + 1
    if mode != "temperature":
        raise ValueError(f"unknown generation mode {mode!r}")
    probs = kernels.softmax((logits / temperature).astype(np.float64))
    u = rng.random((logits.shape[0], 1))
    return (u > probs.cumsum(axis=1)).sum(axis=1).clip(0, N_ACTIVITY_TYPES - 1) + 1
