"""Period-aware transformer encoder-decoder over 96-slot activity days.

The encoder reads day 1 (gaps filled with the UNOBSERVED sentinel); the
decoder autoregressively produces day 2 activity logits. Training uses the
taped graph in this module; generation and scheduled-sampling input selection
use a numpy incremental decoder with per-layer KV caches that mirrors the
taped math exactly (eval mode).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import Tensor
from .core import BOS, N_ACTIVITY_TYPES, N_SLOTS, UNOBSERVED

VOCAB = N_ACTIVITY_TYPES + 2  # 15 real codes + UNOBSERVED + BOS

PERIOD_EVENING_START = 0
PERIOD_OVERNIGHT = 1
PERIOD_MORNING = 2
PERIOD_OTHER = 3
PERIOD_NAMES = ("evening_start", "overnight", "morning", "other")
N_PERIODS = 4

NEG_INF = -1e9


def period_of(t):
    """Map slot index (scalar or array) to its period id.

    evening_start [72,88), overnight [88,96)+[0,24), morning [24,40),
    other [40,72).
    """
    arr = np.asarray(t)
    if arr.min() < 0 or arr.max() >= N_SLOTS:
        raise ValueError(f"slot index out of range 0..{N_SLOTS - 1}: {t}")
    out = np.full(arr.shape, PERIOD_OTHER, dtype=np.int64)
    out[(arr >= 72) & (arr < 88)] = PERIOD_EVENING_START
    out[(arr >= 88) | (arr < 24)] = PERIOD_OVERNIGHT
    out[(arr >= 24) & (arr < 40)] = PERIOD_MORNING
    if np.isscalar(t) or arr.shape == ():
        return int(out)
    return out


@dataclass
class ModelConfig:
    d_model: int = 64
    heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    dropout: float = 0.1
    ff_width: int = 0  # 0 -> 4 * d_model
    seq_len: int = N_SLOTS
    p_tf: float = 0.5
    mask_unobserved_keys: bool = False  # alternative to sentinel-token handling
    dtype: str = "float32"

    def __post_init__(self):
        if self.ff_width == 0:
            self.ff_width = 4 * self.d_model
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)


def paper_config(**overrides) -> ModelConfig:
    base = dict(d_model=128, heads=8, encoder_layers=4, decoder_layers=4)
    base.update(overrides)
    return ModelConfig(**base)


@lru_cache(maxsize=8)
def sinusoid_table(seq_len: int, d_model: int, dtype: str) -> np.ndarray:
    """Fixed day-periodic features: sin/cos(2*pi*k*t/96), k = 1..d/2, interleaved."""
    t = np.arange(seq_len)[:, None]
    k = np.arange(1, d_model // 2 + 1)[None, :]
    ang = 2.0 * np.pi * k * t / N_SLOTS
    table = np.empty((seq_len, d_model), dtype=np.dtype(dtype))
    table[:, 0::2] = np.sin(ang)
    table[:, 1::2] = np.cos(ang)
    return table


def _xavier(rng, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    dt = cfg.np_dtype
    d, ff = cfg.d_model, cfg.ff_width
    p: dict[str, np.ndarray] = {
        "e_act": (rng.standard_normal((VOCAB, d)) * 0.02).astype(dt),
        "e_pos": (rng.standard_normal((cfg.seq_len, d)) * 0.02).astype(dt),
        "e_period": (rng.standard_normal((N_PERIODS, d)) * 0.02).astype(dt),
    }

    def block(prefix, cross=False):
        p[f"{prefix}.ln1.g"] = np.ones(d, dtype=dt)
        p[f"{prefix}.ln1.b"] = np.zeros(d, dtype=dt)
        for w in ("wq", "wk", "wv", "wo"):
            p[f"{prefix}.{w}"] = _xavier(rng, d, d, dt)
        if cross:
            p[f"{prefix}.ln2.g"] = np.ones(d, dtype=dt)
            p[f"{prefix}.ln2.b"] = np.zeros(d, dtype=dt)
            for w in ("cq", "ck", "cv", "co"):
                p[f"{prefix}.{w}"] = _xavier(rng, d, d, dt)
        ln_ff = "ln3" if cross else "ln2"
        p[f"{prefix}.{ln_ff}.g"] = np.ones(d, dtype=dt)
        p[f"{prefix}.{ln_ff}.b"] = np.zeros(d, dtype=dt)
        p[f"{prefix}.ff1.w"] = _xavier(rng, d, ff, dt)
        p[f"{prefix}.ff1.b"] = np.zeros(ff, dtype=dt)
        p[f"{prefix}.ff2.w"] = _xavier(rng, ff, d, dt)
        p[f"{prefix}.ff2.b"] = np.zeros(d, dtype=dt)

    for i in range(cfg.encoder_layers):
        block(f"enc{i}")
    for i in range(cfg.decoder_layers):
        block(f"dec{i}", cross=True)
    p["enc_ln.g"] = np.ones(d, dtype=dt)
    p["enc_ln.b"] = np.zeros(d, dtype=dt)
    p["dec_ln.g"] = np.ones(d, dtype=dt)
    p["dec_ln.b"] = np.zeros(d, dtype=dt)
    p["out.w"] = _xavier(rng, d, N_ACTIVITY_TYPES, dt)
    p["out.b"] = np.zeros(N_ACTIVITY_TYPES, dtype=dt)
    return {k: Tensor(v, name=k) for k, v in p.items()}


# ---------------------------------------------------------------------------
# taped forward
# ---------------------------------------------------------------------------

def time_embedding(params: dict[str, Tensor], cfg: ModelConfig, length: int) -> Tensor:
    """Learned positional row + learned period row + fixed sinusoids, per slot."""
    slots = np.arange(length)
    e_pos = ad.slice_axis(params["e_pos"], 0, 0, length)
    e_per = ad.embedding(params["e_period"], period_of(slots))
    e_sin = Tensor(sinusoid_table(cfg.seq_len, cfg.d_model, cfg.dtype)[:length])
    return ad.add(ad.add(e_pos, e_per), e_sin)


def masked_codes(grid: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Token ids for model input: the grid with UNOBSERVED wherever mask is 0."""
    return np.where(np.asarray(mask) > 0, np.asarray(grid), UNOBSERVED).astype(np.int64)


def embed_sequence(params, cfg, tokens: np.ndarray) -> Tensor:
    """tokens (B, T) int -> (B, T, d): activity embedding + time embedding."""
    tokens = np.atleast_2d(np.asarray(tokens, dtype=np.int64))
    act = ad.embedding(params["e_act"], tokens)
    return ad.add(act, time_embedding(params, cfg, tokens.shape[1]))


def _heads(cfg, x: Tensor, B: int, T: int) -> Tensor:
    h, dh = cfg.heads, cfg.d_model // cfg.heads
    return ad.transpose(ad.reshape(x, (B, T, h, dh)), (0, 2, 1, 3))


def _merge_heads(cfg, x: Tensor, B: int, T: int) -> Tensor:
    return ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (B, T, cfg.d_model))


def _attention(cfg, params, prefix, wq, wk, wv, wo, x_q: Tensor, x_kv: Tensor,
               bias: np.ndarray | None) -> Tensor:
    """Scaled dot-product attention; `bias` is an additive pre-softmax mask."""
    B, Tq = x_q.data.shape[0], x_q.data.shape[1]
    Tk = x_kv.data.shape[1]
    dh = cfg.d_model // cfg.heads
    q = _heads(cfg, ad.matmul(x_q, params[f"{prefix}.{wq}"]), B, Tq)
    k = _heads(cfg, ad.matmul(x_kv, params[f"{prefix}.{wk}"]), B, Tk)
    v = _heads(cfg, ad.matmul(x_kv, params[f"{prefix}.{wv}"]), B, Tk)
    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    if bias is not None:
        scores = ad.add_const(scores, bias.astype(x_q.data.dtype))
    probs = ad.softmax(scores)
    ctx = _merge_heads(cfg, ad.matmul(probs, v), B, Tq)
    return ad.matmul(ctx, params[f"{prefix}.{wo}"])


def _ff(params, prefix, x: Tensor) -> Tensor:
    h = ad.relu(ad.add(ad.matmul(x, params[f"{prefix}.ff1.w"]), params[f"{prefix}.ff1.b"]))
    return ad.add(ad.matmul(h, params[f"{prefix}.ff2.w"]), params[f"{prefix}.ff2.b"])


def _ln(params, name, x: Tensor) -> Tensor:
    return ad.layer_norm(x, params[f"{name}.g"], params[f"{name}.b"])


def encode(params, cfg: ModelConfig, day1: np.ndarray, mask1: np.ndarray,
           train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Full self-attention encoder over the masked day-1 tokens -> (B, T, d)."""
    day1 = np.atleast_2d(day1)
    mask1 = np.atleast_2d(mask1)
    tokens = masked_codes(day1, mask1)
    bias = None
    if cfg.mask_unobserved_keys:
        bias = np.where(mask1[:, None, None, :] > 0, 0.0, NEG_INF)
    x = ad.dropout(embed_sequence(params, cfg, tokens), cfg.dropout, rng, train)
    for i in range(cfg.encoder_layers):
        pre = f"enc{i}"
        xn = _ln(params, f"{pre}.ln1", x)
        a = _attention(cfg, params, pre, "wq", "wk", "wv", "wo", xn, xn, bias)
        x = ad.add(x, ad.dropout(a, cfg.dropout, rng, train))
        f = _ff(params, pre, _ln(params, f"{pre}.ln2", x))
        x = ad.add(x, ad.dropout(f, cfg.dropout, rng, train))
    return _ln(params, "enc_ln", x)


def _causal_bias(T: int) -> np.ndarray:
    return np.triu(np.full((T, T), NEG_INF), k=1)


def decoder_forward(params, cfg: ModelConfig, memory: Tensor, dec_tokens: np.ndarray,
                    train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Causal decoder over given input tokens -> (B, T, 15) logits."""
    dec_tokens = np.atleast_2d(dec_tokens)
    B, T = dec_tokens.shape
    x = ad.dropout(embed_sequence(params, cfg, dec_tokens), cfg.dropout, rng, train)
    causal = _causal_bias(T)
    for i in range(cfg.decoder_layers):
        pre = f"dec{i}"
        xn = _ln(params, f"{pre}.ln1", x)
        a = _attention(cfg, params, pre, "wq", "wk", "wv", "wo", xn, xn, causal)
        x = ad.add(x, ad.dropout(a, cfg.dropout, rng, train))
        c = _attention(cfg, params, pre, "cq", "ck", "cv", "co",
                       _ln(params, f"{pre}.ln2", x), memory, None)
        x = ad.add(x, ad.dropout(c, cfg.dropout, rng, train))
        f = _ff(params, pre, _ln(params, f"{pre}.ln3", x))
        x = ad.add(x, ad.dropout(f, cfg.dropout, rng, train))
    x = _ln(params, "dec_ln", x)
    return ad.add(ad.matmul(x, params["out.w"]), params["out.b"])


def teacher_tokens(day2: np.ndarray, mask2: np.ndarray) -> np.ndarray:
    """Decoder inputs under full teacher forcing: BOS then masked day2[:-1]."""
    codes = masked_codes(np.atleast_2d(day2), np.atleast_2d(mask2))
    return np.concatenate(
        [np.full((codes.shape[0], 1), BOS, dtype=np.int64), codes[:, :-1]], axis=1
    )


def decode_teacher_forced(params, cfg: ModelConfig, memory: Tensor,
                          day2: np.ndarray, mask2: np.ndarray, p_tf: float,
                          rng: np.random.Generator | None = None,
                          train: bool = False) -> tuple[Tensor, np.ndarray]:
    """Scheduled-sampling decode: each input slot t>=1 is ground truth with
    probability p_tf, otherwise the model's own argmax at t-1.

    Returns (logits, the input tokens actually used). When any input is
    sampled, the inputs are selected by a sequential eval-mode pass, then the
    logits come from one parallel pass over those fixed inputs.
    """
    day2 = np.atleast_2d(day2)
    mask2 = np.atleast_2d(mask2)
    teacher = teacher_tokens(day2, mask2)
    B, T = teacher.shape
    if p_tf >= 1.0:
        inputs = teacher
    else:
        use_teacher = (rng.random((B, T)) < p_tf)
        use_teacher[:, 0] = True  # position 0 is always BOS
        inputs = _select_inputs(params, cfg, memory.data, teacher, use_teacher)
    return decoder_forward(params, cfg, memory, inputs, train=train, rng=rng), inputs


def _select_inputs(params, cfg, memory: np.ndarray, teacher: np.ndarray,
                   use_teacher: np.ndarray) -> np.ndarray:
    dec = IncrementalDecoder(params, cfg, memory)
    B, T = teacher.shape
    inputs = teacher.copy()
    prev_argmax = None
    for t in range(T):
        if t > 0 and prev_argmax is not None:
            free = ~use_teacher[:, t]
            inputs[free, t] = prev_argmax[free] + 1  # class index -> code
        logits = dec.step(inputs[:, t], t)
        prev_argmax = logits.argmax(axis=1)
    return inputs


# ---------------------------------------------------------------------------
# incremental (numpy, eval-mode) decoding
# ---------------------------------------------------------------------------

def _np_ln(params, name, x):
    y, _, _ = kernels.layer_norm(x, params[f"{name}.g"].data, params[f"{name}.b"].data)
    return y


class IncrementalDecoder:
    """KV-cached eval-mode decoder; numerically identical to decoder_forward
    with dropout off (see the parity test)."""

    def __init__(self, params, cfg: ModelConfig, memory: np.ndarray):
        self.p = params
        self.cfg = cfg
        memory = np.asarray(memory)
        if memory.ndim == 2:
            memory = memory[None]
        self.memory = memory
        B = self.memory.shape[0]
        h, dh = cfg.heads, cfg.d_model // cfg.heads
        self.k_cache = [np.zeros((B, h, 0, dh), dtype=memory.dtype)
                        for _ in range(cfg.decoder_layers)]
        self.v_cache = [np.zeros((B, h, 0, dh), dtype=memory.dtype)
                        for _ in range(cfg.decoder_layers)]
        # cross-attention keys/values are fixed by the memory
        self.mem_k = []
        self.mem_v = []
        Tm = self.memory.shape[1]
        for i in range(cfg.decoder_layers):
            mk = (self.memory @ params[f"dec{i}.ck"].data).reshape(B, Tm, h, dh)
            mv = (self.memory @ params[f"dec{i}.cv"].data).reshape(B, Tm, h, dh)
            self.mem_k.append(mk.transpose(0, 2, 1, 3))
            self.mem_v.append(mv.transpose(0, 2, 1, 3))
        self.time_table = (
            sinusoid_table(cfg.seq_len, cfg.d_model, cfg.dtype)
            + params["e_pos"].data
            + params["e_period"].data[period_of(np.arange(cfg.seq_len))]
        )

    def step(self, tokens: np.ndarray, pos: int) -> np.ndarray:
        """Feed one input token per sequence at position `pos`; returns (B, 15) logits."""
        p, cfg = self.p, self.cfg
        B = self.memory.shape[0]
        h, dh = cfg.heads, cfg.d_model // cfg.heads
        x = (p["e_act"].data[np.asarray(tokens, dtype=np.int64)]
             + self.time_table[pos])[:, None, :]  # (B, 1, d)
        scale = 1.0 / np.sqrt(dh)
        for i in range(cfg.decoder_layers):
            pre = f"dec{i}"
            xn = _np_ln(p, f"{pre}.ln1", x)
            q = (xn @ p[f"{pre}.wq"].data).reshape(B, 1, h, dh).transpose(0, 2, 1, 3)
            k = (xn @ p[f"{pre}.wk"].data).reshape(B, 1, h, dh).transpose(0, 2, 1, 3)
            v = (xn @ p[f"{pre}.wv"].data).reshape(B, 1, h, dh).transpose(0, 2, 1, 3)
            self.k_cache[i] = np.concatenate([self.k_cache[i], k], axis=2)
            self.v_cache[i] = np.concatenate([self.v_cache[i], v], axis=2)
            att = kernels.softmax(q @ self.k_cache[i].transpose(0, 1, 3, 2) * scale)
            ctx = (att @ self.v_cache[i]).transpose(0, 2, 1, 3).reshape(B, 1, cfg.d_model)
            x = x + ctx @ p[f"{pre}.wo"].data
            xn = _np_ln(p, f"{pre}.ln2", x)
            q = (xn @ p[f"{pre}.cq"].data).reshape(B, 1, h, dh).transpose(0, 2, 1, 3)
            att = kernels.softmax(q @ self.mem_k[i].transpose(0, 1, 3, 2) * scale)
            ctx = (att @ self.mem_v[i]).transpose(0, 2, 1, 3).reshape(B, 1, cfg.d_model)
            x = x + ctx @ p[f"{pre}.co"].data
            xn = _np_ln(p, f"{pre}.ln3", x)
            hmid = np.maximum(xn @ p[f"{pre}.ff1.w"].data + p[f"{pre}.ff1.b"].data, 0)
            x = x + hmid @ p[f"{pre}.ff2.w"].data + p[f"{pre}.ff2.b"].data
        x = _np_ln(p, "dec_ln", x)
        return (x @ p["out.w"].data + p["out.b"].data)[:, 0, :]


def generate(params, cfg: ModelConfig, day1: np.ndarray, mask1: np.ndarray,
             mode: str = "greedy", temperature: float = 1.0,
             rng: np.random.Generator | None = None) -> np.ndarray:
    """Autoregressive day-2 generation: (B, T) grids of real codes 1..15."""
    day1 = np.atleast_2d(day1)
    memory = encode(params, cfg, day1, np.atleast_2d(mask1), train=False)
    dec = IncrementalDecoder(params, cfg, memory.data)
    B, T = day1.shape[0], cfg.seq_len
    out = np.zeros((B, T), dtype=np.int64)
    tokens = np.full(B, BOS, dtype=np.int64)
    for t in range(T):
        logits = dec.step(tokens, t)
        if mode == "greedy":
            cls = logits.argmax(axis=1)
        elif mode == "temperature":
            probs = kernels.softmax((logits / temperature).astype(np.float64))
            cum = probs.cumsum(axis=1)
            u = rng.random((B, 1))
            cls = (u > cum).sum(axis=1).clip(0, N_ACTIVITY_TYPES - 1)
        else:
            raise ValueError(f"unknown generation mode {mode!r}")
        out[:, t] = cls + 1
        tokens = out[:, t]
    return out
