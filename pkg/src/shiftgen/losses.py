"""Masked training losses: cross-entropy, a differentiable transition-F1
surrogate, base-2 JSD distribution matching, and soft-label CE, plus their
weighted combination.

All components accept (T, C) or batched (B, T, C) inputs; batched values are
the mean of per-sample values. Every component ignores slots whose mask bit
is 0 (bit-identical under arbitrary target changes there). The hard
transition F1 has zero gradient almost everywhere, so training uses the soft
surrogate and the hard score is logged as a metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .core import N_ACTIVITY_TYPES

EPS = 1e-8
JSD_EPS = 1e-10
LN2 = float(np.log(2.0))


@dataclass
class LossWeights:
    alpha: float = 0.5  # transition surrogate
    beta: float = 0.3   # distribution matching
    gamma: float = 0.2  # soft labels
    tau: int = 2        # transition tolerance, slots
    w: int = 2          # soft-label blend window, slots

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0 or self.tau < 0 or self.w < 0:
            raise ValueError("loss weights and windows must be non-negative")


def _batched(arr) -> np.ndarray:
    a = np.asarray(arr)
    return a[None] if a.ndim == 1 else a


def _batched_logits(t: Tensor) -> Tensor:
    if t.data.ndim == 2:
        return ad.reshape(t, (1,) + t.data.shape)
    return t


def _onehot(target: np.ndarray, mask: np.ndarray, dtype) -> np.ndarray:
    """(B, T, C) one-hot of target codes; all-zero rows at masked slots."""
    B, T = target.shape
    out = np.zeros((B, T, N_ACTIVITY_TYPES), dtype=dtype)
    b, t = np.nonzero(mask > 0)
    out[b, t, target[b, t] - 1] = 1.0
    return out


def _obs_weights(mask: np.ndarray, dtype) -> np.ndarray:
    """(B, T) weights: 1/n_observed per sample, 0 rows for fully-masked samples."""
    mask = mask.astype(dtype)
    counts = mask.sum(axis=1, keepdims=True)
    return np.divide(mask, counts, out=np.zeros_like(mask), where=counts > 0)


def masked_ce(logits: Tensor, target, mask) -> Tensor:
    """Mean over observed slots of -log softmax(logits)[target]."""
    logits = _batched_logits(logits)
    target = _batched(target)
    mask = _batched(mask)
    B = target.shape[0]
    logp = ad.log_softmax(logits)
    w = _onehot(target, mask, logits.data.dtype) * _obs_weights(mask, logits.data.dtype)[:, :, None]
    return ad.scale(ad.reduce_sum(ad.mul(logp, Tensor(w))), -1.0 / B)


def transitions_of(grid, mask) -> set[int]:
    """Slots t where both t and t-1 are observed and the code changes."""
    grid = np.asarray(grid)
    mask = np.asarray(mask)
    ok = (mask[1:] > 0) & (mask[:-1] > 0) & (grid[1:] != grid[:-1])
    return set((np.flatnonzero(ok) + 1).tolist())


def _greedy_match(pred: list[int], true: list[int], tau: int) -> int:
    """Count of a maximum one-to-one matching with |dt| <= tau; both lists
    sorted. Matching each prediction to the earliest compatible unmatched
    truth is maximal for interval windows."""
    m = 0
    j = 0
    for p in pred:
        while j < len(true) and true[j] < p - tau:
            j += 1
        if j < len(true) and true[j] <= p + tau:
            m += 1
            j += 1
    return m


def transition_f1_hard(pred_grid, target_grid, tau: int, mask) -> float:
    """Transition F1 with +-tau slot tolerance; empty/empty -> 1, one empty -> 0."""
    pred = sorted(transitions_of(pred_grid, mask))
    true = sorted(transitions_of(target_grid, mask))
    if not pred and not true:
        return 1.0
    if not pred or not true:
        return 0.0
    matched = _greedy_match(pred, true, tau)
    precision = matched / len(pred)
    recall = matched / len(true)
    if matched == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _dilate(ind: np.ndarray, tau: int) -> np.ndarray:
    out = ind.copy()
    for k in range(1, tau + 1):
        out[:, k:] = np.maximum(out[:, k:], ind[:, :-k])
        out[:, :-k] = np.maximum(out[:, :-k], ind[:, k:])
    return out


def transition_loss_soft(probs: Tensor, target, mask, tau: int) -> Tensor:
    """Differentiable 1 - soft transition F1.

    Predicted transition score s_t = 1 - sum_c p[t] p[t-1]; the true indicator
    dilated by +-tau gives a soft true-positive mass. Samples without any true
    transition contribute their mean predicted transition score instead.
    """
    probs = _batched_logits(probs)
    target = _batched(target)
    mask = _batched(mask)
    B, T = target.shape
    dt = probs.data.dtype

    a = ad.slice_axis(probs, 1, 1, T)
    b = ad.slice_axis(probs, 1, 0, T - 1)
    s = ad.add_const(ad.scale(ad.reduce_sum(ad.mul(a, b), axis=2), -1.0), 1.0)

    valid = ((mask[:, 1:] > 0) & (mask[:, :-1] > 0)).astype(dt)
    true_ind = (valid * (target[:, 1:] != target[:, :-1])).astype(dt)
    dil = _dilate(true_ind, tau)
    n_true = true_ind.sum(axis=1)

    sv = ad.mul(s, Tensor(valid))
    tp = ad.reduce_sum(ad.mul(sv, Tensor(dil)), axis=1)
    total = ad.reduce_sum(sv, axis=1)
    precision = ad.div(tp, ad.add_const(total, EPS))
    recall = ad.minimum_const(ad.div(tp, Tensor((n_true + EPS).astype(dt))), 1.0)
    f1 = ad.div(ad.scale(ad.mul(precision, recall), 2.0),
                ad.add_const(ad.add(precision, recall), EPS))
    per_sample = ad.add_const(ad.scale(f1, -1.0), 1.0)

    # fallback for samples with no true transitions: mean predicted score
    n_valid = valid.sum(axis=1)
    fallback = ad.div(ad.reduce_sum(sv, axis=1),
                      Tensor((n_valid + EPS).astype(dt)))
    has_true = (n_true > 0).astype(dt)
    combined = ad.add(ad.mul(per_sample, Tensor(has_true)),
                      ad.mul(fallback, Tensor(1.0 - has_true)))
    return ad.scale(ad.reduce_sum(combined), 1.0 / B)


def _smoothed_rows(x: Tensor) -> Tensor:
    num = ad.add_const(x, JSD_EPS)
    return ad.div(num, ad.reduce_sum(num, axis=-1, keepdims=True))


def distribution_loss(probs: Tensor, target, mask) -> Tensor:
    """Base-2 JSD between the mean predicted class distribution over observed
    slots and the empirical observed target distribution; differentiable
    through the predictions."""
    probs = _batched_logits(probs)
    target = _batched(target)
    mask = _batched(mask)
    B = target.shape[0]
    dt = probs.data.dtype

    w = _obs_weights(mask, dt)
    p_hat = _smoothed_rows(ad.reduce_sum(ad.mul(probs, Tensor(w[:, :, None])), axis=1))

    counts = _onehot(target, mask, dt).sum(axis=1)
    totals = counts.sum(axis=1, keepdims=True)
    freq = np.divide(counts, totals, out=np.full_like(counts, 1.0 / N_ACTIVITY_TYPES),
                     where=totals > 0)
    freq = (freq + JSD_EPS) / (freq + JSD_EPS).sum(axis=1, keepdims=True)
    p_ref = Tensor(freq.astype(dt))

    m = ad.scale(ad.add(p_hat, p_ref), 0.5)
    log_m = ad.log(m)
    kl_hat = ad.reduce_sum(ad.mul(p_hat, ad.sub(ad.log(p_hat), log_m)), axis=1)
    kl_ref = ad.reduce_sum(ad.mul(p_ref, ad.sub(ad.log(p_ref), log_m)), axis=1)
    js = ad.scale(ad.add(kl_hat, kl_ref), 0.5 / LN2)
    return ad.scale(ad.reduce_sum(js), 1.0 / B)


def soft_targets(target, w: int) -> np.ndarray:
    """Row-stochastic targets blending codes near transition boundaries.

    A slot at distance d (d=1 adjacent) from its nearest boundary, d <= w,
    gets (w+2-d)/(w+2) on its own code and d/(w+2) on the code across the
    boundary; other rows are one-hot. w=0 is exactly one-hot.
    """
    single = np.asarray(target).ndim == 1
    target = _batched(target)
    B, T = target.shape
    out = np.zeros((B, T, N_ACTIVITY_TYPES), dtype=np.float64)
    for i in range(B):
        row = target[i]
        out[i, np.arange(T), row - 1] = 1.0
        boundaries = np.flatnonzero(row[1:] != row[:-1]) + 1
        if w == 0 or boundaries.size == 0:
            continue
        for t in range(T):
            best = None  # (d, other_code)
            for bn in boundaries:
                d = (bn - t) if t < bn else (t - bn + 1)
                other = row[bn] if t < bn else row[bn - 1]
                if d <= w and (best is None or d < best[0]):
                    best = (d, other)
            if best is not None:
                d, other = best
                own = (w + 2 - d) / (w + 2)
                out[i, t, :] = 0.0
                out[i, t, row[t] - 1] = own
                out[i, t, other - 1] += 1.0 - own
    return out[0] if single else out


def soft_label_loss(logits: Tensor, target, mask, w: int) -> Tensor:
    """Masked mean cross-entropy against the soft_targets rows."""
    logits = _batched_logits(logits)
    target = _batched(target)
    mask = _batched(mask)
    B = target.shape[0]
    dt = logits.data.dtype
    # blend within contiguous observed segments only, so masked slots neither
    # receive weight nor act as transition boundaries
    soft = np.zeros(logits.data.shape, dtype=np.float64)
    for i in range(B):
        obs = np.flatnonzero(mask[i] > 0)
        if obs.size == 0:
            continue
        breaks = np.flatnonzero(np.diff(obs) > 1) + 1
        for seg in np.split(obs, breaks):
            soft[i, seg] = soft_targets(target[i, seg], w)
    soft = soft.astype(dt)
    weights = _obs_weights(mask, dt)[:, :, None]
    logp = ad.log_softmax(logits)
    return ad.scale(ad.reduce_sum(ad.mul(logp, Tensor(soft * weights))), -1.0 / B)


def combined_loss(logits: Tensor, target, mask,
                  weights: LossWeights) -> tuple[Tensor, dict[str, float]]:
    """CE + alpha*transition + beta*distribution + gamma*soft-label.

    Returns the scalar loss tensor and a per-component breakdown (components
    with zero weight are not evaluated and report 0).
    """
    total = masked_ce(logits, target, mask)
    breakdown = {"ce": total.item(), "trans": 0.0, "dist": 0.0, "soft": 0.0}
    probs = None
    if weights.alpha > 0:
        probs = ad.softmax(logits)
        lt = transition_loss_soft(probs, target, mask, weights.tau)
        breakdown["trans"] = lt.item()
        total = ad.add(total, ad.scale(lt, weights.alpha))
    if weights.beta > 0:
        probs = probs if probs is not None else ad.softmax(logits)
        ld = distribution_loss(probs, target, mask)
        breakdown["dist"] = ld.item()
        total = ad.add(total, ad.scale(ld, weights.beta))
    if weights.gamma > 0:
        ls = soft_label_loss(logits, target, mask, weights.w)
        breakdown["soft"] = ls.item()
        total = ad.add(total, ad.scale(ls, weights.gamma))
    breakdown["total"] = total.item()
    return total, breakdown
