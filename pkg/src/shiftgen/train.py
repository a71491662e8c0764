"""Training loop: progressive artificial masking, teacher forcing, combined
loss, validation tracking, and binary checkpoints."""

from __future__ import annotations

import json
import struct
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import baseline
from . import model as tfm
from .autodiff import Tensor
from .core import Corpus, N_SLOTS
from .evaluate import evaluate
from .losses import LossWeights, combined_loss, transition_f1_hard
from .model import ModelConfig, period_of, PERIOD_OVERNIGHT
from .optim import AdamState, adam_step, clip_global_norm

CKPT_MAGIC = b"SGCKPT1\n"


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32  # paper used 256 at datacenter scale
    lr: float = 1e-4
    weight_decay: float = 1e-5
    clip: float = 1.0
    alpha: float = 0.5
    beta: float = 0.3
    gamma: float = 0.2
    tau: int = 2
    soft_w: int = 2
    p_tf: float = 0.5
    p_tf_schedule: str = "constant"  # or "linear": decay p_tf -> 0 across epochs
    r_min: float = 0.10
    r_max: float = 0.40
    overnight_bias: float = 2.0
    lr_schedule: str = "constant"  # or "cosine": decay lr to ~0 over the run
    swa_epochs: int = 0  # >0: return the average of the last k epochs' weights
    select: str = "val_loss"  # or "val_jsd": keep the epoch with best val JSD
    seed: int = 0
    val_jsd_pairs: int = 64  # cap on pairs used for per-epoch val JSD

    def __post_init__(self):
        if not (0.0 <= self.r_min <= self.r_max < 1.0):
            raise ValueError("need 0 <= r_min <= r_max < 1")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.p_tf_schedule not in ("constant", "linear"):
            raise ValueError(f"unknown p_tf_schedule {self.p_tf_schedule!r}")
        if self.select not in ("val_loss", "val_jsd"):
            raise ValueError(f"unknown select {self.select!r}")
        if self.select == "val_jsd" and self.val_jsd_pairs <= 0:
            raise ValueError("select='val_jsd' needs val_jsd_pairs > 0")

    def weights(self) -> LossWeights:
        return LossWeights(self.alpha, self.beta, self.gamma, self.tau, self.soft_w)


@dataclass
class TrainReport:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    wall_time: float = 0.0


def masking_schedule(epoch: int, total_epochs: int, r_min: float, r_max: float) -> float:
    """Linear ramp from r_min (epoch 1) to r_max (last epoch)."""
    if total_epochs <= 1:
        return r_min
    return r_min + (r_max - r_min) * (epoch - 1) / (total_epochs - 1)


def apply_artificial_mask(mask: np.ndarray, ratio: float, overnight_bias: float,
                          rng: np.random.Generator) -> np.ndarray:
    """Hide ~ratio of the observed slots, preferring overnight ones.

    Never touches already-hidden slots, so the result is a subset of `mask`.
    """
    mask = np.asarray(mask)
    observed = np.flatnonzero(mask > 0)
    k = int(round(ratio * observed.size))
    if k == 0:
        return mask.copy()
    weights = np.ones(observed.size)
    weights[period_of(observed % N_SLOTS) == PERIOD_OVERNIGHT] = overnight_bias
    chosen = rng.choice(observed, size=k, replace=False, p=weights / weights.sum())
    out = mask.copy()
    out[chosen] = 0
    return out


class Model:
    """Uniform handle over the transformer and the LSTM baseline."""

    def __init__(self, kind: str, cfg: ModelConfig, params=None, rng=None):
        if kind not in ("transformer", "lstm"):
            raise ValueError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.cfg = cfg
        self._mod = tfm if kind == "transformer" else baseline
        self.params = params if params is not None else self._mod.init_params(cfg, rng)

    def forward(self, day1, mask1, day2, mask2, p_tf, rng, train):
        mem = self._mod.encode(self.params, self.cfg, day1, mask1, train=train, rng=rng)
        logits, _ = self._mod.decode_teacher_forced(
            self.params, self.cfg, mem, day2, mask2, p_tf, rng=rng, train=train)
        return logits

    def generate(self, day1, mask1, mode="greedy", temperature=1.0, rng=None):
        return self._mod.generate(self.params, self.cfg, day1, mask1,
                                  mode=mode, temperature=temperature, rng=rng)


def _stack(pairs):
    return (np.stack([p.day1 for p in pairs]), np.stack([p.mask1 for p in pairs]),
            np.stack([p.day2 for p in pairs]), np.stack([p.mask2 for p in pairs]))


def _collect_grads(params) -> dict[str, np.ndarray]:
    return {k: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for k, t in params.items()}


def _val_metrics(mdl: Model, val_pairs, weights, jsd_pairs: int) -> dict:
    day1, mask1, day2, mask2 = _stack(val_pairs)
    logits = mdl.forward(day1, mask1, day2, mask2, p_tf=1.0, rng=None, train=False)
    loss, breakdown = combined_loss(logits, day2, mask2, weights)
    pred = logits.data.argmax(axis=2) + 1
    f1 = float(np.mean([
        transition_f1_hard(pred[i], day2[i], weights.tau, mask2[i])
        for i in range(len(val_pairs))
    ]))
    subset = val_pairs[:jsd_pairs]
    metrics = {}
    if subset:
        report, _, _ = evaluate(lambda d1, m1: mdl.generate(d1, m1), subset)
        metrics = {f"val_jsd_{k}": v for k, v in report.jsd.items()}
        metrics["val_jsd_average"] = report.average
    return {"val_loss": float(loss.item()),
            **{f"val_{k}": v for k, v in breakdown.items()},
            "val_hard_f1": f1, **metrics}


def train(corpus: Corpus, kind: str, mcfg: ModelConfig, tcfg: TrainConfig,
          checkpoint_path=None, log_path=None, resume_from=None,
          quiet: bool = True) -> tuple[Model, TrainReport]:
    train_pairs = corpus.split("train")
    val_pairs = corpus.split("val")
    if not train_pairs or not val_pairs:
        raise ValueError("corpus needs non-empty train and val splits")
    rng = np.random.default_rng(tcfg.seed)
    weights = tcfg.weights()
    start_epoch = 1
    adam = AdamState(lr=tcfg.lr, weight_decay=tcfg.weight_decay)
    if resume_from:
        ck = load_checkpoint(resume_from, expect_model_cfg=mcfg)
        mdl = Model(ck["kind"], mcfg, params=ck["params"])
        adam = ck["adam"]
        start_epoch = ck["epoch"] + 1
        # keep the data/augmentation stream aligned with the schedule position
        for _ in range(ck["epoch"]):
            rng = np.random.default_rng(rng.integers(2**63))
    else:
        mdl = Model(kind, mcfg, rng=rng)

    report = TrainReport()
    best_params = None
    swa_sum = None
    swa_count = 0
    t0 = time.perf_counter()
    log_fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(start_epoch, tcfg.epochs + 1):
            epoch_rng = np.random.default_rng(rng.integers(2**63))
            ratio = masking_schedule(epoch, tcfg.epochs, tcfg.r_min, tcfg.r_max)
            if tcfg.lr_schedule == "cosine":
                adam.lr = tcfg.lr * 0.5 * (1.0 + np.cos(np.pi * (epoch - 1) / tcfg.epochs))
            p_tf = tcfg.p_tf
            if tcfg.p_tf_schedule == "linear" and tcfg.epochs > 1:
                p_tf = tcfg.p_tf * (tcfg.epochs - epoch) / (tcfg.epochs - 1)
            order = epoch_rng.permutation(len(train_pairs))
            sums: dict[str, float] = {}
            n_batches = 0
            for lo in range(0, len(order), tcfg.batch_size):
                batch = [train_pairs[i] for i in order[lo : lo + tcfg.batch_size]]
                day1, mask1, day2, mask2 = _stack(batch)
                am1 = np.stack([apply_artificial_mask(m, ratio, tcfg.overnight_bias, epoch_rng)
                                for m in mask1])
                am2 = np.stack([apply_artificial_mask(m, ratio, tcfg.overnight_bias, epoch_rng)
                                for m in mask2])
                logits = mdl.forward(day1, am1, day2, am2, p_tf, epoch_rng, train=True)
                loss, breakdown = combined_loss(logits, day2, am2, weights)
                ad.backward(loss)
                grads = _collect_grads(mdl.params)
                clip_global_norm(grads, tcfg.clip)
                adam_step(adam, mdl.params, grads)
                for k, v in breakdown.items():
                    sums[k] = sums.get(k, 0.0) + v
                n_batches += 1
            if tcfg.swa_epochs and epoch > tcfg.epochs - tcfg.swa_epochs:
                if swa_sum is None:
                    swa_sum = {k: t.data.astype(np.float64) for k, t in mdl.params.items()}
                else:
                    for k, t in mdl.params.items():
                        swa_sum[k] += t.data
                swa_count += 1
            record = {"epoch": epoch, "mask_ratio": ratio,
                      **{f"train_{k}": v / n_batches for k, v in sums.items()}}
            record.update(_val_metrics(mdl, val_pairs, weights, tcfg.val_jsd_pairs))
            report.epochs.append(record)
            score = (record["val_jsd_average"] if tcfg.select == "val_jsd"
                     else record["val_loss"])
            if score < report.best_val_loss:
                report.best_val_loss = score
                report.best_epoch = epoch
                best_params = {k: t.data.copy() for k, t in mdl.params.items()}
                if checkpoint_path:
                    save_checkpoint(checkpoint_path, mdl, adam, epoch, mcfg, tcfg)
            if log_fh:
                log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            if not quiet:
                print(f"epoch {epoch}: train {record.get('train_total', 0.0):.4f} "
                      f"val {record['val_loss']:.4f}")
    finally:
        if log_fh:
            log_fh.close()
    if swa_sum is not None:
        for k, t in mdl.params.items():
            t.data = (swa_sum[k] / swa_count).astype(t.data.dtype)
        if checkpoint_path:
            save_checkpoint(checkpoint_path, mdl, adam, tcfg.epochs, mcfg, tcfg)
    elif best_params is not None:
        for k, t in mdl.params.items():
            t.data = best_params[k]
    report.wall_time = time.perf_counter() - t0
    return mdl, report


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, mdl: Model, adam: AdamState, epoch: int,
                    mcfg: ModelConfig, tcfg: TrainConfig) -> None:
    names = sorted(mdl.params)
    header = {
        "version": 1,
        "kind": mdl.kind,
        "epoch": epoch,
        "model_cfg": asdict(mcfg),
        "train_cfg": asdict(tcfg),
        "params": [{"name": n, "shape": list(mdl.params[n].data.shape),
                    "dtype": str(mdl.params[n].data.dtype)} for n in names],
        "adam": {"lr": adam.lr, "weight_decay": adam.weight_decay,
                 "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps,
                 "step_count": adam.step_count,
                 "moment_names": sorted(adam.m)},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(mdl.params[n].data).astype("<f8").tobytes())
        for n in header["adam"]["moment_names"]:
            fh.write(np.ascontiguousarray(adam.m[n]).astype("<f8").tobytes())
            fh.write(np.ascontiguousarray(adam.v[n]).astype("<f8").tobytes())


def load_checkpoint(path, expect_model_cfg: ModelConfig | None = None) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint (bad magic)")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n))
        if header["version"] != 1:
            raise ValueError(f"{path}: unsupported checkpoint version {header['version']}")
        mcfg = ModelConfig(**header["model_cfg"])
        if expect_model_cfg is not None:
            stored_params = {p["name"]: tuple(p["shape"]) for p in header["params"]}
            probe_rng = np.random.default_rng(0)
            mod = tfm if header["kind"] == "transformer" else baseline
            expected = {k: t.data.shape for k, t in mod.init_params(expect_model_cfg, probe_rng).items()}
            for name, shape in expected.items():
                if stored_params.get(name) != shape:
                    raise ValueError(
                        f"{path}: parameter {name!r} has shape {stored_params.get(name)}, "
                        f"expected {shape}")
            mcfg = expect_model_cfg
        dtype = mcfg.np_dtype
        params = {}
        for meta in header["params"]:
            size = int(np.prod(meta["shape"])) if meta["shape"] else 1
            raw = np.frombuffer(fh.read(size * 8), dtype="<f8")
            params[meta["name"]] = Tensor(
                raw.reshape(meta["shape"]).astype(dtype), name=meta["name"])
        a = header["adam"]
        adam = AdamState(lr=a["lr"], weight_decay=a["weight_decay"], beta1=a["beta1"],
                         beta2=a["beta2"], eps=a["eps"], step_count=a["step_count"])
        for name in a["moment_names"]:
            shape = params[name].data.shape
            size = int(np.prod(shape)) if shape else 1
            adam.m[name] = np.frombuffer(fh.read(size * 8), dtype="<f8").reshape(shape).astype(dtype)
            adam.v[name] = np.frombuffer(fh.read(size * 8), dtype="<f8").reshape(shape).astype(dtype)
        return {"kind": header["kind"], "epoch": header["epoch"], "model_cfg": mcfg,
                "train_cfg": header["train_cfg"], "params": params, "adam": adam}
