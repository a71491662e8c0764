"""Command-line entry points: synth / train / generate / eval / gradcheck.

Every option can also come from a flat JSON config file (--config, or the
SHIFTGEN_CONFIG environment variable); explicit flags win over file values.
Outputs land in a per-run directory unless --out overrides it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import gradcheck as gc
from .core import AgentDayPair, Corpus, N_SLOTS, load_corpus, save_corpus
from .evaluate import emit_report, evaluate
from .model import ModelConfig
from .synthgen import NO_GAPS, PRESETS, calibration_report, generate_corpus
from .train import Model, TrainConfig, load_checkpoint, train

MODEL_KEYS = [f.name for f in fields(ModelConfig)]
TRAIN_KEYS = [f.name for f in fields(TrainConfig)]


class CliError(Exception):
    pass


def _add_common(p):
    p.add_argument("--config", help="flat JSON config file (flags win over it)")
    p.add_argument("--out", help="output directory (default: runs/<timestamp>-seed<seed>)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shiftgen",
                                 description="activity-chain generation pipeline")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--n", type=int, help="number of agent day-pairs")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--no-gaps", action="store_true", default=argparse.SUPPRESS,
                   help="emit fully-observed traces")
    _add_common(p)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("--corpus", help="corpus JSONL produced by synth")
    p.add_argument("--model", choices=["transformer", "lstm"])
    p.add_argument("--resume", help="checkpoint to resume from")
    for key in TRAIN_KEYS:
        if key != "seed":
            p.add_argument(f"--{key.replace('_', '-')}",
                           type=type(getattr(TrainConfig(), key)))
    for key in ("d_model", "heads", "encoder_layers", "decoder_layers"):
        p.add_argument(f"--{key.replace('_', '-')}", type=int)
    p.add_argument("--dropout", type=float)
    _add_common(p)

    p = sub.add_parser("generate", help="generate day-2 chains from a checkpoint")
    p.add_argument("--checkpoint", help="checkpoint from train")
    p.add_argument("--corpus")
    p.add_argument("--split", choices=["train", "val", "test", "all"])
    p.add_argument("--mode", choices=["greedy", "temperature"])
    p.add_argument("--temperature", type=float)
    _add_common(p)

    p = sub.add_parser("eval", help="distributional evaluation of a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--corpus")
    p.add_argument("--split", choices=["train", "val", "test", "all"])
    _add_common(p)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    _add_common(p)
    return ap


DEFAULTS = {
    "synth": {"n": 1000, "preset": "population", "no_gaps": False,
              "seed": 0, "workers": 1, "quiet": False},
    "train": {"corpus": None, "model": "transformer", "resume": None,
              "d_model": 64, "heads": 4, "encoder_layers": 2, "decoder_layers": 2,
              "dropout": 0.1, "workers": 1, "quiet": False,
              **{k: getattr(TrainConfig(), k) for k in TRAIN_KEYS}},
    "generate": {"checkpoint": None, "corpus": None, "split": "test",
                 "mode": "greedy", "temperature": 1.0,
                 "seed": 0, "workers": 1, "quiet": False},
    "eval": {"checkpoint": None, "corpus": None, "split": "test",
             "seed": 0, "workers": 1, "quiet": False},
    "gradcheck": {"seed": 0, "workers": 1, "quiet": False},
}


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    cfg = dict(DEFAULTS[args.subcommand])
    path = getattr(args, "config", None) or os.environ.get("SHIFTGEN_CONFIG")
    if path:
        try:
            with open(path) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"config file {path}: {exc}")
        if not isinstance(file_cfg, dict):
            raise CliError(f"config file {path}: expected a flat JSON object")
        for key, value in file_cfg.items():
            if key in cfg:
                cfg[key] = value
    for key, value in vars(args).items():
        if key in ("config", "subcommand") or value is None:
            continue
        cfg[key] = value
    cfg["subcommand"] = args.subcommand
    return cfg


def _run_dir(cfg: dict) -> Path:
    out = cfg.get("out")
    if out:
        path = Path(out)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        path = Path("runs") / f"{stamp}-seed{cfg.get('seed', 0)}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _log_config(cfg: dict, out: Path) -> None:
    with open(out / "resolved_config.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _require(cfg: dict, *keys: str) -> None:
    for key in keys:
        if not cfg.get(key):
            raise CliError(f"{cfg['subcommand']}: --{key} is required")


def _load_split(cfg: dict) -> list[AgentDayPair]:
    corpus = load_corpus(cfg["corpus"])
    pairs = corpus.pairs if cfg["split"] == "all" else corpus.split(cfg["split"])
    if not pairs:
        raise CliError(f"corpus {cfg['corpus']}: split {cfg['split']!r} is empty")
    return pairs


def _load_model(cfg: dict) -> Model:
    ck = load_checkpoint(cfg["checkpoint"])
    return Model(ck["kind"], ck["model_cfg"], params=ck["params"])


def cmd_synth(cfg: dict, out: Path) -> None:
    gaps = NO_GAPS if cfg["no_gaps"] else None
    corpus = generate_corpus(cfg["n"], cfg["preset"], gap_model=gaps,
                             seed=cfg["seed"], workers=cfg["workers"])
    path = out / "corpus.jsonl"
    save_corpus(corpus, path)
    calib = calibration_report(corpus)
    with open(out / "calibration.json", "w") as fh:
        json.dump(calib, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not cfg["quiet"]:
        print(f"wrote {len(corpus.pairs)} pairs to {path}")


def cmd_train(cfg: dict, out: Path) -> None:
    _require(cfg, "corpus")
    corpus = load_corpus(cfg["corpus"])
    mcfg = ModelConfig(d_model=cfg["d_model"], heads=cfg["heads"],
                       encoder_layers=cfg["encoder_layers"],
                       decoder_layers=cfg["decoder_layers"],
                       dropout=cfg["dropout"], p_tf=cfg["p_tf"])
    tcfg = TrainConfig(**{k: cfg[k] for k in TRAIN_KEYS})
    mdl, report = train(corpus, cfg["model"], mcfg, tcfg,
                        checkpoint_path=out / "checkpoint.bin",
                        log_path=out / "train_log.jsonl",
                        resume_from=cfg["resume"], quiet=cfg["quiet"])
    if not cfg["quiet"]:
        print(f"best epoch {report.best_epoch} val loss {report.best_val_loss:.4f} "
              f"({report.wall_time:.1f}s); checkpoint in {out}")


def cmd_generate(cfg: dict, out: Path) -> None:
    _require(cfg, "checkpoint", "corpus")
    mdl = _load_model(cfg)
    pairs = _load_split(cfg)
    rng = np.random.default_rng(cfg["seed"])
    generated = []
    for lo in range(0, len(pairs), 64):
        chunk = pairs[lo : lo + 64]
        day2 = mdl.generate(np.stack([p.day1 for p in chunk]),
                            np.stack([p.mask1 for p in chunk]),
                            mode=cfg["mode"], temperature=cfg["temperature"], rng=rng)
        full = np.ones(N_SLOTS, dtype=np.int16)
        generated.extend(
            AgentDayPair(agent_id=p.agent_id, day1=p.day1, mask1=p.mask1,
                         day2=g, mask2=full, split=p.split)
            for p, g in zip(chunk, day2))
    path = out / "generated.jsonl"
    save_corpus(Corpus(generated), path)
    if not cfg["quiet"]:
        print(f"wrote {len(generated)} generated pairs to {path}")


def cmd_eval(cfg: dict, out: Path) -> None:
    _require(cfg, "checkpoint", "corpus")
    mdl = _load_model(cfg)
    pairs = _load_split(cfg)
    report, ref, gen = evaluate(lambda d1, m1: mdl.generate(d1, m1), pairs)
    paths = emit_report(report, ref, gen, str(out / "eval"))
    if not cfg["quiet"]:
        print(json.dumps(report.jsd, sort_keys=True))
        print(f"average JSD {report.average:.4f}; wrote {len(paths)} files to {out}")


def cmd_gradcheck(cfg: dict, out: Path) -> None:
    report = gc.full_report(seed=cfg["seed"])
    worst = max(report.values())
    with open(out / "gradcheck.json", "w") as fh:
        json.dump({"per_kernel": report, "max_relative_error": worst},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name in sorted(report):
        if not cfg["quiet"]:
            print(f"{name}: {report[name]:.3e}")
    print(f"max relative error: {worst:.3e}")
    if worst >= 1e-4:
        raise CliError(f"gradcheck failed: max relative error {worst:.3e} >= 1e-4")


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "generate": cmd_generate,
            "eval": cmd_eval, "gradcheck": cmd_gradcheck}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = resolve_config(args)
    out = _run_dir(cfg)
    _log_config(cfg, out)
    COMMANDS[cfg["subcommand"]](cfg, out)
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
