import json

import numpy as np
import pytest

from shiftgen.core import N_SLOTS
from shiftgen.model import ModelConfig, PERIOD_OVERNIGHT, period_of
from shiftgen.synthgen import generate_corpus
from shiftgen.train import (
    Model,
    TrainConfig,
    apply_artificial_mask,
    load_checkpoint,
    masking_schedule,
    save_checkpoint,
    train,
)

TINY = ModelConfig(d_model=32, heads=2, encoder_layers=1, decoder_layers=1)


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(80, "shift_only", seed=21)


def _cfg(**kw):
    base = dict(epochs=2, batch_size=16, seed=0, val_jsd_pairs=4)
    base.update(kw)
    return TrainConfig(**base)


def test_schedule_endpoints():
    assert masking_schedule(1, 10, 0.1, 0.4) == pytest.approx(0.1)
    assert masking_schedule(10, 10, 0.1, 0.4) == pytest.approx(0.4)
    assert masking_schedule(3, 5, 0.1, 0.4) == pytest.approx(0.25)
    assert masking_schedule(1, 1, 0.1, 0.4) == pytest.approx(0.1)


def test_config_validates_schedule():
    with pytest.raises(ValueError):
        TrainConfig(r_min=0.5, r_max=0.4)


def test_artificial_mask_zero_ratio_noop():
    rng = np.random.default_rng(0)
    mask = (rng.random(N_SLOTS) > 0.2).astype(np.int16)
    out = apply_artificial_mask(mask, 0.0, 2.0, rng)
    assert np.array_equal(out, mask)


def test_artificial_mask_count():
    rng = np.random.default_rng(1)
    mask = np.ones(N_SLOTS, dtype=np.int16)
    out = apply_artificial_mask(mask, 0.25, 2.0, rng)
    assert (mask - out).sum() == 24


def test_artificial_mask_subset_property():
    rng = np.random.default_rng(2)
    for _ in range(50):
        mask = (rng.random(N_SLOTS) > rng.random() * 0.5).astype(np.int16)
        out = apply_artificial_mask(mask, rng.random() * 0.5, 2.0, rng)
        assert (out <= mask).all()


def test_artificial_mask_overnight_bias():
    rng = np.random.default_rng(3)
    overnight = period_of(np.arange(N_SLOTS)) == PERIOD_OVERNIGHT
    hit = np.zeros(N_SLOTS)
    for _ in range(1000):
        out = apply_artificial_mask(np.ones(N_SLOTS, np.int16), 0.25, 2.0, rng)
        hit += out == 0
    # overnight slots are twice as likely to be flipped
    assert hit[overnight].mean() > 1.5 * hit[~overnight].mean()


def test_training_reduces_loss(corpus):
    tcfg = _cfg(epochs=5, lr=3e-4)
    _, report = train(corpus, "transformer", TINY, tcfg)
    first = report.epochs[0]["train_total"]
    last = report.epochs[-1]["train_total"]
    assert last < 0.7 * first  # >= 30% drop over 5 epochs


def test_training_deterministic(corpus, tmp_path):
    logs = []
    for name in ("a", "b"):
        path = tmp_path / f"{name}.jsonl"
        train(corpus, "transformer", TINY, _cfg(), log_path=path)
        logs.append(path.read_bytes())
    assert logs[0] == logs[1]


def test_checkpoint_round_trip(corpus, tmp_path):
    path = tmp_path / "ck.bin"
    mdl, report = train(corpus, "transformer", TINY, _cfg(), checkpoint_path=path)
    ck = load_checkpoint(path)
    assert ck["kind"] == "transformer"
    assert ck["epoch"] == report.best_epoch
    for name, t in mdl.params.items():
        assert np.allclose(ck["params"][name].data, t.data, atol=1e-7)


def test_checkpoint_reload_reproduces_val_loss(corpus, tmp_path):
    from shiftgen.losses import LossWeights, combined_loss
    path = tmp_path / "ck.bin"
    tcfg = _cfg()
    mdl, report = train(corpus, "transformer", TINY, tcfg, checkpoint_path=path)
    ck = load_checkpoint(path)
    re = Model(ck["kind"], ck["model_cfg"], params=ck["params"])
    val = corpus.split("val")
    day1 = np.stack([p.day1 for p in val]); mask1 = np.stack([p.mask1 for p in val])
    day2 = np.stack([p.day2 for p in val]); mask2 = np.stack([p.mask2 for p in val])

    def val_loss(m):
        logits = m.forward(day1, mask1, day2, mask2, p_tf=1.0, rng=None, train=False)
        return combined_loss(logits, day2, mask2, tcfg.weights())[0].item()

    assert val_loss(re) == pytest.approx(val_loss(mdl), abs=1e-6)
    assert val_loss(re) == pytest.approx(report.best_val_loss, abs=1e-5)


def test_checkpoint_shape_mismatch_named(corpus, tmp_path):
    path = tmp_path / "ck.bin"
    train(corpus, "transformer", TINY, _cfg(epochs=1), checkpoint_path=path)
    other = ModelConfig(d_model=64, heads=2, encoder_layers=1, decoder_layers=1)
    with pytest.raises(ValueError, match="e_act"):
        load_checkpoint(path, expect_model_cfg=other)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)


def test_resume_continues_epochs(corpus, tmp_path):
    path = tmp_path / "ck.bin"
    train(corpus, "transformer", TINY, _cfg(epochs=2), checkpoint_path=path)
    resumed_log = tmp_path / "resume.jsonl"
    train(corpus, "transformer", TINY, _cfg(epochs=4), resume_from=path,
          log_path=resumed_log)
    records = [json.loads(l) for l in resumed_log.read_text().splitlines()]
    assert [r["epoch"] for r in records] == [3, 4]


def test_nan_divergence_aborts(corpus):
    # an absurd learning rate forces a non-finite forward or gradient quickly
    from shiftgen.autodiff import NumericError
    with pytest.raises((NumericError, FloatingPointError)):
        with np.errstate(over="raise", invalid="raise"):
            train(corpus, "transformer", TINY, _cfg(lr=1e6, epochs=3))


def test_lstm_path_runs(corpus):
    _, report = train(corpus, "lstm", TINY, _cfg(epochs=1))
    assert len(report.epochs) == 1
    assert np.isfinite(report.epochs[0]["val_loss"])


def test_log_has_expected_fields(corpus, tmp_path):
    path = tmp_path / "log.jsonl"
    train(corpus, "transformer", TINY, _cfg(epochs=1), log_path=path)
    rec = json.loads(path.read_text().splitlines()[0])
    for key in ("epoch", "mask_ratio", "train_ce", "train_total", "val_loss",
                "val_hard_f1", "val_jsd_average"):
        assert key in rec
