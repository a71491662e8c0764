import numpy as np
import pytest

from shiftgen import baseline
from shiftgen import model as tfm
from shiftgen.core import BOS, N_SLOTS, UNOBSERVED
from shiftgen.model import (
    IncrementalDecoder,
    ModelConfig,
    PERIOD_EVENING_START,
    PERIOD_MORNING,
    PERIOD_OTHER,
    PERIOD_OVERNIGHT,
    paper_config,
    period_of,
    sinusoid_table,
)

SMALL = ModelConfig(d_model=32, heads=2, encoder_layers=1, decoder_layers=1, dropout=0.0)


@pytest.fixture(scope="module")
def params():
    return tfm.init_params(SMALL, np.random.default_rng(0))


def _inputs(rng, b=2):
    day = rng.integers(1, 16, (b, N_SLOTS))
    mask = (rng.random((b, N_SLOTS)) > 0.15).astype(np.int16)
    day = np.where(mask > 0, day, 0)
    return day, mask


# --- period function -----------------------------------------------------------

def test_period_examples():
    assert period_of(80) == PERIOD_EVENING_START
    assert period_of(0) == PERIOD_OVERNIGHT
    assert period_of(24) == PERIOD_MORNING
    assert period_of(40) == PERIOD_OTHER


def test_period_preimage_sizes():
    p = period_of(np.arange(N_SLOTS))
    sizes = np.bincount(p, minlength=4)
    assert sizes[PERIOD_EVENING_START] == 16
    assert sizes[PERIOD_OVERNIGHT] == 32
    assert sizes[PERIOD_MORNING] == 16
    assert sizes[PERIOD_OTHER] == 32


def test_period_total_function():
    with pytest.raises(ValueError):
        period_of(96)
    with pytest.raises(ValueError):
        period_of(-1)


# --- embeddings -----------------------------------------------------------------

def test_sinusoids_slot_zero():
    table = sinusoid_table(N_SLOTS, 32, "float64")
    assert np.allclose(table[0, 0::2], 0.0)
    assert np.allclose(table[0, 1::2], 1.0)


def test_sinusoids_daily_period():
    table = sinusoid_table(192, 32, "float64")
    assert np.allclose(table[:96], table[96:], atol=1e-9)


def test_embedding_same_period_differs_only_via_pos_and_sin(params):
    # slots 0 and 1 share the overnight period: difference must not involve e_period
    emb = tfm.time_embedding(params, SMALL, 2).data
    table = sinusoid_table(SMALL.seq_len, SMALL.d_model, SMALL.dtype)
    manual = (params["e_pos"].data[1] - params["e_pos"].data[0]) + (table[1] - table[0])
    assert np.allclose(emb[1] - emb[0], manual, atol=1e-6)


def test_masked_slot_uses_sentinel_embedding(params):
    day = np.full((1, N_SLOTS), 3)
    mask = np.ones((1, N_SLOTS), dtype=np.int16)
    mask[0, 40] = 0
    tokens = tfm.masked_codes(day, mask)
    assert tokens[0, 40] == UNOBSERVED
    a = tfm.embed_sequence(params, SMALL, tokens).data
    day2 = day.copy()
    day2[0, 40] = 9  # true code at an unobserved slot must not matter
    b = tfm.embed_sequence(params, SMALL, tfm.masked_codes(day2, mask)).data
    assert np.array_equal(a, b)


# --- encoder --------------------------------------------------------------------

def test_encode_shape_and_determinism(params):
    rng = np.random.default_rng(1)
    day, mask = _inputs(rng)
    m1 = tfm.encode(params, SMALL, day, mask).data
    m2 = tfm.encode(params, SMALL, day, mask).data
    assert m1.shape == (2, N_SLOTS, SMALL.d_model)
    assert np.array_equal(m1, m2)


def test_encode_uses_period_embedding(params):
    rng = np.random.default_rng(2)
    day, mask = _inputs(rng)
    base = tfm.encode(params, SMALL, day, mask).data
    shuffled = {k: v for k, v in params.items()}
    from shiftgen.autodiff import Tensor
    perm = params["e_period"].data[[2, 3, 0, 1]]
    shuffled["e_period"] = Tensor(perm, name="e_period")
    other = tfm.encode(shuffled, SMALL, day, mask).data
    assert not np.allclose(base, other)


# --- decoder --------------------------------------------------------------------

def test_teacher_inputs_at_ptf_one(params):
    rng = np.random.default_rng(3)
    day, mask = _inputs(rng)
    day2, mask2 = _inputs(rng)
    mem = tfm.encode(params, SMALL, day, mask)
    logits, inputs = tfm.decode_teacher_forced(params, SMALL, mem, day2, mask2, 1.0)
    assert logits.data.shape == (2, N_SLOTS, 15)
    assert (inputs[:, 0] == BOS).all()
    expected = tfm.masked_codes(day2, mask2)[:, :-1]
    assert np.array_equal(inputs[:, 1:], expected)


def test_causal_property(params):
    rng = np.random.default_rng(4)
    day, mask = _inputs(rng, b=1)
    day2 = rng.integers(1, 16, (1, N_SLOTS))
    mask2 = np.ones((1, N_SLOTS), dtype=np.int16)
    mem = tfm.encode(params, SMALL, day, mask)
    logits, _ = tfm.decode_teacher_forced(params, SMALL, mem, day2, mask2, 1.0)
    t = 50
    day2_alt = day2.copy()
    day2_alt[0, t:] = (day2[0, t:] % 15) + 1
    logits_alt, _ = tfm.decode_teacher_forced(params, SMALL, mem, day2_alt, mask2, 1.0)
    assert np.allclose(logits.data[0, : t + 1], logits_alt.data[0, : t + 1], atol=1e-5)
    assert not np.allclose(logits.data[0, t + 1 :], logits_alt.data[0, t + 1 :])


def test_free_running_ignores_targets(params):
    rng = np.random.default_rng(5)
    day, mask = _inputs(rng, b=1)
    mem = tfm.encode(params, SMALL, day, mask)
    day2a = rng.integers(1, 16, (1, N_SLOTS))
    day2b = rng.integers(1, 16, (1, N_SLOTS))
    mask2 = np.ones((1, N_SLOTS), dtype=np.int16)
    la, ia = tfm.decode_teacher_forced(params, SMALL, mem, day2a, mask2, 0.0,
                                       rng=np.random.default_rng(0))
    lb, ib = tfm.decode_teacher_forced(params, SMALL, mem, day2b, mask2, 0.0,
                                       rng=np.random.default_rng(0))
    assert np.array_equal(ia, ib)
    assert np.allclose(la.data, lb.data, atol=1e-6)


def test_incremental_matches_parallel(params):
    rng = np.random.default_rng(6)
    day, mask = _inputs(rng)
    day2 = rng.integers(1, 16, (2, N_SLOTS))
    mask2 = np.ones((2, N_SLOTS), dtype=np.int16)
    mem = tfm.encode(params, SMALL, day, mask)
    logits, inputs = tfm.decode_teacher_forced(params, SMALL, mem, day2, mask2, 1.0)
    dec = IncrementalDecoder(params, SMALL, mem.data)
    step_logits = np.stack([dec.step(inputs[:, t], t) for t in range(N_SLOTS)], axis=1)
    assert np.allclose(step_logits, logits.data, atol=1e-4)


# --- generation -------------------------------------------------------------------

def test_generate_contract(params):
    rng = np.random.default_rng(7)
    day, mask = _inputs(rng, b=3)
    out = tfm.generate(params, SMALL, day, mask)
    assert out.shape == (3, N_SLOTS)
    assert out.min() >= 1 and out.max() <= 15


def test_generate_greedy_deterministic(params):
    rng = np.random.default_rng(8)
    day, mask = _inputs(rng)
    a = tfm.generate(params, SMALL, day, mask)
    b = tfm.generate(params, SMALL, day, mask)
    assert np.array_equal(a, b)


def test_generate_temperature_mode(params):
    rng = np.random.default_rng(9)
    day, mask = _inputs(rng)
    out = tfm.generate(params, SMALL, day, mask, mode="temperature", temperature=2.0,
                       rng=np.random.default_rng(1))
    assert out.min() >= 1 and out.max() <= 15


# --- attention internals -----------------------------------------------------------

def test_attention_rows_sum_to_one():
    from shiftgen import autodiff as ad
    from shiftgen.autodiff import Tensor
    rng = np.random.default_rng(10)
    scores = Tensor(rng.standard_normal((2, 2, 8, 8)))
    probs = ad.softmax(scores).data
    assert np.allclose(probs.sum(-1), 1.0, atol=1e-6)


def test_paper_config_values():
    cfg = paper_config()
    assert (cfg.d_model, cfg.heads) == (128, 8)
    assert (cfg.encoder_layers, cfg.decoder_layers) == (4, 4)


# --- LSTM baseline -----------------------------------------------------------------

@pytest.fixture(scope="module")
def lstm_params():
    return baseline.init_params(SMALL, np.random.default_rng(0))


def test_lstm_logits_shape(lstm_params):
    rng = np.random.default_rng(11)
    day, mask = _inputs(rng)
    day2 = rng.integers(1, 16, (2, N_SLOTS))
    mask2 = np.ones((2, N_SLOTS), dtype=np.int16)
    mem = baseline.encode(lstm_params, SMALL, day, mask)
    logits, _ = baseline.decode_teacher_forced(lstm_params, SMALL, mem, day2, mask2, 1.0)
    assert logits.data.shape == (2, N_SLOTS, 15)


def test_lstm_generate_contract(lstm_params):
    rng = np.random.default_rng(12)
    day, mask = _inputs(rng, b=3)
    out = baseline.generate(lstm_params, SMALL, day, mask)
    assert out.shape == (3, N_SLOTS)
    assert out.min() >= 1 and out.max() <= 15
    assert np.array_equal(out, baseline.generate(lstm_params, SMALL, day, mask))
