import json

import numpy as np
import pytest

from shiftgen.core import HOME, N_SLOTS, WORK
from shiftgen.evaluate import (
    AVERAGED_METRICS,
    DistributionProfile,
    emit_report,
    evaluate,
    is_shift_worker,
    jsd,
    profile,
)

from conftest import make_pair


def test_all_home_pair_profile():
    pair = make_pair(np.full(N_SLOTS, HOME), np.full(N_SLOTS, HOME))
    prof = profile([pair])
    assert prof.start[0] == 1 and prof.start.sum() == 1
    # 192-slot run is clipped to duration 96 -> last duration bin
    assert prof.duration[95] == 1 and prof.duration.sum() == 1
    assert prof.type[HOME - 1] == 1


def test_midnight_work_merge_profile():
    day1 = np.concatenate([[HOME] * 88, [WORK] * 8])
    day2 = np.concatenate([[WORK] * 24, [HOME] * 72])
    prof = profile([make_pair(day1, day2)])
    assert prof.work_start[88] == 1
    assert prof.work_end[24] == 1
    assert prof.duration[31] == 1  # 32 slots -> bin index 31


def test_censored_runs_excluded():
    # gap right before a work run: its start must not be counted
    day1 = np.concatenate([[HOME] * 30, [WORK] * 40, [HOME] * 26])
    mask1 = np.ones(N_SLOTS, np.int16)
    mask1[29] = 0
    pair = make_pair(day1, np.full(N_SLOTS, HOME), mask1=mask1)
    prof = profile([pair])
    assert prof.work_start.sum() == 0
    assert prof.work_end[70] == 1  # end is still visible


def test_empty_profile_flag():
    assert profile([]).empty


def test_jsd_axioms():
    rng = np.random.default_rng(0)
    p = rng.random(96)
    q = rng.random(96)
    assert jsd(p, p) == pytest.approx(0.0, abs=1e-9)
    assert jsd(p, q) == pytest.approx(jsd(q, p), abs=1e-12)
    a, b = np.zeros(4), np.zeros(4)
    a[0], b[3] = 1.0, 1.0
    assert jsd(a, b) == pytest.approx(1.0, abs=1e-6)


def test_jsd_bin_mismatch():
    with pytest.raises(ValueError, match="bin"):
        jsd(np.ones(4), np.ones(5))


def test_jsd_bounded_random():
    rng = np.random.default_rng(1)
    for _ in range(20):
        v = jsd(rng.random(16), rng.random(16))
        assert 0.0 <= v <= 1.0


def test_evaluate_self_reference():
    from shiftgen.synthgen import NO_GAPS, generate_corpus
    pairs = generate_corpus(60, "shift_only", gap_model=NO_GAPS, seed=9).pairs
    cursor = iter(pairs)  # evaluate() walks pairs in order

    def echo(day1, mask1):
        out = [next(cursor).day2 for _ in day1]
        return np.stack(out)

    report, ref, gen = evaluate(echo, pairs)
    assert all(v < 0.01 for v in report.jsd.values())
    assert set(report.jsd) == set(DistributionProfile.METRICS)


def test_average_is_over_four_metrics(small_corpus):
    pairs = small_corpus.split("val")
    rng = np.random.default_rng(2)

    def rand_gen(day1, mask1):
        return rng.integers(1, 16, (len(day1), N_SLOTS))

    report, _, _ = evaluate(rand_gen, pairs)
    expected = np.mean([report.jsd[m] for m in AVERAGED_METRICS])
    assert report.average == pytest.approx(expected)
    assert AVERAGED_METRICS == ("start", "end", "duration", "type")


def test_is_shift_worker_criteria():
    # work exactly 72..88 -> evening criterion only
    day1 = np.concatenate([[HOME] * 72, [WORK] * 16, [HOME] * 8])
    verdict, why = is_shift_worker(make_pair(day1, np.full(N_SLOTS, HOME)))
    assert verdict and why["evening_work"]
    assert not why["midnight_crossing"]

    # 9-to-5: work 36..68 -> no criterion
    day_mid = np.concatenate([[HOME] * 36, [WORK] * 32, [HOME] * 28])
    verdict, why = is_shift_worker(make_pair(day_mid, np.full(N_SLOTS, HOME)))
    assert not verdict and not any(why.values())

    # work 90..96 + 0..10 next day -> crossing and sustained
    d1 = np.concatenate([[HOME] * 90, [WORK] * 6])
    d2 = np.concatenate([[WORK] * 10, [HOME] * 86])
    verdict, why = is_shift_worker(make_pair(d1, d2))
    assert verdict and why["midnight_crossing"] and why["sustained_overnight"]


def test_is_shift_worker_ignores_non_work():
    d1 = np.concatenate([[HOME] * 90, [WORK] * 6])
    d2 = np.concatenate([[WORK] * 10, [HOME] * 86])
    base = is_shift_worker(make_pair(d1, d2))
    d2_alt = d2.copy()
    d2_alt[40:50] = 9  # leisure instead of home
    assert is_shift_worker(make_pair(d1, d2_alt)) == base


def test_emit_report(tmp_path, small_corpus):
    pairs = small_corpus.split("test")
    rng = np.random.default_rng(3)
    report, ref, gen = evaluate(
        lambda d1, m1: rng.integers(1, 16, (len(d1), N_SLOTS)), pairs)
    prefix = str(tmp_path / "eval")
    paths = emit_report(report, ref, gen, prefix)
    assert len(paths) == 7
    blob = json.loads((tmp_path / "eval_report.json").read_text())
    assert set(blob["jsd"]) == set(DistributionProfile.METRICS)
    for metric in DistributionProfile.METRICS:
        rows = (tmp_path / f"eval_{metric}.csv").read_text().strip().splitlines()
        assert rows[0] == "bin,reference,generated"
        cols = np.array([[float(x) for x in r.split(",")[1:]] for r in rows[1:]])
        assert np.allclose(cols.sum(axis=0), 1.0, atol=1e-6)
    # byte-stable re-emission
    first = (tmp_path / "eval_start.csv").read_bytes()
    emit_report(report, ref, gen, prefix)
    assert (tmp_path / "eval_start.csv").read_bytes() == first
