"""Distribution-based evaluation: run histograms, base-2 JSD, shift-worker
classification, and report emission."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import WORK, N_SLOTS, AgentDayPair, concat_days

JSD_EPS = 1e-10

EVENING_BAND = (72, 88)  # 18:00-22:00
SUSTAINED_MIN_SLOTS = 8  # 2 hours within 22:00-06:00


@dataclass
class DistributionProfile:
    """Run-level histograms over a corpus (or generated day grids).

    Start/end/duration/type plus work-only start and end histograms. Starts
    are only counted when the true onset is visible (day start or preceding
    slot observed); ends symmetrically; durations need both. Durations come
    from the two-day concatenation, so midnight-crossing runs count once,
    clipped at 96 slots.
    """

    start: np.ndarray = field(default_factory=lambda: np.zeros(N_SLOTS, dtype=np.int64))
    end: np.ndarray = field(default_factory=lambda: np.zeros(N_SLOTS, dtype=np.int64))
    duration: np.ndarray = field(default_factory=lambda: np.zeros(N_SLOTS, dtype=np.int64))
    type: np.ndarray = field(default_factory=lambda: np.zeros(15, dtype=np.int64))
    work_start: np.ndarray = field(default_factory=lambda: np.zeros(N_SLOTS, dtype=np.int64))
    work_end: np.ndarray = field(default_factory=lambda: np.zeros(N_SLOTS, dtype=np.int64))
    n_runs: int = 0

    METRICS = ("start", "end", "duration", "type", "work_start", "work_end")

    @property
    def empty(self) -> bool:
        return self.n_runs == 0

    def normalized(self, metric: str) -> np.ndarray:
        counts = getattr(self, metric).astype(np.float64)
        total = counts.sum()
        return counts / total if total > 0 else counts


def _add_sequence(prof: DistributionProfile, grid: np.ndarray, mask: np.ndarray) -> None:
    n = len(grid)
    for s, e, c in kernels.find_runs(grid, mask):
        prof.n_runs += 1
        prof.type[c - 1] += 1
        start_ok = s == 0 or mask[s - 1] > 0
        end_ok = e == n or mask[e] > 0
        if start_ok:
            prof.start[s % N_SLOTS] += 1
            if c == WORK:
                prof.work_start[s % N_SLOTS] += 1
        if end_ok:
            prof.end[e % N_SLOTS] += 1
            if c == WORK:
                prof.work_end[e % N_SLOTS] += 1
        if start_ok and end_ok:
            prof.duration[min(e - s, N_SLOTS) - 1] += 1


def profile(items) -> DistributionProfile:
    """Build a DistributionProfile from AgentDayPairs or bare day grids."""
    prof = DistributionProfile()
    for item in items:
        if isinstance(item, AgentDayPair):
            grid, mask = concat_days(item)
        else:
            grid = np.asarray(item)
            mask = np.ones(len(grid), dtype=np.int16)
        _add_sequence(prof, grid, mask)
    return prof


def jsd(p, q) -> float:
    """Base-2 Jensen-Shannon divergence of two histograms, in [0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"histogram bin counts differ: {p.shape} vs {q.shape}")
    p = (p + JSD_EPS) / (p + JSD_EPS).sum()
    q = (q + JSD_EPS) / (q + JSD_EPS).sum()
    m = 0.5 * (p + q)
    kl_p = float((p * np.log2(p / m)).sum())
    kl_q = float((q * np.log2(q / m)).sum())
    return 0.5 * kl_p + 0.5 * kl_q


AVERAGED_METRICS = ("start", "end", "duration", "type")


@dataclass
class EvalReport:
    jsd: dict[str, float]
    average: float  # over start, end, duration, type
    n_pairs: int
    n_reference_runs: int
    n_generated_runs: int

    def to_dict(self) -> dict:
        return {"jsd": dict(sorted(self.jsd.items())), "average_jsd": self.average,
                "n_pairs": self.n_pairs,
                "n_reference_runs": self.n_reference_runs,
                "n_generated_runs": self.n_generated_runs}


def evaluate(generate_fn, pairs: list[AgentDayPair],
             batch_size: int = 64) -> tuple[EvalReport, DistributionProfile, DistributionProfile]:
    """Generate day 2 for every pair (greedy, from observed day 1) and compare
    run histograms against the observed reference day 2.

    `generate_fn(day1_batch, mask1_batch) -> (B, 96) grids of codes 1..15`.
    """
    if not pairs:
        raise ValueError("evaluate: empty pair list")
    generated_pairs = []
    for lo in range(0, len(pairs), batch_size):
        chunk = pairs[lo : lo + batch_size]
        day1 = np.stack([p.day1 for p in chunk])
        mask1 = np.stack([p.mask1 for p in chunk])
        gen = generate_fn(day1, mask1)
        for p, g in zip(chunk, gen):
            generated_pairs.append(AgentDayPair(
                agent_id=p.agent_id, day1=p.day1, mask1=p.mask1,
                day2=g, mask2=np.ones(N_SLOTS, dtype=np.int16)))
    ref = profile(pairs)
    gen_prof = profile(generated_pairs)
    values = {m: jsd(ref.normalized(m), gen_prof.normalized(m))
              for m in DistributionProfile.METRICS}
    avg = float(np.mean([values[m] for m in AVERAGED_METRICS]))
    report = EvalReport(jsd=values, average=avg, n_pairs=len(pairs),
                        n_reference_runs=ref.n_runs, n_generated_runs=gen_prof.n_runs)
    return report, ref, gen_prof


def is_shift_worker(pair: AgentDayPair) -> tuple[bool, dict[str, bool]]:
    """Shift-worker classification on observed slots.

    Criteria (any suffices): work in the 18:00-22:00 band; a work run crossing
    midnight between the two days; a sustained (>= 2h) work run intersecting
    22:00-06:00.
    """
    grid, mask = concat_days(pair)
    slots = np.arange(2 * N_SLOTS) % N_SLOTS
    work_obs = (grid == WORK) & (mask > 0)
    evening = bool(work_obs[(slots >= EVENING_BAND[0]) & (slots < EVENING_BAND[1])].any())
    overnight_band = (slots >= 88) | (slots < 24)
    crossing = False
    sustained = False
    for s, e, c in kernels.find_runs(grid, mask):
        if c != WORK:
            continue
        if s < N_SLOTS < e:
            crossing = True
        if e - s >= SUSTAINED_MIN_SLOTS and overnight_band[s:e].any():
            sustained = True
    breakdown = {"evening_work": evening, "midnight_crossing": crossing,
                 "sustained_overnight": sustained}
    return evening or crossing or sustained, breakdown


def emit_report(report: EvalReport, ref: DistributionProfile,
                gen: DistributionProfile, path_prefix: str) -> list[str]:
    """Write the JSD report (JSON) plus one CSV per histogram; returns paths."""
    paths = []
    report_path = f"{path_prefix}_report.json"
    with open(report_path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(report_path)
    for metric in DistributionProfile.METRICS:
        path = f"{path_prefix}_{metric}.csv"
        r = ref.normalized(metric)
        g = gen.normalized(metric)
        with open(path, "w") as fh:
            fh.write("bin,reference,generated\n")
            for i in range(len(r)):
                fh.write(f"{i},{float(r[i])!r},{float(g[i])!r}\n")
        paths.append(path)
    return paths
