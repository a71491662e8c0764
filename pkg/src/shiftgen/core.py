"""Domain types for activity chains on the 96-slot day grid, plus corpus I/O.

A day is 96 fifteen-minute slots indexed 0..95 (slot t covers the interval
[15*t, 15*(t+1)) minutes after midnight; note some sources count slots 1..96,
we are 0-based everywhere, including on disk). Slots hold integer activity
codes 1..15; code 0 (UNOBSERVED) marks slots without observation evidence and
always coincides with a 0 bit in the companion mask.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import kernels

N_SLOTS = 96
N_ACTIVITY_TYPES = 15

# Sentinel codes. UNOBSERVED fills masked slots on model input; BOS starts the
# decoder. Neither ever appears in a serialized corpus or a generated day.
UNOBSERVED = 0
BOS = 16

ACTIVITY_NAMES = {
    1: "Home",
    2: "Work",
    3: "School",
    4: "Caregiving",
    5: "Shop goods",
    6: "Shop services",
    7: "Meals out",
    8: "Errands",
    9: "Leisure",
    10: "Exercise",
    11: "Social",
    12: "Healthcare",
    13: "Worship",
    14: "Other",
    15: "Pickup/Drop",
}

HOME = 1
WORK = 2


class ValidationError(ValueError):
    pass


class Activity(NamedTuple):
    """One activity: inclusive start slot, exclusive end slot."""

    kind: int
    start: int
    end: int

    @property
    def duration(self) -> int:
        return self.end - self.start


def _as_grid(values, name: str, length: int = N_SLOTS) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int16)
    if arr.shape != (length,):
        raise ValidationError(f"{name}: expected length {length}, got shape {arr.shape}")
    if arr.min(initial=0) < 0 or arr.max(initial=0) > N_ACTIVITY_TYPES:
        bad = arr[(arr < 0) | (arr > N_ACTIVITY_TYPES)][0]
        raise ValidationError(f"{name}: activity code {int(bad)} outside 0..{N_ACTIVITY_TYPES}")
    return arr


def _as_mask(values, name: str, length: int = N_SLOTS) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int16)
    if arr.shape != (length,):
        raise ValidationError(f"{name}: expected length {length}, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValidationError(f"{name}: mask bits must be 0 or 1")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AgentDayPair:
    """Two consecutive days of one agent, with per-slot observation masks."""

    agent_id: str
    day1: np.ndarray
    day2: np.ndarray
    mask1: np.ndarray
    mask2: np.ndarray
    shift_label: bool | None = None
    split: str | None = None

    def __post_init__(self):
        for day_name, mask_name in (("day1", "mask1"), ("day2", "mask2")):
            grid = _freeze(_as_grid(getattr(self, day_name), day_name))
            mask = _freeze(_as_mask(getattr(self, mask_name), mask_name))
            if ((grid == UNOBSERVED) != (mask == 0)).any():
                t = int(np.flatnonzero((grid == UNOBSERVED) != (mask == 0))[0])
                raise ValidationError(
                    f"{day_name}/{mask_name}: slot {t} violates grid==UNOBSERVED <=> mask==0"
                )
            object.__setattr__(self, day_name, grid)
            object.__setattr__(self, mask_name, mask)
        if self.split not in (None, "train", "val", "test"):
            raise ValidationError(f"unknown split tag {self.split!r}")


@dataclass
class Corpus:
    pairs: list[AgentDayPair] = field(default_factory=list)

    def split(self, tag: str) -> list[AgentDayPair]:
        return [p for p in self.pairs if p.split == tag]

    def __len__(self) -> int:
        return len(self.pairs)


def chain_to_grid(chain: Sequence[Activity]) -> tuple[np.ndarray, np.ndarray]:
    """Write activities onto a 96-slot grid; uncovered slots become UNOBSERVED.

    Returns (grid, mask). Activities must be non-overlapping; gaps are allowed.
    """
    grid = np.full(N_SLOTS, UNOBSERVED, dtype=np.int16)
    mask = np.zeros(N_SLOTS, dtype=np.int16)
    ordered = sorted(chain, key=lambda a: a.start)
    for a in ordered:
        if not (0 <= a.start < a.end <= N_SLOTS):
            raise ValidationError(f"activity {a}: need 0 <= start < end <= {N_SLOTS}")
        if not (1 <= a.kind <= N_ACTIVITY_TYPES):
            raise ValidationError(f"activity {a}: code {a.kind} outside 1..{N_ACTIVITY_TYPES}")
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            raise ValidationError(f"overlapping activities {prev} and {cur}")
    for a in ordered:
        grid[a.start : a.end] = a.kind
        mask[a.start : a.end] = 1
    return grid, mask


def grid_to_chain(grid: np.ndarray, mask: np.ndarray | None = None) -> list[Activity]:
    """Inverse of chain_to_grid: maximal runs of identical observed codes.

    Unobserved (mask-0) slots terminate runs, so a gap inside an activity
    splits it in two.
    """
    grid = np.asarray(grid, dtype=np.int16)
    if mask is None:
        mask = (grid != UNOBSERVED).astype(np.int16)
    mask = np.asarray(mask, dtype=np.int16)
    runs = kernels.find_runs(grid, mask)
    return [Activity(int(c), int(s), int(e)) for s, e, c in runs]


def concat_days(pair: AgentDayPair) -> tuple[np.ndarray, np.ndarray]:
    """day1 then day2 as one 192-slot grid + mask, so midnight-crossing runs merge."""
    return (
        np.concatenate([pair.day1, pair.day2]),
        np.concatenate([pair.mask1, pair.mask2]),
    )


def assign_splits(pairs: list[AgentDayPair], seed: int,
                  fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)) -> list[AgentDayPair]:
    """Tag pairs train/val/test by agent, disjointly, with the given fractions."""
    agents = sorted({p.agent_id for p in pairs})
    rng = np.random.default_rng(seed)
    rng.shuffle(agents)
    n = len(agents)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    tag_of = {}
    for i, a in enumerate(agents):
        tag_of[a] = "train" if i < n_train else ("val" if i < n_train + n_val else "test")
    return [replace(p, split=tag_of[p.agent_id]) for p in pairs]


def _pair_to_record(pair: AgentDayPair) -> dict:
    rec = {
        "agent_id": pair.agent_id,
        "day1": pair.day1.tolist(),
        "day2": pair.day2.tolist(),
        "mask1": pair.mask1.tolist(),
        "mask2": pair.mask2.tolist(),
    }
    if pair.shift_label is not None:
        rec["shift_label"] = pair.shift_label
    if pair.split is not None:
        rec["split"] = pair.split
    return rec


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w") as fh:
        for pair in corpus.pairs:
            fh.write(json.dumps(_pair_to_record(pair), sort_keys=True))
            fh.write("\n")


def load_corpus(path) -> Corpus:
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                pair = AgentDayPair(
                    agent_id=str(rec["agent_id"]),
                    day1=rec["day1"],
                    day2=rec["day2"],
                    mask1=rec["mask1"],
                    mask2=rec["mask2"],
                    shift_label=rec.get("shift_label"),
                    split=rec.get("split"),
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
            pairs.append(pair)
    return Corpus(pairs)
