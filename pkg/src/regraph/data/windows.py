"""Sliding windows over feature frames, week-based splits, and scaling."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigError, DataError
from .frames import FEATURE_COLUMNS, OCCUPANCY_COL, SCALED_COLUMNS, FeatureFrame

__all__ = [
    "WindowSample",
    "apply_scaling",
    "compute_scaling",
    "make_windows",
    "split_by_weeks",
]


@dataclass(frozen=True)
class WindowSample:
    """K input frames and the occupancy targets at each requested horizon.

    ``weeks`` holds the ISO (year, week) labels of every frame the sample
    touches, inputs and targets alike, so split logic can keep whole
    windows on one side of a boundary.
    """

    inputs: np.ndarray = field(repr=False)   # K x n x 8
    targets: np.ndarray = field(repr=False)  # n x T
    anchor_time: datetime
    target_times: tuple[datetime, ...]
    horizons: tuple[int, ...]
    weeks: frozenset = field(repr=False)

    def __post_init__(self):
        self.inputs.flags.writeable = False
        self.targets.flags.writeable = False


def _iso_week(t: datetime) -> tuple[int, int]:
    iso = t.isocalendar()
    return (iso[0], iso[1])


def make_windows(frames: Sequence[FeatureFrame], k: int, horizons: Sequence[int],
                 grid_step_min: int = 10) -> list[WindowSample]:
    """Stride-1 windows over maximal runs of contiguous valid frames.

    A run of F frames yields F - k - max(horizons) + 1 samples; no window
    spans an invalid frame or a hole in the grid.
    """
    if k < 1:
        raise ConfigError(f"window length k must be >= 1, got {k}")
    horizons = tuple(sorted(set(int(h) for h in horizons)))
    if not horizons or horizons[0] < 1:
        raise ConfigError(f"horizons must be positive steps, got {horizons}")
    max_h = horizons[-1]
    step = timedelta(minutes=grid_step_min)

    ordered = sorted(frames, key=lambda f: f.time)
    runs: list[list[FeatureFrame]] = []
    current: list[FeatureFrame] = []
    for f in ordered:
        if not f.valid:
            if current:
                runs.append(current)
                current = []
            continue
        if current and f.time - current[-1].time != step:
            runs.append(current)
            current = []
        current.append(f)
    if current:
        runs.append(current)

    samples: list[WindowSample] = []
    for run in runs:
        count = len(run) - k - max_h + 1
        for s in range(max(0, count)):
            window = run[s:s + k]
            inputs = np.stack([f.X for f in window])
            anchor = window[-1]
            target_frames = [run[s + k - 1 + h] for h in horizons]
            targets = np.column_stack([tf.X[:, OCCUPANCY_COL] for tf in target_frames])
            weeks = frozenset(_iso_week(f.time) for f in window) | \
                frozenset(_iso_week(tf.time) for tf in target_frames)
            samples.append(WindowSample(
                inputs=inputs,
                targets=targets,
                anchor_time=anchor.time,
                target_times=tuple(tf.time for tf in target_frames),
                horizons=horizons,
                weeks=weeks,
            ))
    if not samples:
        warnings.warn(
            f"no windows: need at least {k + max_h} contiguous valid frames",
            stacklevel=2)
    return samples


def _normalize_week(spec) -> tuple[int | None, int]:
    """Accept an ISO week number, a (year, week) pair, or 'YYYY-Www'."""
    if isinstance(spec, bool):
        raise ConfigError(f"bad week spec {spec!r}")
    if isinstance(spec, int):
        if not 1 <= spec <= 53:
            raise ConfigError(f"week number {spec} outside 1..53")
        return (None, spec)
    if isinstance(spec, (tuple, list)) and len(spec) == 2:
        return (int(spec[0]), int(spec[1]))
    if isinstance(spec, str):
        parts = spec.upper().split("-W")
        if len(parts) == 2:
            try:
                return (int(parts[0]), int(parts[1]))
            except ValueError:
                pass
    raise ConfigError(f"bad week spec {spec!r}: use 3, (2024, 3), or '2024-W03'")


def _weeks_conflict(a: tuple[int | None, int], b: tuple[int | None, int]) -> bool:
    if a[1] != b[1]:
        return False
    return a[0] is None or b[0] is None or a[0] == b[0]


def _matches(sample_week: tuple[int, int], entries: list[tuple[int | None, int]]) -> bool:
    return any(e[1] == sample_week[1] and (e[0] is None or e[0] == sample_week[0])
               for e in entries)


def split_by_weeks(samples: Iterable[WindowSample],
                   train_weeks: Sequence, test_weeks: Sequence,
                   generality_weeks: Sequence = ()) -> tuple[
                       list[WindowSample], list[WindowSample], list[WindowSample]]:
    """Partition samples into train / test / generality by ISO week.

    A sample lands in a split only when every week it touches belongs to
    that split, so windows never straddle a boundary; straddlers are
    dropped. Week sets must not overlap.
    """
    groups = [[_normalize_week(w) for w in ws]
              for ws in (train_weeks, test_weeks, generality_weeks)]
    for gi in range(3):
        for gj in range(gi + 1, 3):
            for a in groups[gi]:
                for b in groups[gj]:
                    if _weeks_conflict(a, b):
                        raise ConfigError(
                            f"week {b[1]} assigned to more than one split")
    if not groups[0] or not groups[1]:
        raise ConfigError("train_weeks and test_weeks must both be non-empty")

    out: tuple[list[WindowSample], ...] = ([], [], [])
    for sample in samples:
        for bucket, entries in zip(out, groups):
            if entries and all(_matches(w, entries) for w in sample.weeks):
                bucket.append(sample)
                break
    return out


def compute_scaling(samples: Sequence[WindowSample]) -> tuple[np.ndarray, np.ndarray]:
    """Per-column min and max over every input frame of the given samples.

    Only the calendar/static columns are ever rescaled; the returned
    arrays still cover all 8 columns, with identity bounds (0, 1) on the
    untouched ones, so they can be stored and applied uniformly.
    """
    if not samples:
        raise DataError("compute_scaling: no samples")
    n_cols = len(FEATURE_COLUMNS)
    lo = np.zeros(n_cols)
    hi = np.ones(n_cols)
    stacked = np.concatenate([s.inputs.reshape(-1, n_cols) for s in samples])
    for c in SCALED_COLUMNS:
        lo[c] = float(np.min(stacked[:, c]))
        hi[c] = float(np.max(stacked[:, c]))
    return lo, hi


def apply_scaling(sample: WindowSample, lo: np.ndarray, hi: np.ndarray) -> WindowSample:
    """Min-max scale the input features of one sample; targets stay raw."""
    scaled = np.array(sample.inputs, copy=True)
    for c in SCALED_COLUMNS:
        span = hi[c] - lo[c]
        if span > 0:
            scaled[..., c] = (scaled[..., c] - lo[c]) / span
        else:
            scaled[..., c] = 0.0
    return WindowSample(
        inputs=scaled,
        targets=np.array(sample.targets, copy=True),
        anchor_time=sample.anchor_time,
        target_times=sample.target_times,
        horizons=sample.horizons,
        weeks=sample.weeks,
    )
