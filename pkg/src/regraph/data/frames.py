"""Feature frames on a uniform time grid.

Each frame is one grid timestamp with an n x 8 feature matrix, columns
[week_id, day_id, hour_id, travel_time, owner, amenity, capacity,
occupancy_rate]. Occupancy is (capacity - available) / capacity; values
above 1 are over-capacity and kept as-is. Missing grid points between two
known neighbors are filled with their average; runs longer than ``max_gap``
grid steps invalidate the affected frames instead of fabricating a bridge.
Calendar ids are recomputed from the grid timestamp, not copied from the
nearest record.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Mapping, Sequence

import numpy as np

from ..errors import DataError
from ..graph.build import SiteMeta
from .ingest import SiteRecord

__all__ = ["FEATURE_COLUMNS", "FeatureFrame", "interpolate_to_grid", "occupancy_rate"]

FEATURE_COLUMNS = ["week_id", "day_id", "hour_id", "travel_time",
                   "owner", "amenity", "capacity", "occupancy_rate"]

OCCUPANCY_COL = 7
SCALED_COLUMNS = (0, 1, 2, 3, 5, 6)  # owner is already 0/1, occupancy stays raw


def occupancy_rate(capacity: int, available: int) -> float:
    """Fraction of capacity in use; above 1 when a site has overflowed."""
    rate = (capacity - available) / capacity
    if rate < 0:
        raise DataError(f"occupancy below zero: capacity={capacity}, available={available}")
    return rate


@dataclass(frozen=True)
class FeatureFrame:
    time: datetime
    X: np.ndarray = field(repr=False)
    valid: bool = True

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != len(FEATURE_COLUMNS):
            raise DataError(
                f"feature frame at {self.time}: expected n x {len(FEATURE_COLUMNS)} "
                f"matrix, got {self.X.shape}")
        self.X.flags.writeable = False


_EPOCH = datetime(1970, 1, 1)


def _grid_cell(ts: datetime, step: timedelta) -> int:
    return (ts - _EPOCH) // step


def _cell_time(cell: int, step: timedelta) -> datetime:
    return _EPOCH + cell * step


def interpolate_to_grid(records: Mapping[str, Sequence[SiteRecord]],
                        sites: Sequence[SiteMeta],
                        grid_step_min: int = 10,
                        max_gap: int = 6) -> list[FeatureFrame]:
    """Resample per-site record streams onto a shared uniform grid.

    Returns one frame per grid timestamp spanning the data. A frame is
    valid only when every site has a known or fillable occupancy there;
    frames inside gaps wider than ``max_gap`` steps, or outside a site's
    observed range, come back with ``valid=False`` so windowing skips them.
    """
    if grid_step_min <= 0:
        raise DataError(f"grid_step_min must be positive, got {grid_step_min}")
    step = timedelta(minutes=grid_step_min)

    known_ids = {s.site_id for s in sites}
    for site_id in records:
        if site_id not in known_ids:
            raise DataError(f"records reference site {site_id} absent from site metadata")

    # Last observation within each grid cell wins.
    per_site: list[dict[int, float]] = []
    for s in sites:
        stream = records.get(s.site_id, ())
        if len(stream) < 2:
            raise DataError(f"site {s.site_id}: need at least 2 records, got {len(stream)}")
        cells: dict[int, float] = {}
        for rec in stream:
            cells[_grid_cell(rec.timestamp, step)] = occupancy_rate(s.capacity, rec.available)
        per_site.append(cells)

    first_cell = min(min(c) for c in per_site)
    last_cell = max(max(c) for c in per_site)
    n_cells = last_cell - first_cell + 1
    n = len(sites)

    occ = np.full((n, n_cells), np.nan)
    ok = np.zeros((n, n_cells), dtype=bool)
    for i, cells in enumerate(per_site):
        known = sorted(cells)
        for c in known:
            occ[i, c - first_cell] = cells[c]
            ok[i, c - first_cell] = True
        # Fill interior gaps no wider than max_gap with the flanking average.
        for left, right in zip(known, known[1:]):
            gap = right - left - 1
            if 0 < gap <= max_gap:
                fill = (cells[left] + cells[right]) / 2.0
                occ[i, left + 1 - first_cell:right - first_cell] = fill
                ok[i, left + 1 - first_cell:right - first_cell] = True

    static = np.array([[s.travel_time, float(s.owner), float(s.amenity_count),
                        float(s.capacity)] for s in sites])

    frames: list[FeatureFrame] = []
    for c in range(n_cells):
        t = _cell_time(first_cell + c, step)
        valid = bool(np.all(ok[:, c]))
        x = np.zeros((n, len(FEATURE_COLUMNS)))
        x[:, 0] = float(t.isocalendar()[1])
        x[:, 1] = float(t.weekday())
        x[:, 2] = float(t.hour)
        x[:, 3:7] = static
        x[:, OCCUPANCY_COL] = np.where(ok[:, c], occ[:, c], 0.0)
        frames.append(FeatureFrame(time=t, X=x, valid=valid))
    return frames
