"""Raw occupancy record ingestion.

A record is one report of free spaces at a site. ``available`` may be
negative: sites overflow, trucks park on ramps and shoulders, and the
occupancy rate derived downstream is then legitimately above 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from ..errors import DataError

__all__ = ["RECORDS_HEADER", "SiteRecord", "load_records"]

RECORDS_HEADER = ["site_id", "timestamp_iso8601", "available"]


@dataclass(frozen=True, order=True)
class SiteRecord:
    site_id: str
    timestamp: datetime
    available: int

    def __post_init__(self):
        if not self.site_id:
            raise DataError("record: empty site_id")
        if self.timestamp.tzinfo is not None:
            raise DataError(f"record {self.site_id}: timestamps must be naive UTC")


def _parse_timestamp(raw: str) -> datetime:
    ts = datetime.fromisoformat(raw)
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
    return ts


def load_records(path: str | Path) -> dict[str, list[SiteRecord]]:
    """Read the records CSV into per-site streams.

    Streams come back sorted by timestamp with duplicates collapsed (the
    last row read for a given site and timestamp wins), so timestamps are
    strictly increasing per site.
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open records file {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != RECORDS_HEADER:
            raise DataError(
                f"records file {path}: expected header {','.join(RECORDS_HEADER)}, "
                f"got {reader.fieldnames}"
            )
        latest: dict[str, dict[datetime, int]] = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                site_id = row["site_id"]
                ts = _parse_timestamp(row["timestamp_iso8601"])
                available = int(row["available"])
            except (TypeError, ValueError) as exc:
                raise DataError(f"records file {path} line {lineno}: {exc}") from exc
            if not site_id:
                raise DataError(f"records file {path} line {lineno}: empty site_id")
            latest.setdefault(site_id, {})[ts] = available

    streams: dict[str, list[SiteRecord]] = {}
    for site_id, by_time in latest.items():
        streams[site_id] = [SiteRecord(site_id, ts, by_time[ts]) for ts in sorted(by_time)]
    return streams
